//! Seeded forward sampler.
//!
//! Each draw is a fresh network. Two layer kernels produce the same law:
//!
//! * Gaussian weights: given the previous layer's activations `S` (`n x d`),
//!   the neuron vectors `(z_j(x_1), ..., z_j(x_d))` are i.i.d.
//!   `N(0, C_b 11^T + C_W S^T S / n)`, so a layer costs `O(n d^2)` instead of
//!   `O(n^2 d)`. Every neuron is still materialized.
//! * Other laws: dense rows. Rademacher rows use 8 signs per random byte and
//!   256-entry partial-sum tables per block of 8 inputs.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::config::NetConfig;
use super::weights::{SamplingPath, WeightDistribution};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, stream_slice, StreamRng, DEFAULT_STREAMS};

/// `m` seeded draws of `z_1^{(layer)}` at each of the `d` inputs, row-major `m x d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub layer: usize,
    pub d: usize,
    pub m: usize,
    pub seed: u64,
    pub stream_count: usize,
    pub values: Vec<f64>,
}

impl SampleBatch {
    pub fn from_values(layer: usize, d: usize, values: Vec<f64>, seed: u64, stream_count: usize) -> Result<Self> {
        if d == 0 || !values.len().is_multiple_of(d) {
            return Err(Error::InvalidArgument("values length must be a multiple of d".into()));
        }
        Ok(Self { layer, d, m: values.len() / d, seed, stream_count, values })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.d..(r + 1) * self.d]
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.d).copied().collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Pre-activations of one layer, `z[j * d + i] = z_j(x_i)`.
#[derive(Debug, Clone, Default)]
pub struct LayerState {
    pub width: usize,
    pub z: Vec<f64>,
}

/// All layers of one draw, `layers[l - 1]` holding layer `l`.
pub struct Trace<'a> {
    pub d: usize,
    pub layers: &'a [LayerState],
}

impl Trace<'_> {
    pub fn layer(&self, l: usize) -> &LayerState {
        &self.layers[l - 1]
    }

    /// `z_1^{(l)}(x_i)` for all inputs.
    pub fn first_neuron(&self, l: usize) -> &[f64] {
        &self.layers[l - 1].z[..self.d]
    }
}

/// Which layers a run materializes: every layer up to `target`, the target
/// fully only when `full_target` is set (otherwise neuron 1 alone).
#[derive(Debug, Clone, Copy)]
pub struct SimPlan {
    pub target: usize,
    pub full_target: bool,
}

pub struct Simulator {
    cfg: NetConfig,
    act: Arc<dyn Activation>,
    law: Arc<dyn WeightDistribution>,
    path: SamplingPath,
    /// Input matrix laid out `n0 x d`.
    x: Vec<f64>,
    /// Cholesky factor of `X^T X` (Gaussian path, layer 1).
    x_chol: Vec<f64>,
}

struct Workspace {
    layers: Vec<LayerState>,
    act: Vec<f64>,
    row: Vec<f64>,
    gram: Vec<f64>,
    chol: Vec<f64>,
    tables: Vec<f64>,
    bytes: Vec<u8>,
    acc: Vec<f64>,
    g: Vec<f64>,
}

/// Rows of a byte-table block.
const BLOCK: usize = 8;

impl Simulator {
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let act = cfg.activation.function()?.clone();
        let law = cfg.weights.distribution().clone();
        let path = law.sampling_path();
        if path == SamplingPath::Unavailable {
            return Err(Error::NotSampleable(cfg.weights.kind().to_string()));
        }
        let d = cfg.dims();
        let mut x = vec![0.0; cfg.n0 * d];
        for (i, input) in cfg.inputs.iter().enumerate() {
            for (k, v) in input.iter().enumerate() {
                x[k * d + i] = *v;
            }
        }
        let mut gram = vec![0.0; d * d];
        gram_matrix(&x, cfg.n0, d, &mut gram);
        let mut x_chol = vec![0.0; d * d];
        psd_cholesky(&gram, d, &mut x_chol);
        Ok(Self { cfg: cfg.clone(), act, law, path, x, x_chol })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    /// Run `m` independent draws split over `streams` counter-based substreams,
    /// mapping each trace through `f`. Output order is the draw order.
    pub fn run<R, F>(&self, plan: SimPlan, m: usize, seed: u64, streams: usize, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(&Trace, &mut StreamRng) -> R + Sync,
    {
        let top = self.cfg.depth() + 1;
        if plan.target < 1 || plan.target > top {
            return Err(Error::LayerOutOfRange { layer: plan.target, max: top });
        }
        if m == 0 {
            return Err(Error::InvalidArgument("sample count m must be at least 1".into()));
        }
        if streams == 0 {
            return Err(Error::InvalidArgument("stream_count must be at least 1".into()));
        }
        let parts: Vec<Vec<R>> = (0..streams)
            .into_par_iter()
            .map(|s| {
                let range = stream_slice(m, streams, s);
                let mut rng = stream_rng(seed, s as u64);
                let mut ws = self.workspace(plan);
                let mut out = Vec::with_capacity(range.len());
                for _ in range {
                    self.draw(plan, &mut ws, &mut rng);
                    let trace = Trace { d: self.cfg.dims(), layers: &ws.layers };
                    out.push(f(&trace, &mut rng));
                }
                out
            })
            .collect();
        Ok(parts.into_iter().flatten().collect())
    }

    fn workspace(&self, plan: SimPlan) -> Workspace {
        let d = self.cfg.dims();
        let layers = (1..=plan.target)
            .map(|l| {
                let w = if l == plan.target && !plan.full_target { 1 } else { self.cfg.width(l) };
                LayerState { width: w, z: vec![0.0; w * d] }
            })
            .collect();
        let max_prev = (0..plan.target).map(|l| self.cfg.width(l)).max().unwrap_or(1);
        Workspace {
            layers,
            act: vec![0.0; max_prev * d],
            row: vec![0.0; max_prev],
            gram: vec![0.0; d * d],
            chol: vec![0.0; d * d],
            tables: Vec::new(),
            bytes: Vec::new(),
            acc: vec![0.0; d],
            g: vec![0.0; d],
        }
    }

    fn draw(&self, plan: SimPlan, ws: &mut Workspace, rng: &mut StreamRng) {
        let d = self.cfg.dims();
        for l in 1..=plan.target {
            let n_prev = self.cfg.width(l - 1);
            let (done, rest) = ws.layers.split_at_mut(l - 1);
            let out = &mut rest[0];
            let prev: &[f64] = if l == 1 {
                &self.x
            } else {
                let z = &done[l - 2].z;
                for (a, v) in ws.act[..n_prev * d].iter_mut().zip(z) {
                    *a = self.act.eval(*v);
                }
                &ws.act[..n_prev * d]
            };
            let scale = (self.cfg.c_w / n_prev as f64).sqrt();
            match self.path {
                SamplingPath::Gaussian => {
                    let chol: &[f64] = if l == 1 {
                        &self.x_chol
                    } else {
                        gram_matrix(prev, n_prev, d, &mut ws.gram);
                        psd_cholesky(&ws.gram, d, &mut ws.chol);
                        &ws.chol
                    };
                    self.gaussian_layer(chol, scale, out, &mut ws.g, rng);
                }
                SamplingPath::Rademacher if out.width >= 32 && n_prev >= BLOCK => {
                    build_sign_tables(prev, n_prev, d, &mut ws.tables);
                    ws.bytes.resize(n_prev.div_ceil(BLOCK), 0);
                    for j in 0..out.width {
                        let b = self.bias(rng);
                        rng.fill_bytes(&mut ws.bytes);
                        if d == 1 {
                            // Four independent partial sums hide the add latency.
                            let mut s = [0.0f64; 4];
                            for (c, quad) in ws.bytes.chunks(4).enumerate() {
                                for (k, &byte) in quad.iter().enumerate() {
                                    s[k] += ws.tables[((c * 4 + k) << 8) + byte as usize];
                                }
                            }
                            out.z[j] = b + scale * ((s[0] + s[1]) + (s[2] + s[3]));
                            continue;
                        }
                        ws.acc.iter_mut().for_each(|a| *a = 0.0);
                        for (blk, &byte) in ws.bytes.iter().enumerate() {
                            let t = &ws.tables[(blk * 256 + byte as usize) * d..][..d];
                            for (a, v) in ws.acc.iter_mut().zip(t) {
                                *a += v;
                            }
                        }
                        for i in 0..d {
                            out.z[j * d + i] = b + scale * ws.acc[i];
                        }
                    }
                }
                _ => {
                    for j in 0..out.width {
                        let b = self.bias(rng);
                        let row = &mut ws.row[..n_prev];
                        self.law.fill(rng, row);
                        ws.acc.iter_mut().for_each(|a| *a = 0.0);
                        for (k, w) in row.iter().enumerate() {
                            let p = &prev[k * d..(k + 1) * d];
                            for (a, v) in ws.acc.iter_mut().zip(p) {
                                *a += w * v;
                            }
                        }
                        for i in 0..d {
                            out.z[j * d + i] = b + scale * ws.acc[i];
                        }
                    }
                }
            }
        }
    }

    fn bias(&self, rng: &mut StreamRng) -> f64 {
        if self.cfg.c_b > 0.0 {
            self.cfg.c_b.sqrt() * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        }
    }

    fn gaussian_layer(&self, chol: &[f64], scale: f64, out: &mut LayerState, g: &mut [f64], rng: &mut StreamRng) {
        let d = g.len();
        for j in 0..out.width {
            let b = self.bias(rng);
            for v in g.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for i in 0..d {
                let mut acc = 0.0;
                for a in 0..=i {
                    acc += chol[i * d + a] * g[a];
                }
                out.z[j * d + i] = b + scale * acc;
            }
        }
    }
}

fn gram_matrix(s: &[f64], n: usize, d: usize, gram: &mut [f64]) {
    gram.iter_mut().for_each(|g| *g = 0.0);
    for k in 0..n {
        let row = &s[k * d..(k + 1) * d];
        for a in 0..d {
            for b in 0..=a {
                gram[a * d + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[b * d + a] = gram[a * d + b];
        }
    }
}

/// Lower Cholesky factor of a PSD Gram matrix; numerically null directions get a zero column.
pub(crate) fn psd_cholesky(a: &[f64], d: usize, l: &mut [f64]) {
    l.iter_mut().for_each(|v| *v = 0.0);
    let scale = (0..d).map(|i| a[i * d + i]).fold(0.0f64, f64::max);
    let tol = 1e-13 * scale;
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if diag <= tol {
            continue;
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = v / ljj;
        }
    }
}

/// `tables[(blk * 256 + byte) * d + i]` = signed sum of rows `8 blk ..` with bit `b` of `byte` giving the sign of row `8 blk + b`.
fn build_sign_tables(prev: &[f64], n: usize, d: usize, tables: &mut Vec<f64>) {
    let blocks = n.div_ceil(BLOCK);
    tables.resize(blocks * 256 * d, 0.0);
    for blk in 0..blocks {
        let r0 = blk * BLOCK;
        let cnt = BLOCK.min(n - r0);
        let t = &mut tables[blk * 256 * d..(blk + 1) * 256 * d];
        for i in 0..d {
            t[i] = -(0..cnt).map(|b| prev[(r0 + b) * d + i]).sum::<f64>();
        }
        for byte in 1..256usize {
            let low = byte.trailing_zeros() as usize;
            let base = byte & (byte - 1);
            for i in 0..d {
                let step = if low < cnt { 2.0 * prev[(r0 + low) * d + i] } else { 0.0 };
                t[byte * d + i] = t[base * d + i] + step;
            }
        }
    }
}

/// `m` draws of the first neuron of `layer` at every input, with the default stream count.
pub fn forward_sample(cfg: &NetConfig, layer: usize, m: usize, seed: u64) -> Result<SampleBatch> {
    forward_sample_streams(cfg, layer, m, seed, DEFAULT_STREAMS)
}

pub fn forward_sample_streams(
    cfg: &NetConfig,
    layer: usize,
    m: usize,
    seed: u64,
    streams: usize,
) -> Result<SampleBatch> {
    let sim = Simulator::new(cfg)?;
    let rows = sim
        .run(SimPlan { target: layer, full_target: false }, m, seed, streams, |t, _| t.first_neuron(layer).to_vec())?;
    Ok(SampleBatch {
        layer,
        d: cfg.dims(),
        m,
        seed,
        stream_count: streams,
        values: rows.into_iter().flatten().collect(),
    })
}
