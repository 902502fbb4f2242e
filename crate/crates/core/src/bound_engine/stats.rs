//! Monte Carlo plug-ins for the semi-empirical bounds.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::moments::q_bound_theoretical_at;
use super::Constants;
use crate::error::{Error, Result};
use crate::limit_kernel::{bivariate_sigma_moment_quadrature, KernelSequence};
use crate::net_model::{ActivationSpec, NetConfig, SimPlan, Simulator};
use crate::quadrature::QuadratureSpec;
use crate::rng::DEFAULT_STREAMS;

/// Default cap on `n_l * m` (neuron-draws) for statistics that materialize a full layer.
pub const DEFAULT_WORK_CAP: f64 = 4e10;

const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Mean with a batch-means standard error over contiguous blocks.
    pub fn batch_means(x: &[f64]) -> Self {
        let m = x.len();
        let mean = x.iter().sum::<f64>() / m as f64;
        let b = BATCHES.min(m);
        if b < 2 {
            return Self { mean, stderr: f64::INFINITY };
        }
        let means: Vec<f64> = (0..b)
            .map(|k| {
                let s = &x[k * m / b..(k + 1) * m / b];
                s.iter().sum::<f64>() / s.len() as f64
            })
            .collect();
        let mm = means.iter().sum::<f64>() / b as f64;
        let var = means.iter().map(|v| (v - mm).powi(2)).sum::<f64>() / (b - 1) as f64;
        Self { mean, stderr: (var / b as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    pub layer: usize,
    pub p: u32,
    pub input: usize,
    pub empirical: Estimate,
    /// Theoretical bound on `Q_p`, `inf` when inapplicable.
    #[serde(with = "crate::serde_ext::real")]
    pub theoretical: f64,
    pub theoretical_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub m: usize,
    pub seed: u64,
    pub streams: usize,
    /// Inner draws per half for the nested estimate of `E[B_L^2]` (non-Gaussian weights).
    pub inner: usize,
    /// Also estimate the multi-input plug-ins (`||s(z)||^6`, `B_L`).
    pub multi: bool,
    pub work_cap: f64,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self { m: 20_000, seed: 0x57a7, streams: DEFAULT_STREAMS, inner: 16, multi: true, work_cap: DEFAULT_WORK_CAP }
    }
}

/// Empirical plug-ins at the last hidden layer `L`, one entry per input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub layer: usize,
    pub m: usize,
    pub seed: u64,
    /// `Q_2^(L)(x_i)`.
    pub q2: Vec<Estimate>,
    /// `E|s(z_1^(L)(x_i))|^6`.
    pub sigma_abs6: Vec<Estimate>,
    /// `E|s(z_1^(L)(x_i))|^4`.
    pub sigma_abs4: Vec<Estimate>,
    /// `E||s(z_1^(L)(X))||^6`.
    pub sigma_norm6: Option<Estimate>,
    /// `sum_{j,k} E[B_L(x_j, x_k)^2]`.
    pub b_sq_sum: Option<Estimate>,
}

fn guard(width: usize, m: usize, cap: f64) -> Result<()> {
    let work = width as f64 * m as f64;
    if work > cap {
        return Err(Error::MemoryGuard(format!("n_l * m = {work:e} exceeds the cap {cap:e}")));
    }
    Ok(())
}

/// Limit term of `B_L`, `E[s(G_j) s(G_k)] = (K^(L+1)_{jk} - C_b) / C_W`.
fn limit_products(cfg: &NetConfig, kernel: &KernelSequence) -> Vec<Vec<f64>> {
    let k = kernel.k(cfg.depth() + 1);
    k.iter().map(|row| row.iter().map(|v| (v - cfg.c_b) / cfg.c_w).collect()).collect()
}

fn conditional_moment(act: &ActivationSpec, cov: [[f64; 2]; 2], q: &QuadratureSpec) -> f64 {
    let f = act.function().expect("evaluable activation");
    let (vu, vv) = (cov[0][0].max(0.0), cov[1][1].max(0.0));
    // Round-off can push |c| a hair above sqrt(vu vv); clamp to the PSD boundary.
    let c = cov[0][1].clamp(-(vu * vv).sqrt(), (vu * vv).sqrt());
    if let Some(v) = f.bivariate_closed_form(vu, vv, c) {
        return v;
    }
    bivariate_sigma_moment_quadrature(act, [[vu, c], [c, vv]], q).unwrap_or(f64::NAN)
}

struct Draw {
    dev: Vec<f64>,
    s6: Vec<f64>,
    s4: Vec<f64>,
    norm6: f64,
    b2: f64,
}

pub fn collect_stats(cfg: &NetConfig, kernel: &KernelSequence, o: &StatsOptions) -> Result<EmpiricalStats> {
    let l = cfg.depth();
    let d = cfg.dims();
    if o.m < 2 {
        return Err(Error::InvalidArgument("at least 2 draws required".into()));
    }
    if kernel.get(l + 1).is_none() || kernel.dims != d {
        return Err(Error::InvalidArgument("kernel does not match the configuration".into()));
    }
    guard(cfg.width(l), o.m, o.work_cap)?;
    let sim = Simulator::new(cfg)?;
    let act = cfg.activation.function()?.clone();
    let k_top = kernel.k(l + 1);
    let limit = limit_products(cfg, kernel);
    let gaussian = cfg.weights.is_gaussian();
    let law = cfg.weights.distribution().clone();
    let inner_q = QuadratureSpec::new("gauss-hermite", 32);
    let (c_b, c_w) = (cfg.c_b, cfg.c_w);
    let want_b = o.multi && l >= 2;
    let inner = o.inner.max(1);
    let draws = sim.run(SimPlan { target: l, full_target: true }, o.m, o.seed, o.streams, |t, rng| {
        let top = t.layer(l);
        let n = top.width;
        let mut dev = vec![0.0; d];
        for j in 0..n {
            for (i, dv) in dev.iter_mut().enumerate() {
                let s = act.eval(top.z[j * d + i]);
                *dv += s * s;
            }
        }
        for (i, dv) in dev.iter_mut().enumerate() {
            *dv = c_w / n as f64 * *dv - k_top[i][i] + c_b;
        }
        let first: Vec<f64> = (0..d).map(|i| act.eval(top.z[i])).collect();
        let s6 = first.iter().map(|s| s.abs().powi(6)).collect();
        let s4 = first.iter().map(|s| s.abs().powi(4)).collect();
        let norm6 = first.iter().map(|s| s * s).sum::<f64>().powi(3);
        let mut b2 = 0.0;
        if want_b {
            let prev = t.layer(l - 1);
            let np = prev.width;
            let sp: Vec<f64> = prev.z.iter().map(|&z| act.eval(z)).collect();
            if gaussian {
                // Given F_{L-1}, z^(L)(X) ~ N(0, C_b + C_W S^T S / n).
                let mut cov = vec![0.0; d * d];
                for j in 0..np {
                    for a in 0..d {
                        for b in 0..=a {
                            cov[a * d + b] += sp[j * d + a] * sp[j * d + b];
                        }
                    }
                }
                for a in 0..d {
                    for b in 0..=a {
                        let v = c_b + c_w * cov[a * d + b] / np as f64;
                        let va = c_b + c_w * cov[a * d + a] / np as f64;
                        let vb = c_b + c_w * cov[b * d + b] / np as f64;
                        let e = conditional_moment(&cfg.activation, [[va, v], [v, vb]], &inner_q) - limit[a][b];
                        b2 += if a == b { e * e } else { 2.0 * e * e };
                    }
                }
            } else {
                // Two independent inner averages: their centered product is unbiased for the square.
                let scale = (c_w / np as f64).sqrt();
                let mut w = vec![0.0; np];
                let mut halves = [vec![0.0; d * d], vec![0.0; d * d]];
                let mut z = vec![0.0; d];
                for half in halves.iter_mut() {
                    for _ in 0..inner {
                        law.fill(rng, &mut w);
                        let bias = if c_b > 0.0 { c_b.sqrt() * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
                        z.iter_mut().for_each(|v| *v = 0.0);
                        for (j, wj) in w.iter().enumerate() {
                            for i in 0..d {
                                z[i] += wj * sp[j * d + i];
                            }
                        }
                        let s: Vec<f64> = z.iter().map(|v| act.eval(bias + scale * v)).collect();
                        for a in 0..d {
                            for b in 0..d {
                                half[a * d + b] += s[a] * s[b] / inner as f64;
                            }
                        }
                    }
                }
                for a in 0..d {
                    for b in 0..d {
                        b2 += (halves[0][a * d + b] - limit[a][b]) * (halves[1][a * d + b] - limit[a][b]);
                    }
                }
            }
        }
        Draw { dev, s6, s4, norm6, b2 }
    })?;
    let col = |f: &dyn Fn(&Draw) -> f64| Estimate::batch_means(&draws.iter().map(f).collect::<Vec<_>>());
    let per_input = |f: &dyn Fn(&Draw, usize) -> f64| (0..d).map(|i| col(&|dr| f(dr, i))).collect::<Vec<_>>();
    Ok(EmpiricalStats {
        layer: l,
        m: o.m,
        seed: o.seed,
        q2: per_input(&|dr, i| dr.dev[i] * dr.dev[i]),
        sigma_abs6: per_input(&|dr, i| dr.s6[i]),
        sigma_abs4: per_input(&|dr, i| dr.s4[i]),
        sigma_norm6: o.multi.then(|| col(&|dr| dr.norm6)),
        b_sq_sum: o.multi.then(|| if l >= 2 { col(&|dr| dr.b2) } else { Estimate { mean: 0.0, stderr: 0.0 } }),
    })
}

pub fn q_estimate_empirical(
    cfg: &NetConfig,
    layer: usize,
    p: u32,
    m: usize,
    seed: u64,
    kernel: &KernelSequence,
) -> Result<QEstimate> {
    q_estimate_empirical_at(cfg, 0, layer, p, m, seed, kernel, DEFAULT_WORK_CAP)
}

/// Monte Carlo estimate of `Q_p^(l)(x_input)` from `m` forward passes that
/// materialize every neuron of layer `l`.
#[allow(clippy::too_many_arguments)]
pub fn q_estimate_empirical_at(
    cfg: &NetConfig,
    input: usize,
    layer: usize,
    p: u32,
    m: usize,
    seed: u64,
    kernel: &KernelSequence,
    work_cap: f64,
) -> Result<QEstimate> {
    if layer == 0 || layer > cfg.depth() {
        return Err(Error::LayerOutOfRange { layer, max: cfg.depth() });
    }
    if m < 1000 {
        return Err(Error::InvalidArgument(format!("at least 1000 draws required, got {m}")));
    }
    if input >= cfg.dims() {
        return Err(Error::InvalidArgument(format!("input {input} out of range")));
    }
    let k_next = kernel
        .get(layer + 1)
        .ok_or_else(|| Error::InvalidArgument(format!("kernel lacks K^({})", layer + 1)))?[input][input];
    guard(cfg.width(layer), m, work_cap)?;
    let sim = Simulator::new(cfg)?;
    let act = cfg.activation.function()?.clone();
    let d = cfg.dims();
    let (c_b, c_w) = (cfg.c_b, cfg.c_w);
    let vals = sim.run(SimPlan { target: layer, full_target: true }, m, seed, DEFAULT_STREAMS, |t, _| {
        let s = t.layer(layer);
        let mut acc = 0.0;
        for j in 0..s.width {
            let v = act.eval(s.z[j * d + input]);
            acc += v * v;
        }
        (c_w / s.width as f64 * acc - k_next + c_b).abs().powi(p as i32)
    })?;
    // The lemma bounds Q_{2q}; odd orders go through Q_p <= Q_{p+1}^{p/(p+1)}.
    let even = p + p % 2;
    let (theoretical, theoretical_reason) =
        match q_bound_theoretical_at(cfg, input, layer, even / 2, &Constants::default()) {
            Ok(b) => ((b.ln_value * p as f64 / even as f64).exp(), None),
            Err(e) => (f64::INFINITY, Some(e.to_string())),
        };
    Ok(QEstimate { layer, p, input, empirical: Estimate::batch_means(&vals), theoretical, theoretical_reason })
}
