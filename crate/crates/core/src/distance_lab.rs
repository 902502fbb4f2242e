//! Distances between a sample batch and a centered Gaussian reference.
//!
//! * `Kolmogorov1D`: sup of |F_m - Phi| at both one-sided limits of every
//!   order statistic; DKW radius.
//! * `Wasserstein1`: quantile coupling against `sqrt(v) Phi^{-1}((i - 1/2)/m)`;
//!   bootstrap radius.
//! * `MultiKolmogorov`: joint-CDF gap over quasi-random and sample corners.
//!   It is a lower bound on the true sup, and hence on the convex distance.
//! * `HalfSpaceSup`: 1-D Kolmogorov gap along fixed and random directions,
//!   also a lower bound on the convex distance.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit_kernel::{min_eigenvalue, Matrix};
use crate::net_model::SampleBatch;
use crate::rng::{derive_seed, stream_rng};
use crate::special::{bivariate_normal_cdf, normal_cdf, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistanceKind {
    #[serde(rename = "kolmogorov")]
    Kolmogorov1D,
    #[serde(rename = "wasserstein1")]
    Wasserstein1,
    #[serde(rename = "multi-kolmogorov")]
    MultiKolmogorov,
    #[serde(rename = "halfspace")]
    HalfSpaceSup,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 4] =
        [Self::Kolmogorov1D, Self::Wasserstein1, Self::MultiKolmogorov, Self::HalfSpaceSup];

    pub fn label(self) -> &'static str {
        match self {
            Self::Kolmogorov1D => "kolmogorov",
            Self::Wasserstein1 => "wasserstein1",
            Self::MultiKolmogorov => "multi-kolmogorov",
            Self::HalfSpaceSup => "halfspace",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown distance '{s}'")))
    }

    pub fn is_multivariate(self) -> bool {
        matches!(self, Self::MultiKolmogorov | Self::HalfSpaceSup)
    }
}

/// The Gaussian a batch is compared against (always centered).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

impl Reference {
    fn centered(covariance: Matrix) -> Self {
        Self { mean: vec![0.0; covariance.len()], covariance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub kind: DistanceKind,
    pub value: f64,
    pub statistical_error: f64,
    pub m: usize,
    pub reference: Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceOptions {
    pub confidence: f64,
    pub bootstrap: usize,
    /// Quasi-random corners for the joint CDF (at least 1000).
    pub grid: usize,
    /// Cap on joint-CDF evaluations, quasi-random plus sample corners.
    pub corner_cap: usize,
    pub directions: usize,
    pub seed: u64,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self { confidence: 0.99, bootstrap: 200, grid: 4096, corner_cap: 200_000, directions: 256, seed: 0xd157 }
    }
}

fn alpha(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    Ok(1.0 - confidence)
}

/// DKW radius `sqrt(ln(2/alpha) / (2m))`.
pub fn dkw_radius(m: usize, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * m as f64)).sqrt()
}

fn check_samples(x: &[f64], variance: f64) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if x.len() < 100 {
        return Err(Error::InvalidArgument(format!("at least 100 samples required, got {}", x.len())));
    }
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::InvalidArgument(format!("reference variance must be positive, got {variance}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("batch contains non-finite values".into()));
    }
    Ok(())
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    s
}

/// Kolmogorov gap of sorted data against `N(0, s^2)`.
fn ks_sorted(xs: &[f64], s: f64) -> f64 {
    let m = xs.len() as f64;
    let mut best: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = normal_cdf(x / s);
        let above = (i + 1) as f64 / m - f;
        let below = f - i as f64 / m;
        best = best.max(above).max(below);
    }
    best
}

pub fn kolmogorov_1d(samples: &[f64], variance: f64, confidence: f64) -> Result<DistanceEstimate> {
    check_samples(samples, variance)?;
    alpha(confidence)?;
    let xs = sorted(samples);
    Ok(DistanceEstimate {
        kind: DistanceKind::Kolmogorov1D,
        value: ks_sorted(&xs, variance.sqrt()),
        statistical_error: dkw_radius(xs.len(), confidence),
        m: xs.len(),
        reference: Reference::centered(vec![vec![variance]]),
    })
}

pub fn wasserstein1_1d(
    samples: &[f64],
    variance: f64,
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    check_samples(samples, variance)?;
    alpha(confidence)?;
    if resamples < 10 {
        return Err(Error::InvalidArgument("at least 10 bootstrap resamples required".into()));
    }
    let xs = sorted(samples);
    let m = xs.len();
    let s = variance.sqrt();
    let q: Vec<f64> = (0..m).map(|i| s * normal_quantile((i as f64 + 0.5) / m as f64)).collect();
    let value = xs.iter().zip(&q).map(|(x, q)| (x - q).abs()).sum::<f64>() / m as f64;
    // Resamples are drawn as multiplicities over the sorted sample, so no re-sorting is needed.
    let mut devs: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let mut counts = vec![0u32; m];
            for _ in 0..m {
                counts[rng.random_range(0..m)] += 1;
            }
            let mut pos = 0;
            let mut acc = 0.0;
            for (j, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    acc += (xs[j] - q[pos]).abs();
                    pos += 1;
                }
            }
            (acc / m as f64 - value).abs()
        })
        .collect();
    devs.sort_unstable_by(f64::total_cmp);
    let idx = ((confidence * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    Ok(DistanceEstimate {
        kind: DistanceKind::Wasserstein1,
        value,
        statistical_error: devs[idx],
        m,
        reference: Reference::centered(vec![vec![variance]]),
    })
}

fn single_component(batch: &SampleBatch) -> Result<&[f64]> {
    if batch.d != 1 {
        return Err(Error::InvalidArgument(format!(
            "one-dimensional estimator needs d = 1, batch has d = {} (use SampleBatch::component)",
            batch.d
        )));
    }
    Ok(&batch.values)
}

pub fn empirical_kolmogorov_1d(batch: &SampleBatch, variance: f64) -> Result<DistanceEstimate> {
    kolmogorov_1d(single_component(batch)?, variance, DistanceOptions::default().confidence)
}

pub fn empirical_wasserstein1_1d(batch: &SampleBatch, variance: f64) -> Result<DistanceEstimate> {
    let o = DistanceOptions::default();
    wasserstein1_1d(single_component(batch)?, variance, o.confidence, o.bootstrap, derive_seed(o.seed, &[batch.seed]))
}

fn check_cov(cov: &Matrix, d: usize) -> Result<()> {
    if cov.len() != d || cov.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument(format!("reference covariance must be {d}x{d}")));
    }
    let scale = (0..d).map(|i| cov[i][i].abs()).fold(1.0f64, f64::max);
    let l = min_eigenvalue(cov);
    if l <= 1e-12 * scale {
        return Err(Error::Singular(format!("smallest eigenvalue {l:e}")));
    }
    Ok(())
}

fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Gaussian orthant `P(Y <= t)` for `Y ~ N(0, cov)`, `d >= 3`, by randomized
/// lattice quasi-Monte Carlo on the Genz separation of variables.
struct QmcCdf {
    d: usize,
    chol: Vec<f64>,
    shifts: Vec<Vec<f64>>,
    gens: Vec<f64>,
}

impl QmcCdf {
    fn new(cov: &Matrix, seed: u64) -> Self {
        let d = cov.len();
        let flat: Vec<f64> = cov.iter().flatten().copied().collect();
        let mut chol = vec![0.0; d * d];
        crate::net_model::psd_cholesky(&flat, d, &mut chol);
        let mut rng = stream_rng(seed, 0);
        let shifts = (0..12).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let gens = PRIMES.iter().take(d).map(|&p| (p as f64).sqrt().fract()).collect();
        Self { d, chol, shifts, gens }
    }

    fn integrand(&self, t: &[f64], w: &[f64], y: &mut [f64]) -> f64 {
        let d = self.d;
        let mut prod = 1.0;
        for i in 0..d {
            let mut shift = 0.0;
            for j in 0..i {
                shift += self.chol[i * d + j] * y[j];
            }
            let e = normal_cdf((t[i] - shift) / self.chol[i * d + i]);
            prod *= e;
            if prod == 0.0 {
                return 0.0;
            }
            if i + 1 < d {
                y[i] = normal_quantile((w[i] * e).clamp(1e-300, 1.0 - 1e-16));
            }
        }
        prod
    }

    /// Returns (estimate, 3-sigma error), doubling points until the error is below `tol`.
    fn cdf(&self, t: &[f64], tol: f64) -> (f64, f64) {
        let mut n = 512usize;
        let mut y = vec![0.0; self.d];
        let mut w = vec![0.0; self.d];
        loop {
            let ests: Vec<f64> = self
                .shifts
                .iter()
                .map(|sh| {
                    let mut acc = 0.0;
                    for k in 1..=n {
                        for i in 0..self.d {
                            let u = (k as f64 * self.gens[i] + sh[i]).fract();
                            w[i] = (2.0 * u - 1.0).abs();
                        }
                        acc += self.integrand(t, &w, &mut y);
                    }
                    acc / n as f64
                })
                .collect();
            let s = ests.len() as f64;
            let mean = ests.iter().sum::<f64>() / s;
            let var = ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (s - 1.0);
            let err = 3.0 * (var / s).sqrt();
            if err <= tol || n >= 1 << 17 {
                return (mean, err);
            }
            n *= 2;
        }
    }
}

struct Fenwick(Vec<u32>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }
    /// Count of inserted ranks `< i`.
    fn prefix(&self, mut i: usize) -> u32 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Dominance counts in the plane: for each query `(tx, ty)` the number of
/// points with `x <= tx, y <= ty` (or strict `<` in both when `strict`).
fn dominance_counts_2d(points: &[(f64, f64)], queries: &[(f64, f64)], strict: bool) -> Vec<u32> {
    let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    ys.sort_unstable_by(f64::total_cmp);
    let mut pts = points.to_vec();
    pts.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut order: Vec<usize> = (0..queries.len()).collect();
    order.sort_unstable_by(|&a, &b| queries[a].0.total_cmp(&queries[b].0));
    let mut bit = Fenwick(vec![0; ys.len() + 1]);
    let mut out = vec![0; queries.len()];
    let mut next = 0;
    for qi in order {
        let (tx, ty) = queries[qi];
        while next < pts.len() && (if strict { pts[next].0 < tx } else { pts[next].0 <= tx }) {
            let r = ys.partition_point(|&y| y < pts[next].1);
            bit.add(r);
            next += 1;
        }
        let bound = if strict { ys.partition_point(|&y| y < ty) } else { ys.partition_point(|&y| y <= ty) };
        out[qi] = bit.prefix(bound);
    }
    out
}

/// Multivariate Kolmogorov distance proxy (a lower bound on the true sup).
pub fn empirical_multikolmogorov(
    batch: &SampleBatch,
    cov: &Matrix,
    grid: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    let o = DistanceOptions { grid, seed, ..DistanceOptions::default() };
    multikolmogorov(&batch.values, batch.d, cov, &o)
}

pub fn multikolmogorov(values: &[f64], d: usize, cov: &Matrix, o: &DistanceOptions) -> Result<DistanceEstimate> {
    if d < 2 {
        return Err(Error::InvalidArgument("multivariate Kolmogorov needs d >= 2".into()));
    }
    let a = alpha(o.confidence)?;
    if o.grid < 1000 {
        return Err(Error::InvalidArgument(format!("grid must hold at least 1000 corners, got {}", o.grid)));
    }
    let m = values.len() / d;
    if m == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    check_cov(cov, d)?;
    let sd: Vec<f64> = (0..d).map(|i| cov[i][i].sqrt()).collect();
    let mut corners: Vec<Vec<f64>> =
        (0..o.grid).map(|k| (0..d).map(|i| sd[i] * normal_quantile(halton(k + 20, PRIMES[i]))).collect()).collect();
    let qmc_corners = corners.len();
    // Sample corners are evaluated twice (closed and open orthant); d >= 3 uses
    // brute-force counting, so its corner budget shrinks with m.
    let budget = if d == 2 { o.corner_cap } else { o.corner_cap.min((200_000_000 / m).max(o.grid)) };
    let sample_corners = m.min(budget.saturating_sub(qmc_corners) / 2);
    for r in 0..sample_corners {
        corners.push(values[r * d..(r + 1) * d].to_vec());
    }
    let gauss = |t: &[f64], qmc: &Option<QmcCdf>| -> (f64, f64) {
        match qmc {
            None => {
                let rho = cov[0][1] / (sd[0] * sd[1]);
                (bivariate_normal_cdf(t[0] / sd[0], t[1] / sd[1], rho), 0.0)
            }
            Some(q) => q.cdf(t, 1e-4),
        }
    };
    let qmc = (d >= 3).then(|| QmcCdf::new(cov, derive_seed(o.seed, &[7])));
    let (closed, open): (Vec<f64>, Vec<f64>) = if d == 2 {
        let pts: Vec<(f64, f64)> = (0..m).map(|r| (values[2 * r], values[2 * r + 1])).collect();
        let qs: Vec<(f64, f64)> = corners.iter().map(|c| (c[0], c[1])).collect();
        let c = dominance_counts_2d(&pts, &qs, false);
        let s = dominance_counts_2d(&pts, &qs, true);
        (c.iter().map(|&v| v as f64 / m as f64).collect(), s.iter().map(|&v| v as f64 / m as f64).collect())
    } else {
        corners
            .par_iter()
            .map(|t| {
                let (mut le, mut lt) = (0usize, 0usize);
                for r in 0..m {
                    let row = &values[r * d..(r + 1) * d];
                    if row.iter().zip(t).all(|(x, c)| x <= c) {
                        le += 1;
                        if row.iter().zip(t).all(|(x, c)| x < c) {
                            lt += 1;
                        }
                    }
                }
                (le as f64 / m as f64, lt as f64 / m as f64)
            })
            .unzip()
    };
    let gaps: Vec<(f64, f64)> = corners
        .par_iter()
        .enumerate()
        .map(|(k, t)| {
            let (g, e) = gauss(t, &qmc);
            let mut gap = (closed[k] - g).abs();
            if k >= qmc_corners {
                gap = gap.max((open[k] - g).abs());
            }
            (gap, e)
        })
        .collect();
    let value = gaps.iter().map(|g| g.0).fold(0.0, f64::max).min(1.0);
    let qmc_err = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    let radius = ((d as f64 * (m as f64 + 1.0) / a).ln() / (2.0 * m as f64)).sqrt();
    Ok(DistanceEstimate {
        kind: DistanceKind::MultiKolmogorov,
        value,
        statistical_error: radius + qmc_err,
        m,
        reference: Reference::centered(cov.clone()),
    })
}

/// Direction set: coordinate axes, then normalized pairwise sums and
/// differences, then seeded uniform directions up to `count`.
pub fn halfspace_directions(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(count);
    for i in 0..d {
        let mut u = vec![0.0; d];
        u[i] = 1.0;
        dirs.push(u);
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            for s in [1.0, -1.0] {
                let mut u = vec![0.0; d];
                u[i] = h;
                u[j] = s * h;
                dirs.push(u);
            }
        }
    }
    let mut rng = stream_rng(seed, 0);
    while dirs.len() < count {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            dirs.push(g.into_iter().map(|v| v / n).collect());
        }
    }
    dirs.truncate(count.max(d));
    dirs
}

/// Half-space supremum proxy for the convex distance.
pub fn halfspace_sup(batch: &SampleBatch, cov: &Matrix, directions: usize, seed: u64) -> Result<DistanceEstimate> {
    let o = DistanceOptions { directions, seed, ..DistanceOptions::default() };
    halfspace(&batch.values, batch.d, cov, &o)
}

pub fn halfspace(values: &[f64], d: usize, cov: &Matrix, o: &DistanceOptions) -> Result<DistanceEstimate> {
    if d < 2 {
        return Err(Error::InvalidArgument("half-space supremum needs d >= 2".into()));
    }
    let a = alpha(o.confidence)?;
    if o.directions < 100 {
        return Err(Error::InvalidArgument(format!("at least 100 directions required, got {}", o.directions)));
    }
    if cov.len() != d || cov.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument(format!("reference covariance must be {d}x{d}")));
    }
    let m = values.len() / d;
    let dirs = halfspace_directions(d, o.directions, o.seed);
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    let gaps: Vec<f64> = dirs
        .par_iter()
        .map(|u| {
            let mut var = 0.0;
            for i in 0..d {
                for j in 0..d {
                    var += u[i] * cov[i][j] * u[j];
                }
            }
            if var <= 1e-14 * trace.max(1e-300) {
                return Err(Error::Singular(format!("reference variance {var:e} along direction {u:?}")));
            }
            let proj: Vec<f64> = (0..m).map(|r| (0..d).map(|i| u[i] * values[r * d + i]).sum()).collect();
            check_samples(&proj, var)?;
            Ok(ks_sorted(&sorted(&proj), var.sqrt()))
        })
        .collect::<Result<_>>()?;
    let value = gaps.into_iter().fold(0.0, f64::max);
    let radius = (((2.0 / a).ln() + (dirs.len() as f64).ln()) / (2.0 * m as f64)).sqrt();
    Ok(DistanceEstimate {
        kind: DistanceKind::HalfSpaceSup,
        value,
        statistical_error: radius,
        m,
        reference: Reference::centered(cov.clone()),
    })
}

/// Strategy interface: every estimator takes a batch and a reference covariance.
/// One-dimensional estimators use component `component` and its variance.
pub trait DistanceEstimator: Send + Sync {
    fn kind(&self) -> DistanceKind;
    fn estimate(
        &self,
        batch: &SampleBatch,
        cov: &Matrix,
        component: usize,
        o: &DistanceOptions,
    ) -> Result<DistanceEstimate>;
}

struct KolmogorovEst;
struct WassersteinEst;
struct MultiKolmogorovEst;
struct HalfSpaceEst;

fn component_and_variance(batch: &SampleBatch, cov: &Matrix, c: usize) -> Result<(Vec<f64>, f64)> {
    if c >= batch.d || cov.len() != batch.d {
        return Err(Error::InvalidArgument(format!("component {c} not available for d = {}", batch.d)));
    }
    Ok((batch.component(c), cov[c][c]))
}

impl DistanceEstimator for KolmogorovEst {
    fn kind(&self) -> DistanceKind {
        DistanceKind::Kolmogorov1D
    }
    fn estimate(&self, batch: &SampleBatch, cov: &Matrix, c: usize, o: &DistanceOptions) -> Result<DistanceEstimate> {
        let (x, v) = component_and_variance(batch, cov, c)?;
        kolmogorov_1d(&x, v, o.confidence)
    }
}

impl DistanceEstimator for WassersteinEst {
    fn kind(&self) -> DistanceKind {
        DistanceKind::Wasserstein1
    }
    fn estimate(&self, batch: &SampleBatch, cov: &Matrix, c: usize, o: &DistanceOptions) -> Result<DistanceEstimate> {
        let (x, v) = component_and_variance(batch, cov, c)?;
        wasserstein1_1d(&x, v, o.confidence, o.bootstrap, derive_seed(o.seed, &[batch.seed, c as u64]))
    }
}

impl DistanceEstimator for MultiKolmogorovEst {
    fn kind(&self) -> DistanceKind {
        DistanceKind::MultiKolmogorov
    }
    fn estimate(&self, batch: &SampleBatch, cov: &Matrix, _c: usize, o: &DistanceOptions) -> Result<DistanceEstimate> {
        multikolmogorov(&batch.values, batch.d, cov, o)
    }
}

impl DistanceEstimator for HalfSpaceEst {
    fn kind(&self) -> DistanceKind {
        DistanceKind::HalfSpaceSup
    }
    fn estimate(&self, batch: &SampleBatch, cov: &Matrix, _c: usize, o: &DistanceOptions) -> Result<DistanceEstimate> {
        halfspace(&batch.values, batch.d, cov, o)
    }
}

pub struct DistanceRegistry {
    estimators: BTreeMap<DistanceKind, Box<dyn DistanceEstimator>>,
}

impl DistanceRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self { estimators: BTreeMap::new() };
        r.register(Box::new(KolmogorovEst));
        r.register(Box::new(WassersteinEst));
        r.register(Box::new(MultiKolmogorovEst));
        r.register(Box::new(HalfSpaceEst));
        r
    }

    pub fn register(&mut self, e: Box<dyn DistanceEstimator>) {
        self.estimators.insert(e.kind(), e);
    }

    pub fn get(&self, kind: DistanceKind) -> Result<&dyn DistanceEstimator> {
        self.estimators
            .get(&kind)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::InvalidArgument(format!("no estimator registered for {}", kind.label())))
    }
}
