//! Infinite-width covariances.
//!
//! `K^(2)_{jk} = C_b + C_W E[s(z_1(x_j)) s(z_1(x_k))]` and, for `l >= 3`,
//! `K^(l)_{jk} = C_b + C_W E[s(U) s(V)]` with `(U, V)` centered Gaussian with
//! the 2x2 restriction of `K^(l-1)`. Identity, ReLU and perceptron use closed
//! forms; everything else uses tensor quadrature on the Cholesky factor.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{Activation, ActivationKind, ActivationSpec, NetConfig, SimPlan, Simulator};
use crate::quadrature::{GaussianRule, QuadratureSpec};
use crate::rng::DEFAULT_STREAMS;

pub type Matrix = Vec<Vec<f64>>;

/// How an expectation was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodTag {
    ClosedForm,
    Quadrature { rule: String, nodes: usize },
    MonteCarlo { m: usize, stderr: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BivariateMoment {
    pub value: f64,
    pub abs_error: f64,
    pub method: MethodTag,
}

/// Tolerance on the smallest eigenvalue when checking positive semi-definiteness.
pub const PSD_TOL: f64 = 1e-10;
/// Correlations within this distance of +-1 collapse to one-dimensional quadrature.
const COLLAPSE_TOL: f64 = 1e-12;

/// A scalar integrand together with the points where it is rough.
pub struct Integrand<'a> {
    pub f: &'a (dyn Fn(f64) -> f64 + Sync),
    pub marks: Vec<f64>,
}

impl<'a> Integrand<'a> {
    pub fn of(act: &'a dyn Activation, f: &'a (dyn Fn(f64) -> f64 + Sync)) -> Self {
        let mut marks = act.breakpoints().to_vec();
        marks.extend_from_slice(act.features());
        Self { f, marks }
    }
}

/// `E[h(sqrt(variance) Z)]`.
pub fn expect_1d(rule: &dyn GaussianRule, h: &Integrand, variance: f64) -> f64 {
    if variance <= 0.0 {
        return (h.f)(0.0);
    }
    let s = variance.sqrt();
    let marks: Vec<f64> = h.marks.iter().map(|m| m / s).collect();
    rule.expect(&mut |z| (h.f)(s * z), &marks)
}

/// `E[f(U) g(V)]` for `(U, V) ~ N(0, [[vu, cuv], [cuv, vv]])`.
pub fn expect_2d(rule: &dyn GaussianRule, f: &Integrand, g: &Integrand, vu: f64, vv: f64, cuv: f64) -> f64 {
    let vu = vu.max(0.0);
    let vv = vv.max(0.0);
    if vu == 0.0 {
        return (f.f)(0.0) * expect_1d(rule, g, vv);
    }
    if vv == 0.0 {
        return (g.f)(0.0) * expect_1d(rule, f, vu);
    }
    let a = vu.sqrt();
    let rho = cuv / (vu * vv).sqrt();
    if rho.abs() >= 1.0 - COLLAPSE_TOL {
        let b = rho.signum() * vv.sqrt();
        let mut marks: Vec<f64> = f.marks.iter().map(|m| m / a).collect();
        marks.extend(g.marks.iter().map(|m| m / b));
        return rule.expect(&mut |z| (f.f)(a * z) * (g.f)(b * z), &marks);
    }
    let slope = cuv / a;
    let c = (vv - slope * slope).max(0.0).sqrt();
    let mut outer: Vec<f64> = f.marks.iter().map(|m| m / a).collect();
    if slope != 0.0 {
        outer.extend(g.marks.iter().map(|m| m / slope));
    }
    let mut inner = vec![0.0; g.marks.len()];
    rule.expect(
        &mut |z1| {
            let fu = (f.f)(a * z1);
            if fu == 0.0 {
                return 0.0;
            }
            let mu = slope * z1;
            for (dst, m) in inner.iter_mut().zip(&g.marks) {
                *dst = (m - mu) / c;
            }
            fu * rule.expect(&mut |z2| (g.f)(mu + c * z2), &inner)
        },
        &outer,
    )
}

fn check_psd_2x2(cov: &[[f64; 2]; 2]) -> Result<(f64, f64, f64)> {
    let (vu, vv) = (cov[0][0], cov[1][1]);
    let scale = 1.0f64.max(vu.abs()).max(vv.abs());
    if (cov[0][1] - cov[1][0]).abs() > 1e-12 * scale {
        return Err(Error::InvalidArgument("covariance is not symmetric".into()));
    }
    if !(vu.is_finite() && vv.is_finite() && cov[0][1].is_finite()) {
        return Err(Error::InvalidArgument("covariance has non-finite entries".into()));
    }
    let cuv = 0.5 * (cov[0][1] + cov[1][0]);
    let tr = vu + vv;
    let det = vu * vv - cuv * cuv;
    let disc = ((vu - vv) * (vu - vv) + 4.0 * cuv * cuv).sqrt();
    let lmin = if tr - disc > 0.0 { det / (0.5 * (tr + disc)) } else { 0.5 * (tr - disc) };
    if lmin < -PSD_TOL {
        return Err(Error::NotPsd(lmin));
    }
    Ok((vu.max(0.0), vv.max(0.0), cuv))
}

/// `E[s(U) s(V)]` with the default quadrature for non-closed-form activations.
pub fn bivariate_sigma_moment(act: &ActivationSpec, cov: [[f64; 2]; 2]) -> Result<BivariateMoment> {
    bivariate_sigma_moment_with(act, cov, &QuadratureSpec::default())
}

pub fn bivariate_sigma_moment_with(
    act: &ActivationSpec,
    cov: [[f64; 2]; 2],
    q: &QuadratureSpec,
) -> Result<BivariateMoment> {
    let (vu, vv, cuv) = check_psd_2x2(&cov)?;
    let f = act.function()?;
    if let Some(v) = f.bivariate_closed_form(vu, vv, cuv) {
        return Ok(BivariateMoment { value: v, abs_error: 0.0, method: MethodTag::ClosedForm });
    }
    let rule = q.build()?;
    let eval = |x: f64| f.eval(x);
    let h = Integrand::of(f.as_ref(), &eval);
    let value = expect_2d(rule.as_ref(), &h, &h, vu, vv, cuv);
    let coarse = QuadratureSpec::new(&q.rule, (q.order / 2).max(2)).build()?;
    let rough = expect_2d(coarse.as_ref(), &h, &h, vu, vv, cuv);
    Ok(BivariateMoment {
        value,
        abs_error: (value - rough).abs(),
        method: MethodTag::Quadrature { rule: q.rule.clone(), nodes: q.order },
    })
}

/// Bivariate moment by quadrature only (no closed form), for cross-checks.
pub fn bivariate_sigma_moment_quadrature(act: &ActivationSpec, cov: [[f64; 2]; 2], q: &QuadratureSpec) -> Result<f64> {
    let (vu, vv, cuv) = check_psd_2x2(&cov)?;
    let f = act.function()?;
    let rule = q.build()?;
    let eval = |x: f64| f.eval(x);
    let h = Integrand::of(f.as_ref(), &eval);
    Ok(expect_2d(rule.as_ref(), &h, &h, vu, vv, cuv))
}

/// `E[s(U)^2 s(V)^2]`, used for fourth moments of the limiting vector.
pub fn bivariate_square_moment(act: &ActivationSpec, cov: [[f64; 2]; 2], q: &QuadratureSpec) -> Result<f64> {
    let (vu, vv, cuv) = check_psd_2x2(&cov)?;
    let f = act.function()?;
    let rule = q.build()?;
    let sq = |x: f64| {
        let s = f.eval(x);
        s * s
    };
    let h = Integrand::of(f.as_ref(), &sq);
    Ok(expect_2d(rule.as_ref(), &h, &h, vu, vv, cuv))
}

/// `E[s'(G)]` for `G ~ N(0, variance)`.
pub fn expected_sigma_prime(act: &ActivationSpec, variance: f64) -> Result<f64> {
    expected_sigma_prime_with(act, variance, &QuadratureSpec::default())
}

pub fn expected_sigma_prime_with(act: &ActivationSpec, variance: f64, q: &QuadratureSpec) -> Result<f64> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::InvalidArgument(format!("variance must be positive, got {variance}")));
    }
    if act.kind == ActivationKind::Perceptron {
        return Err(Error::NoDerivative(act.name.clone()));
    }
    let f = act.function()?;
    if let Some(v) = f.expected_derivative_closed_form(variance) {
        return Ok(v);
    }
    if f.derivative(0.0).is_none() {
        return Err(Error::NoDerivative(act.name.clone()));
    }
    let rule = q.build()?;
    let der = |x: f64| f.derivative(x).unwrap_or(f64::NAN);
    let h = Integrand::of(f.as_ref(), &der);
    Ok(expect_1d(rule.as_ref(), &h, variance))
}

/// Covariance of the first-layer pre-activations, `C_b + C_W <x_j, x_k> / n0`.
pub fn layer1_covariance(cfg: &NetConfig) -> Matrix {
    let d = cfg.dims();
    let mut k = vec![vec![0.0; d]; d];
    for j in 0..d {
        for l in 0..=j {
            let dot: f64 = cfg.inputs[j].iter().zip(&cfg.inputs[l]).map(|(a, b)| a * b).sum();
            let v = cfg.c_b + cfg.c_w * dot / cfg.n0 as f64;
            k[j][l] = v;
            k[l][j] = v;
        }
    }
    k
}

/// How `K^(2)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum InitialMode {
    /// Gaussian first layer (or identity activation, whose moment only needs the covariance).
    Exact,
    MonteCarlo {
        m: usize,
        seed: u64,
    },
    /// Exact when possible, Monte Carlo otherwise.
    Auto {
        m: usize,
        seed: u64,
    },
}

impl Default for InitialMode {
    fn default() -> Self {
        Self::Auto { m: 200_000, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialKernel {
    pub matrix: Matrix,
    pub method: MethodTag,
    pub stderr: Option<Matrix>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    pub quadrature: QuadratureSpec,
    pub initial: InitialMode,
}

fn exact_possible(cfg: &NetConfig) -> bool {
    cfg.weights.is_gaussian() || cfg.activation.kind == ActivationKind::Identity
}

/// `K^(2)`.
pub fn kernel_initial(cfg: &NetConfig, mode: InitialMode, q: &QuadratureSpec) -> Result<InitialKernel> {
    let exact = match mode {
        InitialMode::Exact => {
            if !exact_possible(cfg) {
                return Err(Error::Precondition(format!(
                    "exact K^(2) needs Gaussian weights, got '{}'",
                    cfg.weights.kind()
                )));
            }
            true
        }
        InitialMode::Auto { .. } => exact_possible(cfg),
        InitialMode::MonteCarlo { .. } => false,
    };
    if exact {
        let cov1 = layer1_covariance(cfg);
        let (matrix, method, _) = step(cfg, &cov1, q)?;
        return Ok(InitialKernel { matrix, method, stderr: None });
    }
    let (m, seed) = match mode {
        InitialMode::MonteCarlo { m, seed } | InitialMode::Auto { m, seed } => (m, seed),
        InitialMode::Exact => unreachable!(),
    };
    if m < 2 {
        return Err(Error::InvalidArgument("Monte Carlo K^(2) needs m >= 2".into()));
    }
    let act = cfg.activation.function()?.clone();
    let sim = Simulator::new(cfg)?;
    let d = cfg.dims();
    let rows = sim.run(SimPlan { target: 1, full_target: false }, m, seed, DEFAULT_STREAMS, |t, _| {
        t.first_neuron(1).iter().map(|&v| act.eval(v)).collect::<Vec<f64>>()
    })?;
    let mut matrix = vec![vec![0.0; d]; d];
    let mut stderr = vec![vec![0.0; d]; d];
    let mut worst: f64 = 0.0;
    for j in 0..d {
        for k in 0..=j {
            let (mut s, mut s2) = (0.0, 0.0);
            for r in &rows {
                let p = r[j] * r[k];
                s += p;
                s2 += p * p;
            }
            let mean = s / m as f64;
            let var = ((s2 / m as f64) - mean * mean).max(0.0) * m as f64 / (m as f64 - 1.0);
            let v = cfg.c_b + cfg.c_w * mean;
            let e = cfg.c_w * (var / m as f64).sqrt();
            matrix[j][k] = v;
            matrix[k][j] = v;
            stderr[j][k] = e;
            stderr[k][j] = e;
            worst = worst.max(e);
        }
    }
    Ok(InitialKernel { matrix, method: MethodTag::MonteCarlo { m, stderr: worst }, stderr: Some(stderr) })
}

/// One application of the recursion: `C_b + C_W E[s(U) s(V)]` over all 2x2 restrictions of `prev`.
fn step(cfg: &NetConfig, prev: &Matrix, q: &QuadratureSpec) -> Result<(Matrix, MethodTag, f64)> {
    let d = prev.len();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|j| (0..=j).map(move |k| (j, k))).collect();
    let moments: Vec<BivariateMoment> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let cov = [[prev[j][j], prev[j][k]], [prev[k][j], prev[k][k]]];
            bivariate_sigma_moment_with(&cfg.activation, cov, q)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![vec![0.0; d]; d];
    let mut method = MethodTag::ClosedForm;
    let mut err: f64 = 0.0;
    for (&(j, k), bm) in pairs.iter().zip(&moments) {
        let v = cfg.c_b + cfg.c_w * bm.value;
        out[j][k] = v;
        out[k][j] = v;
        err = err.max(cfg.c_w * bm.abs_error);
        if bm.method != MethodTag::ClosedForm {
            method = bm.method.clone();
        }
    }
    Ok((out, method, err))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    let d = m.len();
    let a = DMatrix::from_fn(d, d, |i, j| 0.5 * (m[i][j] + m[j][i]));
    a.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn determinant(m: &Matrix) -> f64 {
    let d = m.len();
    DMatrix::from_fn(d, d, |i, j| m[i][j]).determinant()
}

fn check_psd(m: &Matrix) -> Result<()> {
    let l = min_eigenvalue(m);
    if l < -PSD_TOL {
        return Err(Error::NotPsd(l));
    }
    Ok(())
}

/// The limit covariances `K^(2), ..., K^(L+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSequence {
    pub dims: usize,
    pub c_b: f64,
    pub c_w: f64,
    /// `matrices[l - 2] = K^(l)`, row-major nested arrays.
    pub matrices: Vec<Matrix>,
    pub method_tags: Vec<MethodTag>,
    /// Per-entry standard errors where Monte Carlo was used.
    pub stderr: Vec<Option<Matrix>>,
    /// Quadrature error estimates (difference to half the order), per layer.
    pub quadrature_error: Vec<f64>,
}

impl KernelSequence {
    /// `K^(l)` for `2 <= l <= L+1`.
    pub fn get(&self, l: usize) -> Option<&Matrix> {
        l.checked_sub(2).and_then(|i| self.matrices.get(i))
    }

    pub fn k(&self, l: usize) -> &Matrix {
        self.get(l).unwrap_or_else(|| panic!("K^({l}) not in sequence"))
    }

    /// Last layer index `L + 1`.
    pub fn top(&self) -> usize {
        self.matrices.len() + 1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Extend `K^(2)` to `K^(L+1)`.
pub fn kernel_recursion(cfg: &NetConfig, k2: &InitialKernel, q: &QuadratureSpec) -> Result<KernelSequence> {
    let d = cfg.dims();
    if k2.matrix.len() != d || k2.matrix.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument(format!("K^(2) must be {d}x{d}")));
    }
    for j in 0..d {
        for k in 0..j {
            let (a, b) = (k2.matrix[j][k], k2.matrix[k][j]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::InvalidArgument("K^(2) is not symmetric".into()));
            }
        }
    }
    check_psd(&k2.matrix)?;
    let mut seq = KernelSequence {
        dims: d,
        c_b: cfg.c_b,
        c_w: cfg.c_w,
        matrices: vec![k2.matrix.clone()],
        method_tags: vec![k2.method.clone()],
        stderr: vec![k2.stderr.clone()],
        quadrature_error: vec![0.0],
    };
    for _ in 3..=cfg.depth() + 1 {
        let (next, method, err) = step(cfg, seq.matrices.last().expect("non-empty"), q)?;
        check_psd(&next)?;
        seq.matrices.push(next);
        seq.method_tags.push(method);
        seq.stderr.push(None);
        seq.quadrature_error.push(err);
    }
    Ok(seq)
}

/// `K^(2)` followed by the recursion.
pub fn compute_kernel(cfg: &NetConfig, opts: &KernelOptions) -> Result<KernelSequence> {
    let k2 = kernel_initial(cfg, opts.initial, &opts.quadrature)?;
    kernel_recursion(cfg, &k2, &opts.quadrature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::WeightLaw;
    use std::f64::consts::PI;

    fn q64() -> QuadratureSpec {
        QuadratureSpec::new("panel-legendre", 64)
    }

    #[test]
    fn documented_bivariate_values() {
        let id = bivariate_sigma_moment(&ActivationSpec::identity(), [[2.0, 0.5], [0.5, 3.0]]).unwrap();
        assert_eq!(id.value, 0.5);
        assert_eq!(id.abs_error, 0.0);
        let r = bivariate_sigma_moment(&ActivationSpec::relu(), [[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!((r.value - 0.5).abs() < 1e-15);
        let r0 = bivariate_sigma_moment(&ActivationSpec::relu(), [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((r0.value - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let t = bivariate_sigma_moment(&ActivationSpec::tanh(), [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(t.value.abs() < 1e-15);
        assert!(matches!(t.method, MethodTag::Quadrature { .. }));
    }

    #[test]
    fn quadrature_reproduces_closed_forms() {
        for act in [ActivationSpec::relu(), ActivationSpec::perceptron(), ActivationSpec::identity()] {
            for cov in [
                [[1.0, 0.3], [0.3, 2.0]],
                [[4.0, -1.9], [-1.9, 1.0]],
                [[0.1, 0.0999], [0.0999, 0.1]],
                [[9.0, 9.0], [9.0, 9.0]],
            ] {
                let cf = bivariate_sigma_moment(&act, cov).unwrap().value;
                let qd = bivariate_sigma_moment_quadrature(&act, cov, &q64()).unwrap();
                assert!((cf - qd).abs() < 1e-10, "{} {:?}: {cf} vs {qd}", act.name, cov);
            }
        }
    }

    #[test]
    fn non_psd_rejected() {
        assert!(matches!(
            bivariate_sigma_moment(&ActivationSpec::relu(), [[1.0, 2.0], [2.0, 1.0]]),
            Err(Error::NotPsd(_))
        ));
    }

    #[test]
    fn expected_derivatives() {
        assert_eq!(expected_sigma_prime(&ActivationSpec::relu(), 3.0).unwrap(), 0.5);
        assert_eq!(expected_sigma_prime(&ActivationSpec::identity(), 0.2).unwrap(), 1.0);
        assert!(expected_sigma_prime(&ActivationSpec::perceptron(), 1.0).is_err());
        let gh = QuadratureSpec::new("gauss-hermite", 128);
        let a = expected_sigma_prime_with(&ActivationSpec::tanh(), 1.0, &gh).unwrap();
        let b = expected_sigma_prime(&ActivationSpec::tanh(), 1.0).unwrap();
        assert!((a - b).abs() < 1e-10);
        // sigmoid' = s(1-s), E over N(0, v) tends to 1/4 as v -> 0
        let s = expected_sigma_prime(&ActivationSpec::sigmoid(), 1e-8).unwrap();
        assert!((s - 0.25).abs() < 1e-8);
    }

    #[test]
    fn exact_mode_needs_gaussian_weights() {
        let cfg = NetConfig::equal_width(
            2,
            8,
            2,
            0.1,
            1.0,
            ActivationSpec::tanh(),
            WeightLaw::rademacher(),
            vec![vec![1.0, 0.5]],
        )
        .unwrap();
        assert!(kernel_initial(&cfg, InitialMode::Exact, &QuadratureSpec::default()).is_err());
        let k = kernel_initial(&cfg, InitialMode::Auto { m: 1000, seed: 1 }, &QuadratureSpec::default()).unwrap();
        assert!(matches!(k.method, MethodTag::MonteCarlo { .. }));
    }

    #[test]
    fn kernel_json_round_trip() {
        let cfg = NetConfig::equal_width(
            2,
            8,
            3,
            0.1,
            1.2,
            ActivationSpec::tanh(),
            WeightLaw::gaussian(),
            vec![vec![1.0, 0.5], vec![-0.3, 0.2]],
        )
        .unwrap();
        let k = compute_kernel(&cfg, &KernelOptions::default()).unwrap();
        assert_eq!(k.matrices.len(), 3);
        assert_eq!(KernelSequence::from_json(&k.to_json().unwrap()).unwrap(), k);
    }
}
