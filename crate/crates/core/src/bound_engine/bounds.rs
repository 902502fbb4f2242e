//! The built-in bounds.
//!
//! Each bound is written as a product of named factors per additive term so
//! reports can be audited factor by factor.

use std::f64::consts::PI;
use std::sync::Arc;

use super::kernel_bounds::{ln_a, sigma_prime_table};
use super::moments::{ln_m_constant, moment_bound_at, moment_order, q_bound_theoretical_at, rosenthal_rate};
use super::{Bound, BoundContext, BoundId, BoundReport, Builder, Mode};
use crate::limit_kernel::{bivariate_square_moment, layer1_covariance, min_eigenvalue, Matrix};
use crate::net_model::ActivationKind;
use crate::special::{compensated_sum, ln_add_exp, ln_factorial, ln_sum_exp, LN_2};

struct Builtin(BoundId);

impl Bound for Builtin {
    fn id(&self) -> BoundId {
        self.0
    }

    fn evaluate(&self, ctx: &BoundContext) -> BoundReport {
        evaluate_builtin(self.0, ctx)
    }
}

pub fn builtin_bounds() -> Vec<Arc<dyn Bound>> {
    BoundId::ALL.iter().map(|&id| Arc::new(Builtin(id)) as Arc<dyn Bound>).collect()
}

pub(crate) fn evaluate_builtin(id: BoundId, ctx: &BoundContext) -> BoundReport {
    let mut b = Builder::new(id, ctx.constants);
    b.note("mode_theoretical", if ctx.mode == Mode::Theoretical { 1.0 } else { 0.0 });
    if !id.is_multi_input() {
        b.note("input", ctx.input as f64);
    }
    if let Err(e) = ctx.constants.validate() {
        b.fail(e.to_string());
        return b.finish();
    }
    if ctx.input >= ctx.cfg.dims() {
        b.fail(format!("input {} out of range (d = {})", ctx.input, ctx.cfg.dims()));
        return b.finish();
    }
    if ctx.kernel.top() != ctx.depth() + 1 || ctx.kernel.dims != ctx.cfg.dims() {
        b.fail("kernel sequence does not match the configuration");
        return b.finish();
    }
    if let Some(se) = ctx.kernel.stderr.first().and_then(|s| s.as_ref()) {
        let worst = se.iter().flatten().fold(0.0f64, |a, v| a.max(*v));
        b.note("kernel2_mc_stderr", worst);
    }
    match id {
        BoundId::KdistSemi => kdist_semi(ctx, &mut b),
        BoundId::WdistSemi => wdist_semi(ctx, &mut b),
        BoundId::FinaleUno => finale_uno(ctx, &mut b),
        BoundId::PresSecProb => pres_sec_prob(ctx, &mut b),
        BoundId::ModKG => mod_kg(ctx, &mut b),
        BoundId::PerceptronK | BoundId::PerceptronW => perceptron(ctx, &mut b, id == BoundId::PerceptronK),
        BoundId::IdentityK | BoundId::IdentityW => identity(ctx, &mut b, id == BoundId::IdentityK),
        BoundId::ReluK | BoundId::ReluW => relu(ctx, &mut b, id == BoundId::ReluK),
        BoundId::BoundedLip => bounded_lip(ctx, &mut b),
        BoundId::IdentityMultiDC => identity_multi_dc(ctx, &mut b),
    }
    b.finish()
}

/// `sum_{j=1}^L 1/n_j`.
fn inv_width_sum(ctx: &BoundContext) -> f64 {
    compensated_sum(ctx.cfg.widths.iter().map(|&n| 1.0 / n as f64))
}

fn ln_n_last(ctx: &BoundContext) -> f64 {
    (ctx.cfg.width(ctx.depth()) as f64).ln()
}

fn empirical<'a>(ctx: &BoundContext<'a>, b: &mut Builder) -> Option<&'a super::EmpiricalStats> {
    match ctx.stats {
        Some(s) if s.layer == ctx.depth() => Some(s),
        Some(s) => {
            b.fail(format!("statistics were collected at layer {}, bound needs layer {}", s.layer, ctx.depth()));
            None
        }
        None => {
            b.fail("empirical statistics not supplied");
            None
        }
    }
}

/// `ln sqrt(Q_2^(L)(x))`.
fn ln_sqrt_q2(ctx: &BoundContext, b: &mut Builder) -> Option<f64> {
    let l = ctx.depth();
    match ctx.mode {
        Mode::Empirical => {
            let s = empirical(ctx, b)?;
            let e = s.q2.get(ctx.input)?;
            b.note("q2_stderr", e.stderr);
            Some(0.5 * e.mean.max(0.0).ln())
        }
        Mode::Theoretical => {
            let q = b.take("Q_2 bound", q_bound_theoretical_at(ctx.cfg, ctx.input, l, 1, &ctx.constants))?;
            Some(0.5 * q.ln_value)
        }
    }
}

/// `ln` of a theoretical bound on `E|s(z^(L)(x_i))|^p`: the smaller of
/// `sup|s|^p` and `(|s(0)| + Lip M_p)^p`.
fn ln_sigma_moment_theoretical(ctx: &BoundContext, input: usize, p: u32, b: &mut Builder) -> Option<f64> {
    let act = &ctx.cfg.activation;
    let pf = p as f64;
    let sup = act.sup_norm.map(|s| pf * s.ln());
    let lip = match act.lipschitz() {
        Ok(lip) => moment_bound_at(ctx.cfg, input, ctx.depth(), p, &ctx.constants)
            .ok()
            .map(|m| pf * (act.value_at_zero.abs() + lip * m.value).ln()),
        Err(_) => None,
    };
    match (sup, lip) {
        (Some(a), Some(c)) => Some(a.min(c)),
        (Some(a), None) | (None, Some(a)) => Some(a),
        (None, None) => {
            b.fail(format!(
                "no bound on E|s(z)|^{p}: activation is neither bounded nor Lipschitz with finite weight moments"
            ));
            None
        }
    }
}

/// `ln E|s(z^(L)(x))|^p` for `p` in {4, 6}.
fn ln_sigma_moment(ctx: &BoundContext, p: u32, b: &mut Builder) -> Option<f64> {
    match ctx.mode {
        Mode::Empirical => {
            let s = empirical(ctx, b)?;
            let e = if p == 6 { s.sigma_abs6.get(ctx.input)? } else { s.sigma_abs4.get(ctx.input)? };
            b.note(&format!("sigma_abs{p}_stderr"), e.stderr);
            Some(e.mean.max(0.0).ln())
        }
        Mode::Theoretical => ln_sigma_moment_theoretical(ctx, ctx.input, p, b),
    }
}

fn top_variance(ctx: &BoundContext, b: &mut Builder) -> Option<f64> {
    let k = ctx.top_variance();
    if k > 0.0 && k.is_finite() {
        Some(k)
    } else {
        b.fail(format!("K^(L+1)(x, x) must be positive, got {k}"));
        None
    }
}

fn kdist_semi(ctx: &BoundContext, b: &mut Builder) {
    let cw = ctx.cfg.c_w;
    let cb = ctx.cfg.c_b;
    let k = top_variance(ctx, b);
    let w6 = b.take("E[W^6]", ctx.cfg.weights.ln_abs_moment(6));
    let sq = ln_sqrt_q2(ctx, b);
    let s6 = ln_sigma_moment(ctx, 6, b);
    let (Some(k), Some(w6), Some(sq), Some(s6)) = (k, w6, sq, s6) else { return };
    b.factor("1/K", 1.0 / k);
    b.ln_factor("sqrt(Q_2)", sq);
    b.plus();
    b.factor("C_W/K", cw / k);
    b.ln_factor("1/sqrt(n_L)", -0.5 * ln_n_last(ctx));
    b.ln_factor("E[W^6]^(1/2)", 0.5 * w6);
    b.ln_factor("1+E|s(z)|^6^(1/2)", ln_add_exp(0.0, 0.5 * s6));
    b.factor(
        "2sqrt(C_W/K)+2sqrt(C_W)(sqrt(C_b/K)+sqrt(2pi)/4)+5/2",
        2.0 * (cw / k).sqrt() + 2.0 * cw.sqrt() * ((cb / k).sqrt() + (2.0 * PI).sqrt() / 4.0) + 2.5,
    );
}

fn wdist_semi(ctx: &BoundContext, b: &mut Builder) {
    let cw = ctx.cfg.c_w;
    let k = top_variance(ctx, b);
    let w4 = b.take("E[W^4]", ctx.cfg.weights.ln_abs_moment(4));
    let sq = ln_sqrt_q2(ctx, b);
    let s4 = ln_sigma_moment(ctx, 4, b);
    let (Some(k), Some(w4), Some(sq), Some(s4)) = (k, w4, sq, s4) else { return };
    b.factor("C_W", cw);
    b.ln_factor("1/sqrt(n_L)", -0.5 * ln_n_last(ctx));
    b.factor("1/sqrt(K)", 1.0 / k.sqrt());
    b.ln_factor("E[W^4]^(3/4)", 0.75 * w4);
    b.ln_factor("E|s(z)|^4^(3/4)+1", ln_add_exp(0.0, 0.75 * s4));
    b.factor("4sqrt(C_W)/sqrt(K)+1/sqrt(2pi)", 4.0 * cw.sqrt() / k.sqrt() + 1.0 / (2.0 * PI).sqrt());
    b.plus();
    b.factor("sqrt(2/(K pi))", (2.0 / (k * PI)).sqrt());
    b.ln_factor("sqrt(Q_2)", sq);
}

/// `ln (4 sqrt(5 2^L) + A)` with `A = K P / log P`, `P = 5 2^{L+1}`.
fn ln_rate_bracket(l: usize, a: f64) -> f64 {
    (4.0 * (5.0 * 2f64.powi(l as i32)).sqrt() + a).ln()
}

fn finale_uno(ctx: &BoundContext, b: &mut Builder) {
    let cfg = ctx.cfg;
    let l = ctx.depth();
    let lf = l as f64;
    if cfg.c_b <= 0.0 {
        b.fail("requires C_b > 0");
    }
    let lip = b.take("Lipschitz constant", cfg.activation.lipschitz());
    let order = b.take("moment order", moment_order(l, 1));
    let wroot = order.and_then(|p| b.take("weight moment", cfg.weights.ln_moment_root(p)));
    let m1 = if cfg.c_b > 0.0 { b.take("M_1 constant", ln_m_constant(cfg, ctx.input, l, 1)) } else { None };
    let (Some(lip), Some(order), Some(wroot), Some(m1)) = (lip, order, wroot, m1) else { return };
    let a = rosenthal_rate(ctx.constants.k_rosenthal, order);
    let cw = cfg.c_w;
    b.factor("7", 7.0);
    b.ln_factor("2^(4L+16)", (4.0 * lf + 16.0) * LN_2);
    b.factor("1+1/C_b", 1.0 + 1.0 / cfg.c_b);
    b.ln_factor("M_1^(L)(x)^((L+1)/2)", 0.5 * (lf + 1.0) * m1);
    b.factor("(sum 1/n_j)^(1/2)", inv_width_sum(ctx).sqrt());
    b.ln_factor("(1+(2C_W Lip^2)^L)^(L+1)", (lf + 1.0) * ln_add_exp(0.0, lf * (2.0 * cw * lip * lip).ln()));
    b.ln_factor("L^(3L+11)", (3.0 * lf + 11.0) * lf.ln());
    b.ln_factor("(4sqrt(5 2^L)+A)^(2L+10)", (2.0 * lf + 10.0) * ln_rate_bracket(l, a));
    let inner = (6.0 * a * cw.sqrt() * lip).ln() + wroot;
    b.ln_factor("(8+(6A sqrt(C_W) Lip wroot)^L)^(L/2+3)", (0.5 * lf + 3.0) * ln_add_exp(8f64.ln(), lf * inner));
    b.note("A", a);
}

fn covariance_of(m: &Matrix, i: usize, j: usize) -> [[f64; 2]; 2] {
    [[m[i][i], m[i][j]], [m[j][i], m[j][j]]]
}

fn lambda2(ctx: &BoundContext, b: &mut Builder) -> Option<f64> {
    let k2 = ctx.kernel.k(2);
    let lambda = min_eigenvalue(k2);
    let scale = (0..k2.len()).map(|i| k2[i][i]).fold(0.0f64, f64::max);
    b.note("lambda_min_K2", lambda);
    if lambda > 1e-14 * scale.max(f64::MIN_POSITIVE) {
        Some(lambda)
    } else {
        b.fail(format!("K^(2) is singular (smallest eigenvalue {lambda:.3e})"));
        None
    }
}

fn pres_sec_prob(ctx: &BoundContext, b: &mut Builder) {
    let cfg = ctx.cfg;
    let d = cfg.dims();
    let l = ctx.depth();
    let (df, lf) = (d as f64, l as f64);
    if d < 2 {
        b.fail("requires at least two inputs");
        return;
    }
    if cfg.c_b <= 0.0 {
        b.fail("requires C_b > 0");
    }
    let lip = b.take("Lipschitz constant", cfg.activation.lipschitz());
    let order = b.take("moment order", moment_order(l, 1));
    let wroot = order.and_then(|p| b.take("weight moment", cfg.weights.ln_moment_root(p)));
    let lambda = lambda2(ctx, b);
    let table = b.take("E[s'] table", sigma_prime_table(cfg, ctx.kernel, l, &ctx.quadrature));
    let m2: Option<Vec<f64>> = if cfg.c_b > 0.0 {
        (0..d).map(|i| b.take("M_2 constant", ln_m_constant(cfg, i, l, 2))).collect()
    } else {
        None
    };
    let (Some(lip), Some(order), Some(wroot), Some(lambda), Some(table), Some(m2)) =
        (lip, order, wroot, lambda, table, m2)
    else {
        return;
    };
    for (r, row) in table.iter().enumerate() {
        for (i, e) in row.iter().enumerate() {
            if e.abs() < 1e-12 {
                let stated = i + 1 < d;
                b.fail(format!(
                    "E[s'(G^({})(x_{}))] vanishes{}",
                    r + 2,
                    i + 1,
                    if stated { "" } else { " (outside the stated index range; the formula diverges)" }
                ));
            }
        }
    }
    if !b.ok() {
        return;
    }
    let a = rosenthal_rate(ctx.constants.k_rosenthal, order);
    let (cw, cb) = (cfg.c_w, cfg.c_b);
    let x4: f64 = compensated_sum((0..d).map(|i| cfg.input_norm(i).powi(4)));
    let n0 = cfg.n0 as f64;
    b.factor("C", ctx.constants.c_universal);
    b.ln_factor("d^(d+6)", (df + 6.0) * df.ln());
    b.ln_factor("(L+1)^(3L+d+20)", (3.0 * lf + df + 20.0) * (lf + 1.0).ln());
    b.factor("(sum 1/n_j)^(1/2)", inv_width_sum(ctx).sqrt());
    b.ln_factor("(1+C_W+1/C_W)^(4d+dL-4)", (4.0 * df + df * lf - 4.0) * (1.0 + cw + 1.0 / cw).ln());
    b.ln_factor("(1+C_b)^(2d-2)", (2.0 * df - 2.0) * (1.0 + cb).ln());
    b.ln_factor("(1+|s(0)|)^4", 4.0 * (1.0 + cfg.activation.value_at_zero.abs()).ln());
    b.ln_factor("(9d+sum||x||^4/n0^2)^(d-1)", (df - 1.0) * (9.0 * df + x4 / (n0 * n0)).ln());
    b.ln_factor("(2+(2C_W Lip^2)^(2L))^(L+d)", (lf + df) * ln_add_exp(LN_2, 2.0 * lf * (2.0 * cw * lip * lip).ln()));
    let inner = (a * cw.sqrt() * lip).ln() + wroot;
    b.ln_factor("(2+(A sqrt(C_W) Lip wroot)^(L-1))^(L/2+24)", (0.5 * lf + 24.0) * ln_add_exp(LN_2, (lf - 1.0) * inner));
    let m_terms: Vec<f64> = m2.iter().map(|m| ln_add_exp(0.0, (0.5 * lf + 2.0) * m)).collect();
    b.ln_factor("sum(1+M_2^(L)(x_i)^(L/2+2))", ln_sum_exp(&m_terms));
    b.ln_factor("2^(4L)", 4.0 * lf * LN_2);
    b.ln_factor("(4sqrt(5 2^L)+A)^(2L+8)", (2.0 * lf + 8.0) * ln_rate_bracket(l, a));
    let ln_dfact = ln_factorial(d as u32);
    let inner: Vec<f64> =
        (2..=l + 1).map(|layer| -ln_dfact - (0..d).map(|k| ln_a(&table, layer, k)).sum::<f64>()).collect();
    let tail = ln_dfact - 2.0 * df * lambda.ln() + ln_sum_exp(&inner);
    b.ln_factor("1+d! lambda^(-2d) sum(nested)^(-1)", ln_add_exp(0.0, tail));
    b.note("A", a);
}

/// `ln E||s(G^(L)(X))||^4 = ln sum_ij E[s(G_i)^2 s(G_j)^2]`.
fn ln_gaussian_norm4(ctx: &BoundContext, b: &mut Builder) -> Option<f64> {
    let l = ctx.depth();
    let cov = if l == 1 { layer1_covariance(ctx.cfg) } else { ctx.kernel.k(l).clone() };
    let d = cov.len();
    let mut terms = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            terms.push(b.take(
                "E[s(G_i)^2 s(G_j)^2]",
                bivariate_square_moment(&ctx.cfg.activation, covariance_of(&cov, i, j), &ctx.quadrature),
            )?);
        }
    }
    Some(compensated_sum(terms).max(0.0).ln())
}

/// `ln E||s(z^(L)(X))||^6`.
fn ln_norm6(ctx: &BoundContext, b: &mut Builder) -> Option<f64> {
    let d = ctx.cfg.dims();
    match ctx.mode {
        Mode::Empirical => {
            let s = empirical(ctx, b)?;
            let Some(e) = s.sigma_norm6 else {
                b.fail("statistics lack E||s(z)||^6");
                return None;
            };
            b.note("sigma_norm6_stderr", e.stderr);
            Some(e.mean.max(0.0).ln())
        }
        Mode::Theoretical => {
            let act = &ctx.cfg.activation;
            if let Some(sup) = act.sup_norm {
                return Some(3.0 * (d as f64).ln() + 6.0 * sup.ln());
            }
            let per: Option<Vec<f64>> = (0..d).map(|i| ln_sigma_moment_theoretical(ctx, i, 6, b)).collect();
            Some(2.0 * (d as f64).ln() + ln_sum_exp(&per?))
        }
    }
}

/// `ln (sum_i E[B_L(x_i)^2])^(1/2)`.
fn ln_b_root(ctx: &BoundContext, b: &mut Builder) -> Option<f64> {
    let cfg = ctx.cfg;
    let l = ctx.depth();
    if l == 1 {
        return Some(f64::NEG_INFINITY);
    }
    match ctx.mode {
        Mode::Empirical => {
            let s = empirical(ctx, b)?;
            let Some(e) = s.b_sq_sum else {
                b.fail("statistics lack sum E[B_L^2]");
                return None;
            };
            b.note("b_sq_sum_stderr", e.stderr);
            Some(0.5 * e.mean.max(0.0).ln())
        }
        Mode::Theoretical => {
            if cfg.activation.kind != ActivationKind::Identity {
                b.fail("no theoretical bound on the B term for this activation; use empirical mode");
                return None;
            }
            let w4 = b.take("E[W^4]", cfg.weights.ln_abs_moment(4))?;
            let d = cfg.dims() as f64;
            let lf = l as f64;
            let n0 = cfg.n0 as f64;
            let g = (8.0 * cfg.c_w.max(1.0).powi(2)).ln() + 0.5 * w4;
            let xs: f64 = compensated_sum((0..cfg.dims()).map(|i| {
                let x = &cfg.inputs[i];
                let q4: f64 = x.iter().map(|v| v.powi(4)).sum();
                cfg.input_norm(i).powi(2) / n0 + (q4 / n0).sqrt()
            }));
            let first =
                if cfg.c_b > 0.0 { (4.0 * 3f64.sqrt() * d * lf * cfg.c_b).ln() + lf * g } else { f64::NEG_INFINITY };
            let second = if xs > 0.0 { lf * g + xs.ln() } else { f64::NEG_INFINITY };
            let widths: f64 = compensated_sum((1..l).map(|k| 1.0 / cfg.width(l - k) as f64));
            Some(0.5 * LN_2 + ln_add_exp(first, second) + 0.5 * widths.ln())
        }
    }
}

fn mod_kg(ctx: &BoundContext, b: &mut Builder) {
    let cfg = ctx.cfg;
    let d = cfg.dims() as f64;
    let cw = cfg.c_w;
    let w6 = b.take("E|W|^6", cfg.weights.ln_abs_moment(6));
    let top = ctx.kernel.k(ctx.depth() + 1);
    let lambda = min_eigenvalue(top);
    b.note("lambda_min_K_top", lambda);
    if !(lambda > 0.0) {
        b.fail(format!("K^(L+1) is singular (smallest eigenvalue {lambda:.3e})"));
    }
    let n6 = ln_norm6(ctx, b);
    let g4 = ln_gaussian_norm4(ctx, b);
    let broot = ln_b_root(ctx, b);
    let (Some(w6), Some(n6), Some(g4), Some(broot)) = (w6, n6, g4, broot) else { return };
    if !b.ok() {
        return;
    }
    let prefactor = |b: &mut Builder| {
        b.factor("541", 541.0);
        b.ln_factor("d^4", 4.0 * d.ln());
        b.factor("sqrt(C_W)(1+C_W)", cw.sqrt() * (1.0 + cw));
        b.ln_factor("max{1,1/lambda_min(K^(L+1))^2}", (-2.0 * lambda.ln()).max(0.0));
        b.ln_factor("E|W|^6^(1/2)", 0.5 * w6);
        b.ln_factor("1/sqrt(n_L)", -0.5 * ln_n_last(ctx));
    };
    prefactor(b);
    b.ln_factor("43(1+E||s(z)||^6^(1/2)+E||s(G)||^4^(1/2))", 43f64.ln() + ln_sum_exp(&[0.0, 0.5 * n6, 0.5 * g4]));
    b.plus();
    prefactor(b);
    b.ln_factor("sqrt(2) sqrt(n_L)", 0.5 * LN_2 + 0.5 * ln_n_last(ctx));
    b.ln_factor("(sum E[B_L^2])^(1/2)", broot);
}

fn gaussian_weights(ctx: &BoundContext, b: &mut Builder) {
    if !ctx.cfg.weights.is_gaussian() {
        b.fail(format!("requires Gaussian weights, got '{}'", ctx.cfg.weights.kind()));
    }
}

fn require_activation(ctx: &BoundContext, b: &mut Builder, kind: ActivationKind) {
    if ctx.cfg.activation.kind != kind {
        b.fail(format!("requires the {} activation, got '{}'", kind.label(), ctx.cfg.activation.name));
    }
}

fn perceptron(ctx: &BoundContext, b: &mut Builder, kolmogorov: bool) {
    require_activation(ctx, b, ActivationKind::Perceptron);
    gaussian_weights(ctx, b);
    if !b.ok() {
        return;
    }
    let cw = ctx.cfg.c_w;
    let kp = ctx.cfg.c_b + cw / 2.0;
    b.ln_factor("1/sqrt(n_L)", -0.5 * ln_n_last(ctx));
    if kolmogorov {
        b.factor("8C_W/K", 8.0 * cw / kp);
        b.factor(
            "2sqrt(C_W/K)+2sqrt(C_W)(sqrt(C_W/K)+sqrt(2pi)/4)+7/2",
            2.0 * (cw / kp).sqrt() + 2.0 * cw.sqrt() * ((cw / kp).sqrt() + (2.0 * PI).sqrt() / 4.0) + 3.5,
        );
    } else {
        b.factor("6C_W/sqrt(K)", 6.0 * cw / kp.sqrt());
        b.factor("3sqrt(C_W/K)+1/sqrt(2pi)", 3.0 * (cw / kp).sqrt() + 1.0 / (2.0 * PI).sqrt());
    }
}

fn identity(ctx: &BoundContext, b: &mut Builder, kolmogorov: bool) {
    let cfg = ctx.cfg;
    require_activation(ctx, b, ActivationKind::Identity);
    gaussian_weights(ctx, b);
    if cfg.c_b != 0.0 || cfg.c_w != 1.0 {
        b.fail(format!("requires C_b = 0 and C_W = 1, got C_b = {}, C_W = {}", cfg.c_b, cfg.c_w));
    }
    let x = cfg.input_norm(ctx.input);
    if !(x > 0.0) {
        b.fail("requires a nonzero input");
    }
    if !b.ok() {
        return;
    }
    let n0 = cfg.n0 as f64;
    let rn = n0.sqrt();
    let s = inv_width_sum(ctx).sqrt();
    if kolmogorov {
        let r15 = 15f64.sqrt();
        b.factor("2sqrt(15)", 2.0 * r15);
        b.factor(
            "(2n0/||x||^2+5sqrt(n0)/||x||+sqrt(15)||x||^2+1)^2",
            (2.0 * n0 / (x * x) + 5.0 * rn / x + r15 * x * x + 1.0).powi(2),
        );
    } else {
        b.factor("4", 4.0);
        b.factor("1+sqrt(n0)/||x||+3||x||^2", 1.0 + rn / x + 3.0 * x * x);
        b.factor("4sqrt(n0)/||x||+||x||/sqrt(n0)+1", 4.0 * rn / x + x / rn + 1.0);
    }
    b.factor("(sum 1/n_j)^(1/2)", s);
}

fn relu(ctx: &BoundContext, b: &mut Builder, kolmogorov: bool) {
    let cfg = ctx.cfg;
    require_activation(ctx, b, ActivationKind::Relu);
    gaussian_weights(ctx, b);
    if cfg.c_b != 0.0 {
        b.fail(format!("requires C_b = 0, got {}", cfg.c_b));
    }
    if !b.ok() {
        return;
    }
    let lf = ctx.depth() as f64;
    let half = cfg.c_w / 2.0;
    let s = inv_width_sum(ctx).sqrt();
    if kolmogorov {
        let x = cfg.input_norm(ctx.input);
        b.factor("3sqrt(5)", 3.0 * 5f64.sqrt());
        b.factor(
            "7+2(C_W/2)^(L-1)+sqrt(5pi)||x||/sqrt(n0)(C_W/2)^((L+1)/2)",
            7.0 + 2.0 * half.powf(lf - 1.0)
                + (5.0 * PI).sqrt() * x / (cfg.n0 as f64).sqrt() * half.powf((lf + 1.0) / 2.0),
        );
    } else {
        // The limit is unnormalized here, so the scale sqrt(K^(L+1)) enters.
        b.factor("sqrt(K^(L+1))", ctx.top_variance().max(0.0).sqrt());
        b.factor("8(1+(C_W/2)^(L-1))", 8.0 * (1.0 + half.powf(lf - 1.0)));
    }
    b.factor("(sum 1/n_j)^(1/2)", s);
}

fn bounded_lip(ctx: &BoundContext, b: &mut Builder) {
    let cfg = ctx.cfg;
    let sup = cfg.activation.sup_norm;
    if sup.is_none() {
        b.fail(format!("requires a bounded activation, got '{}'", cfg.activation.name));
    }
    let _ = b.take("Lipschitz constant", cfg.activation.lipschitz());
    if cfg.c_b <= 0.0 {
        b.fail("requires C_b > 0");
    }
    let w6 = b.take("E[W^6]", cfg.weights.ln_abs_moment(6));
    let w4 = b.take("E[W^4]", cfg.weights.ln_abs_moment(4));
    let w3 = b.take("E|W|^3", cfg.weights.ln_abs_moment(3));
    let (Some(sup), Some(w6), Some(w4), Some(w3)) = (sup, w6, w4, w3) else { return };
    if !b.ok() {
        return;
    }
    let (cw, cb) = (cfg.c_w, cfg.c_b);
    let l = ctx.depth();
    let ratio = 6.0 * cw / (PI * cb);
    b.factor("C_W(1+sqrt(C_W))", cw * (1.0 + cw.sqrt()));
    b.ln_factor("1/sqrt(n_L)", -0.5 * ln_n_last(ctx));
    b.factor("(2+1/C_b)^2", (2.0 + 1.0 / cb).powi(2));
    b.factor("8+2sqrt(C_b)", 8.0 + 2.0 * cb.sqrt());
    b.factor("sup^3+1", sup.powi(3) + 1.0);
    b.ln_factor("E[W^6]^(1/2)", 0.5 * w6);
    b.plus();
    b.factor("1+1/C_b", 1.0 + 1.0 / cb);
    b.factor(
        "2+4sqrt(3)sup^4 C_W^(3/2)E|W|^3/C_b+sqrt(6pi)C_W E[W^4]^(1/2)/(2pi sqrt(C_b))",
        2.0 + 4.0 * 3f64.sqrt() * sup.powi(4) * cw.powf(1.5) * w3.exp() / cb
            + (6.0 * PI).sqrt() * cw * (0.5 * w4).exp() / (2.0 * PI * cb.sqrt()),
    );
    let sum: f64 = compensated_sum(
        (2..=l + 1).map(|k| cw * cw * sup.powi(4) / cfg.width(k - 1) as f64 * ratio.powi((l + 1 - k) as i32)),
    );
    b.factor("(sum_k C_W^2 sup^4/n_(k-1) (6C_W/(pi C_b))^(L+1-k))^(1/2)", sum.sqrt());
    b.plus();
    b.factor("1+1/C_b", 1.0 + 1.0 / cb);
    b.factor("2C_W sup^2/sqrt(n_1)", 2.0 * cw * sup * sup / (cfg.width(1) as f64).sqrt());
    b.factor("(6C_W/(pi C_b))^(L/2)", ratio.powf(l as f64 / 2.0));
}

fn identity_multi_dc(ctx: &BoundContext, b: &mut Builder) {
    let cfg = ctx.cfg;
    require_activation(ctx, b, ActivationKind::Identity);
    let w6 = b.take("E[W^6]", cfg.weights.ln_abs_moment(6));
    let lambda = lambda2(ctx, b);
    let (Some(w6), Some(lambda)) = (w6, lambda) else { return };
    if !b.ok() {
        return;
    }
    let d = cfg.dims();
    let df = d as f64;
    let l = ctx.depth();
    let lf = l as f64;
    let n0 = cfg.n0 as f64;
    let (cw, cb) = (cfg.c_w, cfg.c_b);
    let x2: f64 = compensated_sum((0..d).map(|i| cfg.input_norm(i).powi(2) / n0));
    let x46: f64 = compensated_sum((0..d).map(|i| {
        let s: f64 = cfg.inputs[i].iter().map(|v| v.abs().powi(6) + v.powi(4)).sum();
        (s / n0).sqrt()
    }));
    b.factor("C", ctx.constants.c_universal);
    b.ln_factor("d^4 sqrt(d)", 4.5 * df.ln());
    b.factor("d+sum||x_i||^2/n0+2sum(sum_j(|x_ij|^6+|x_ij|^4)/n0)^(1/2)", df + x2 + 2.0 * x46);
    b.factor("sqrt(C_W)(1+C_W)", cw.sqrt() * (1.0 + cw));
    b.factor("1+C_b+L C_b(1+C_b)", 1.0 + cb + lf * cb * (1.0 + cb));
    b.ln_factor("E[W^6]^(1/2)", 0.5 * w6);
    b.ln_factor("max{1,1/(C_W^(2(L-1)) lambda^2)}", (-(2.0 * (lf - 1.0) * cw.ln() + 2.0 * lambda.ln())).max(0.0));
    b.factor("(sum 1/n_j)^(1/2)", inv_width_sum(ctx).sqrt());
    b.ln_factor("(108 max{1,C_W}^2 E[W^6]^(1/2))^(L+1)", (lf + 1.0) * ((108.0 * cw.max(1.0).powi(2)).ln() + 0.5 * w6));
}
