//! Moment bounds for the pre-activations and the theoretical bound on `Q_{2p}`.

use serde::{Deserialize, Serialize};

use super::{combine, Constants, Factor};
use crate::error::{Error, Result};
use crate::net_model::NetConfig;
use crate::special::{ln_add_exp, ln_double_factorial_odd, LN_2};

/// Upper bound on `E[(z_1^(l)(x))^p]^{1/p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    pub layer: usize,
    pub p: u32,
    pub input: usize,
    pub value: f64,
}

fn check_even(p: u32) -> Result<()> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("moment order must be an even integer >= 2, got {p}")));
    }
    Ok(())
}

fn check_input(cfg: &NetConfig, input: usize) -> Result<()> {
    if input >= cfg.dims() {
        return Err(Error::InvalidArgument(format!("input {input} out of range (d = {})", cfg.dims())));
    }
    Ok(())
}

/// `ln` of the first-layer moment bound
/// `sqrt(C_b) ((p-1)!!)^{1/p} + K sqrt(C_W/n0) (p/log p) max{||x||, ||x||_p} E[W^p]^{1/p}`.
pub fn ln_first_layer_moment(cfg: &NetConfig, input: usize, p: u32, k: f64) -> Result<f64> {
    check_even(p)?;
    check_input(cfg, input)?;
    let pf = p as f64;
    let w = cfg.weights.ln_moment_root(p)?;
    let norm = cfg.input_norm(input).max(cfg.input_p_norm(input, pf));
    let bias = if cfg.c_b > 0.0 { 0.5 * cfg.c_b.ln() + ln_double_factorial_odd(p) / pf } else { f64::NEG_INFINITY };
    let weight = if norm > 0.0 {
        k.ln() + 0.5 * (cfg.c_w / cfg.n0 as f64).ln() + (pf / pf.ln()).ln() + norm.ln() + w
    } else {
        f64::NEG_INFINITY
    };
    Ok(ln_add_exp(bias, weight))
}

pub fn moment_bound(cfg: &NetConfig, layer: usize, p: u32) -> Result<MomentBound> {
    moment_bound_at(cfg, 0, layer, p, &Constants::default())
}

/// Moment bound at layer `1 <= layer <= L+1` for input `input`.
pub fn moment_bound_at(cfg: &NetConfig, input: usize, layer: usize, p: u32, c: &Constants) -> Result<MomentBound> {
    check_even(p)?;
    check_input(cfg, input)?;
    let top = cfg.depth() + 1;
    if layer == 0 || layer > top {
        return Err(Error::LayerOutOfRange { layer, max: top });
    }
    let k = c.k_rosenthal;
    let first = ln_first_layer_moment(cfg, input, p, k)?.exp();
    if layer == 1 {
        return Ok(MomentBound { layer, p, input, value: first });
    }
    let lip = cfg.activation.lipschitz()?;
    let pf = p as f64;
    let rate = pf / pf.ln();
    let w = cfg.weights.ln_moment_root(p)?.exp();
    let s0 = cfg.activation.value_at_zero.abs();
    let per_layer = cfg.c_b.sqrt() * (ln_double_factorial_odd(p) / pf).exp() + k * cfg.c_w.sqrt() * rate * s0 * w;
    let gain = k * rate * cfg.c_w.sqrt() * lip * w;
    let l1 = (layer - 1) as f64;
    let value = (per_layer * l1 + first) * (1.0 + gain.powi(layer as i32 - 1));
    Ok(MomentBound { layer, p, input, value })
}

/// `ln M_p^(l)(x)`:
/// `5^{2p} 2^{26p} (1+C_W)^{19p} (Lip+|s(0)|+1)^{36p} (1+||x||/sqrt(n0))^{24p}
///  (2+C_b+1/C_b+1/C_b^2)^{12p} (1+E[W^{5p 2^{l+1}}]^{1/2^l})^3`.
pub fn ln_m_constant(cfg: &NetConfig, input: usize, layer: usize, p: u32) -> Result<f64> {
    check_input(cfg, input)?;
    if cfg.c_b <= 0.0 {
        return Err(Error::Precondition("C_b must be nonzero".into()));
    }
    let lip = cfg.activation.lipschitz()?;
    let pf = p as f64;
    let cb = cfg.c_b;
    let order = moment_order(layer, p)?;
    let w = cfg.weights.ln_abs_moment(order)? / 2f64.powi(layer as i32);
    Ok(2.0 * pf * 5f64.ln()
        + 26.0 * pf * LN_2
        + 19.0 * pf * (1.0 + cfg.c_w).ln()
        + 36.0 * pf * (lip + cfg.activation.value_at_zero.abs() + 1.0).ln()
        + 24.0 * pf * (1.0 + cfg.input_norm(input) / (cfg.n0 as f64).sqrt()).ln()
        + 12.0 * pf * (2.0 + cb + 1.0 / cb + 1.0 / (cb * cb)).ln()
        + 3.0 * ln_add_exp(0.0, w))
}

/// `5 p 2^{l+1}`, the weight moment order the explicit bounds require.
pub(crate) fn moment_order(layer: usize, p: u32) -> Result<u32> {
    5u32.checked_mul(p)
        .and_then(|v| v.checked_mul(1u32.checked_shl(layer as u32 + 1)?))
        .ok_or_else(|| Error::InvalidArgument(format!("moment order 5*{p}*2^{} overflows", layer + 1)))
}

/// `K P / log P` with `P = 5 p 2^{l+1}`.
pub(crate) fn rosenthal_rate(k: f64, order: u32) -> f64 {
    let o = order as f64;
    k * o / o.ln()
}

/// Theoretical bound on `Q_{2p}^(l)(x)` with itemized factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QBound {
    pub layer: usize,
    pub p: u32,
    pub input: usize,
    #[serde(with = "crate::serde_ext::real")]
    pub value: f64,
    #[serde(with = "crate::serde_ext::real")]
    pub ln_value: f64,
    pub factors: Vec<Factor>,
}

pub fn q_bound_theoretical(cfg: &NetConfig, layer: usize, p: u32) -> Result<QBound> {
    q_bound_theoretical_at(cfg, 0, layer, p, &Constants::default())
}

pub fn q_bound_theoretical_at(cfg: &NetConfig, input: usize, layer: usize, p: u32, c: &Constants) -> Result<QBound> {
    if layer == 0 || layer > cfg.depth() {
        return Err(Error::LayerOutOfRange { layer, max: cfg.depth() });
    }
    if p == 0 {
        return Err(Error::InvalidArgument("p must be a positive integer".into()));
    }
    if cfg.c_b == 0.0 {
        return Err(Error::Precondition("the Q bound requires C_b != 0".into()));
    }
    let lip = cfg.activation.lipschitz()?;
    let order = moment_order(layer, p)?;
    let w_root = cfg.weights.ln_moment_root(order)?;
    let ln_m = ln_m_constant(cfg, input, layer, p)?;
    let (l, pf) = (layer as f64, p as f64);
    let rate = rosenthal_rate(c.k_rosenthal, order);
    let widths: f64 = (1..=layer).map(|j| (cfg.width(j) as f64).powi(-(p as i32))).sum();
    let mut f = Vec::new();
    let mut push = |name: &str, ln: f64| f.push(Factor { name: name.into(), ln_value: ln, term: 0 });
    push("M_p^(l)(x)^l", l * ln_m);
    push("sum_j 1/n_j^p", widths.ln());
    push("(1+(2C_W Lip^2)^l)^(2lp)", 2.0 * l * pf * ln_add_exp(0.0, l * (2.0 * cfg.c_w * lip * lip).ln()));
    push("(l+1)^(6lp+16p)", (6.0 * l * pf + 16.0 * pf) * (l + 1.0).ln());
    push(
        "(4sqrt(5*2^l p)+K P/log P)^(4lp+16p)",
        (4.0 * l * pf + 16.0 * pf) * (4.0 * (5.0 * 2f64.powi(layer as i32) * pf).sqrt() + rate).ln(),
    );
    let inner = ln_add_exp(3f64.ln() + 4.0 * (l - 1.0) * pf * LN_2 + 4.0 * pf * pf.ln(), (12.0 * pf + 3.0) * LN_2);
    push("9+(3*2^(4(l-1)p) p^(4p)+2^(12p+3))^2", ln_add_exp(9f64.ln(), 2.0 * inner));
    let g = rate.ln() + 0.5 * cfg.c_w.ln() + lip.ln() + w_root;
    push("(41+(K P/log P sqrt(C_W) Lip E[W^P]^(1/P))^(2(l-1)))^l", l * ln_add_exp(41f64.ln(), 2.0 * (l - 1.0) * g));
    let (ln_value, value) = combine(&f);
    Ok(QBound { layer, p, input, value, ln_value, factors: f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::{ActivationSpec, WeightLaw};

    fn cfg(act: ActivationSpec, law: WeightLaw, c_b: f64, widths: Vec<usize>) -> NetConfig {
        NetConfig::new(4, widths, 1, c_b, 1.0, act, law, vec![vec![1.0, -1.0, 1.0, -1.0]]).unwrap()
    }

    #[test]
    fn first_layer_reduction_without_bias() {
        let c = cfg(ActivationSpec::identity(), WeightLaw::gaussian(), 0.0, vec![8]);
        let b = moment_bound(&c, 1, 2).unwrap();
        let want = 2.0 * (1.0f64 / 4.0).sqrt() * (2.0 / 2f64.ln()) * 2.0;
        assert!((b.value - want).abs() < 1e-12 * want);
    }

    #[test]
    fn rademacher_weight_factor_is_one() {
        let c = cfg(ActivationSpec::relu(), WeightLaw::rademacher(), 0.5, vec![8, 8]);
        assert!(c.weights.ln_moment_root(4).unwrap().abs() < 1e-15);
        assert!(moment_bound(&c, 3, 4).unwrap().value.is_finite());
    }

    #[test]
    fn moment_bound_errors() {
        let c = cfg(ActivationSpec::tanh(), WeightLaw::student_t(5.0).unwrap(), 1.0, vec![8]);
        assert!(moment_bound(&c, 2, 6).is_err());
        assert!(moment_bound(&c, 2, 3).is_err());
        assert!(moment_bound(&c, 3, 2).is_err());
        let perc = cfg(ActivationSpec::perceptron(), WeightLaw::gaussian(), 1.0, vec![8]);
        assert!(moment_bound(&perc, 1, 2).is_ok());
        assert!(moment_bound(&perc, 2, 2).is_err());
    }

    #[test]
    fn q_bound_width_structure() {
        let c = cfg(ActivationSpec::tanh(), WeightLaw::gaussian(), 1.0, vec![100]);
        let a = q_bound_theoretical(&c, 1, 1).unwrap();
        let b = q_bound_theoretical(&c.with_widths(vec![200]).unwrap(), 1, 1).unwrap();
        assert!((a.ln_value - b.ln_value - LN_2).abs() < 1e-12);
        let c2 = cfg(ActivationSpec::tanh(), WeightLaw::gaussian(), 1.0, vec![64, 128]);
        let d2 = c2.with_widths(vec![128, 256]).unwrap();
        for p in 1..=3u32 {
            let x = q_bound_theoretical(&c2, 2, p).unwrap();
            let y = q_bound_theoretical(&d2, 2, p).unwrap();
            assert!((x.ln_value - y.ln_value - p as f64 * LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn q_bound_preconditions() {
        let c = cfg(ActivationSpec::tanh(), WeightLaw::gaussian(), 0.0, vec![8]);
        assert!(matches!(q_bound_theoretical(&c, 1, 1), Err(Error::Precondition(_))));
        let t = cfg(ActivationSpec::tanh(), WeightLaw::student_t(15.0).unwrap(), 1.0, vec![8]);
        assert!(q_bound_theoretical(&t, 1, 1).is_err());
        let perc = cfg(ActivationSpec::perceptron(), WeightLaw::gaussian(), 1.0, vec![8]);
        assert!(q_bound_theoretical(&perc, 1, 1).is_err());
    }

    #[test]
    fn q_bound_fixture_hand_checked_factors() {
        // L = 2, p = 1, C_b = C_W = 1, tanh, Gaussian weights, ||x|| = sqrt(n0).
        let c = NetConfig::new(
            4,
            vec![10, 20],
            1,
            1.0,
            1.0,
            ActivationSpec::tanh(),
            WeightLaw::gaussian(),
            vec![vec![1.0, 1.0, 1.0, 1.0]],
        )
        .unwrap();
        let q = q_bound_theoretical(&c, 2, 1).unwrap();
        let get = |n: &str| q.factors.iter().find(|f| f.name == n).unwrap().ln_value;
        // (1 + (2*1*1)^2)^(4) = 5^4
        assert!((get("(1+(2C_W Lip^2)^l)^(2lp)") - 4.0 * 5f64.ln()).abs() < 1e-12);
        // (l+1)^(6*2+16) = 3^28
        assert!((get("(l+1)^(6lp+16p)") - 28.0 * 3f64.ln()).abs() < 1e-12);
        // 1/10 + 1/20
        assert!((get("sum_j 1/n_j^p") - 0.15f64.ln()).abs() < 1e-15);
        // M: 25 * 2^26 * 2^19 * 2^36 * 2^24 * 5^12 * (1 + E[W^40]^(1/4))^3
        let w = (ln_double_factorial_odd(40) / 4.0).exp();
        let ln_m = 25f64.ln() + (26.0 + 19.0 + 36.0 + 24.0) * LN_2 + 12.0 * 5f64.ln() + 3.0 * (1.0 + w).ln();
        assert!((get("M_p^(l)(x)^l") - 2.0 * ln_m).abs() < 1e-10);
        let (ln, _) = combine(&q.factors);
        assert_eq!(ln, q.ln_value);
        assert!((q.ln_value - 433.915003921063).abs() < 1e-9, "{}", q.ln_value);
    }
}
