//! Explicit and semi-empirical Gaussian-approximation bounds.
//!
//! Every bound is a sum of products. A [`BoundReport`] stores each
//! multiplicative factor as its natural logarithm together with the index of
//! the additive term it belongs to, and the value is recombined as
//!
//! ```text
//! ln_value = ln_sum_exp over terms g of (compensated sum of ln factors in g)
//! value    = exp(ln_value)
//! ```
//!
//! so astronomically large explicit bounds keep a finite `ln_value` while
//! `value` saturates to `+inf`. A failed precondition forces `value = +inf`
//! and lists the reasons.

mod bounds;
mod kernel_bounds;
mod moments;
mod stats;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit_kernel::KernelSequence;
use crate::net_model::NetConfig;
use crate::quadrature::QuadratureSpec;
use crate::special::{compensated_sum, ln_sum_exp};

pub use bounds::builtin_bounds;
pub use kernel_bounds::{
    depth_schedule, det_lower_bound, eigen_lower_bound, hat_kernel, sigma_prime_table, KernelLowerBound,
};
pub use moments::{
    ln_first_layer_moment, ln_m_constant, moment_bound, moment_bound_at, q_bound_theoretical, q_bound_theoretical_at,
    MomentBound, QBound,
};
pub use stats::{
    collect_stats, q_estimate_empirical, q_estimate_empirical_at, EmpiricalStats, Estimate, QEstimate, StatsOptions,
    DEFAULT_WORK_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundId {
    KdistSemi,
    WdistSemi,
    FinaleUno,
    PresSecProb,
    #[serde(rename = "mod-kg")]
    ModKG,
    PerceptronK,
    PerceptronW,
    IdentityK,
    IdentityW,
    ReluK,
    ReluW,
    BoundedLip,
    #[serde(rename = "identity-multi-dc")]
    IdentityMultiDC,
}

impl BoundId {
    pub const ALL: [BoundId; 13] = [
        Self::KdistSemi,
        Self::WdistSemi,
        Self::FinaleUno,
        Self::PresSecProb,
        Self::ModKG,
        Self::PerceptronK,
        Self::PerceptronW,
        Self::IdentityK,
        Self::IdentityW,
        Self::ReluK,
        Self::ReluW,
        Self::BoundedLip,
        Self::IdentityMultiDC,
    ];

    pub const SPECIAL: [BoundId; 8] = [
        Self::PerceptronK,
        Self::PerceptronW,
        Self::IdentityK,
        Self::IdentityW,
        Self::ReluK,
        Self::ReluW,
        Self::BoundedLip,
        Self::IdentityMultiDC,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::KdistSemi => "kdist-semi",
            Self::WdistSemi => "wdist-semi",
            Self::FinaleUno => "finale-uno",
            Self::PresSecProb => "pres-sec-prob",
            Self::ModKG => "mod-kg",
            Self::PerceptronK => "perceptron-k",
            Self::PerceptronW => "perceptron-w",
            Self::IdentityK => "identity-k",
            Self::IdentityW => "identity-w",
            Self::ReluK => "relu-k",
            Self::ReluW => "relu-w",
            Self::BoundedLip => "bounded-lip",
            Self::IdentityMultiDC => "identity-multi-dc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown bound id '{s}'")))
    }

    /// Whether the bound concerns several inputs jointly (convex distance).
    pub fn is_multi_input(self) -> bool {
        matches!(self, Self::PresSecProb | Self::ModKG | Self::IdentityMultiDC)
    }

    /// Distances the bound controls.
    pub fn controls(self) -> &'static [crate::distance_lab::DistanceKind] {
        use crate::distance_lab::DistanceKind::*;
        match self {
            Self::KdistSemi | Self::PerceptronK | Self::IdentityK | Self::ReluK => &[Kolmogorov1D],
            Self::WdistSemi | Self::PerceptronW | Self::IdentityW | Self::ReluW => &[Wasserstein1],
            Self::FinaleUno | Self::BoundedLip => &[Kolmogorov1D, Wasserstein1],
            Self::PresSecProb | Self::ModKG | Self::IdentityMultiDC => &[MultiKolmogorov, HalfSpaceSup],
        }
    }
}

/// Where semi-empirical bounds take `Q_2` and activation moments from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Empirical,
    Theoretical,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Self::Empirical),
            "theoretical" => Ok(Self::Theoretical),
            _ => Err(Error::InvalidArgument(format!("unknown mode '{s}' (empirical|theoretical)"))),
        }
    }
}

/// Constants the paper leaves unspecified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Moment-inequality constant of the Rosenthal-type lemma.
    pub k_rosenthal: f64,
    /// Universal constant of the fully explicit multi-input bounds.
    pub c_universal: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self { k_rosenthal: 2.0, c_universal: 1.0 }
    }
}

impl Constants {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("k_rosenthal", self.k_rosenthal), ("c_universal", self.c_universal)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{n} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn as_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("C_universal".to_string(), self.c_universal), ("K_rosenthal".to_string(), self.k_rosenthal)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    #[serde(with = "crate::serde_ext::real")]
    pub ln_value: f64,
    /// Additive term the factor multiplies into.
    pub term: usize,
}

impl Factor {
    pub fn value(&self) -> f64 {
        self.ln_value.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_id: BoundId,
    #[serde(with = "crate::serde_ext::real")]
    pub value: f64,
    #[serde(with = "crate::serde_ext::real")]
    pub ln_value: f64,
    pub factors: Vec<Factor>,
    pub constants_used: BTreeMap<String, f64>,
    pub preconditions_ok: bool,
    pub reasons: Vec<String>,
    /// Side information that does not enter the value (Monte Carlo errors, mode).
    #[serde(with = "crate::serde_ext::real_map")]
    pub annotations: BTreeMap<String, f64>,
}

/// `(ln_value, value)` from factors: log-sum-exp over terms of compensated
/// sums of log factors. An empty factor list is the empty sum, 0.
pub fn combine(factors: &[Factor]) -> (f64, f64) {
    let terms = factors.iter().map(|f| f.term).max().map_or(0, |t| t + 1);
    let mut ln_terms = Vec::with_capacity(terms);
    for t in 0..terms {
        let logs: Vec<f64> = factors.iter().filter(|f| f.term == t).map(|f| f.ln_value).collect();
        if logs.is_empty() {
            continue;
        }
        ln_terms.push(if logs.contains(&f64::NEG_INFINITY) {
            f64::NEG_INFINITY
        } else if logs.contains(&f64::INFINITY) {
            f64::INFINITY
        } else {
            compensated_sum(logs)
        });
    }
    let ln = if ln_terms.is_empty() { f64::NEG_INFINITY } else { ln_sum_exp(&ln_terms) };
    (ln, ln.exp())
}

impl BoundReport {
    /// Recombine the stored factors; equals `(ln_value, value)` bit for bit
    /// whenever the preconditions held.
    pub fn recombine(&self) -> (f64, f64) {
        combine(&self.factors)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Accumulates factors and failed preconditions for one report.
pub(crate) struct Builder {
    id: BoundId,
    factors: Vec<Factor>,
    term: usize,
    reasons: Vec<String>,
    constants: Constants,
    annotations: BTreeMap<String, f64>,
}

impl Builder {
    pub(crate) fn new(id: BoundId, constants: Constants) -> Self {
        Self { id, factors: Vec::new(), term: 0, reasons: Vec::new(), constants, annotations: BTreeMap::new() }
    }

    /// Factor with a plain (nonnegative) value.
    pub(crate) fn factor(&mut self, name: impl Into<String>, value: f64) {
        let ln = if value > 0.0 {
            value.ln()
        } else if value == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.fail(format!("factor is negative or undefined ({value})"));
            f64::NAN
        };
        self.ln_factor(name, ln);
    }

    pub(crate) fn ln_factor(&mut self, name: impl Into<String>, ln: f64) {
        self.factors.push(Factor { name: name.into(), ln_value: ln, term: self.term });
    }

    /// Start the next additive term.
    pub(crate) fn plus(&mut self) {
        if self.factors.iter().any(|f| f.term == self.term) {
            self.term += 1;
        }
    }

    pub(crate) fn fail(&mut self, reason: impl Into<String>) {
        self.reasons.push(reason.into());
    }

    pub(crate) fn ok(&self) -> bool {
        self.reasons.is_empty()
    }

    /// Unwrap a fallible plug-in, recording the failure as a reason.
    pub(crate) fn take<T>(&mut self, what: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.fail(format!("{what}: {e}"));
                None
            }
        }
    }

    pub(crate) fn note(&mut self, key: &str, v: f64) {
        self.annotations.insert(key.to_string(), v);
    }

    pub(crate) fn finish(self) -> BoundReport {
        let ok = self.reasons.is_empty();
        let (ln_value, value) = if ok { combine(&self.factors) } else { (f64::INFINITY, f64::INFINITY) };
        BoundReport {
            bound_id: self.id,
            value,
            ln_value,
            factors: self.factors,
            constants_used: self.constants.as_map(),
            preconditions_ok: ok,
            reasons: self.reasons,
            annotations: self.annotations,
        }
    }
}

/// Everything a bound may consume.
#[derive(Clone)]
pub struct BoundContext<'a> {
    pub cfg: &'a NetConfig,
    pub kernel: &'a KernelSequence,
    pub stats: Option<&'a EmpiricalStats>,
    pub mode: Mode,
    pub constants: Constants,
    /// Input used by one-dimensional bounds.
    pub input: usize,
    pub quadrature: QuadratureSpec,
}

impl<'a> BoundContext<'a> {
    pub fn new(cfg: &'a NetConfig, kernel: &'a KernelSequence) -> Self {
        Self {
            cfg,
            kernel,
            stats: None,
            mode: Mode::Theoretical,
            constants: Constants::default(),
            input: 0,
            quadrature: QuadratureSpec::default(),
        }
    }

    pub fn with_stats(mut self, stats: &'a EmpiricalStats) -> Self {
        self.stats = Some(stats);
        self.mode = Mode::Empirical;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_constants(mut self, constants: Constants) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_input(mut self, input: usize) -> Self {
        self.input = input;
        self
    }

    pub(crate) fn depth(&self) -> usize {
        self.cfg.depth()
    }

    /// `K^(L+1)_{ii}` for the selected input.
    pub(crate) fn top_variance(&self) -> f64 {
        let k = self.kernel.k(self.depth() + 1);
        k[self.input][self.input]
    }
}

/// Strategy interface for bounds.
pub trait Bound: Send + Sync {
    fn id(&self) -> BoundId;
    fn evaluate(&self, ctx: &BoundContext) -> BoundReport;
}

pub struct BoundRegistry {
    bounds: BTreeMap<BoundId, Arc<dyn Bound>>,
}

impl BoundRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self { bounds: BTreeMap::new() };
        for b in builtin_bounds() {
            r.register(b);
        }
        r
    }

    pub fn register(&mut self, b: Arc<dyn Bound>) {
        self.bounds.insert(b.id(), b);
    }

    pub fn get(&self, id: BoundId) -> Result<&Arc<dyn Bound>> {
        self.bounds.get(&id).ok_or_else(|| Error::InvalidArgument(format!("bound '{}' not registered", id.label())))
    }

    pub fn ids(&self) -> Vec<BoundId> {
        self.bounds.keys().copied().collect()
    }
}

/// Evaluate one bound with the built-in registry.
pub fn evaluate(id: BoundId, ctx: &BoundContext) -> BoundReport {
    bounds::evaluate_builtin(id, ctx)
}

/// All special-case bounds whose assumptions match the configuration.
pub fn bound_special_cases(ctx: &BoundContext) -> Result<Vec<BoundReport>> {
    let hits: Vec<BoundReport> =
        BoundId::SPECIAL.iter().map(|&id| evaluate(id, ctx)).filter(|r| r.preconditions_ok).collect();
    if hits.is_empty() {
        return Err(Error::Precondition(format!(
            "no special case matches activation '{}' with '{}' weights, C_b = {}, C_W = {}",
            ctx.cfg.activation.name,
            ctx.cfg.weights.kind(),
            ctx.cfg.c_b,
            ctx.cfg.c_w
        )));
    }
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_sums_products() {
        let f = |name: &str, v: f64, term| Factor { name: name.into(), ln_value: f64::ln(v), term };
        let fs = vec![f("a", 2.0, 0), f("b", 3.0, 0), f("c", 4.0, 1)];
        let (ln, v) = combine(&fs);
        assert!((v - 10.0).abs() < 1e-13);
        assert!((ln - 10f64.ln()).abs() < 1e-15);
        let zero = vec![f("a", 2.0, 0), Factor { name: "z".into(), ln_value: f64::NEG_INFINITY, term: 0 }];
        assert_eq!(combine(&zero).1, 0.0);
    }

    #[test]
    fn failed_preconditions_give_infinity() {
        let mut b = Builder::new(BoundId::KdistSemi, Constants::default());
        b.factor("x", 1.0);
        b.fail("nope");
        let r = b.finish();
        assert!(!r.preconditions_ok);
        assert_eq!(r.value, f64::INFINITY);
        let back = BoundReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn ids_round_trip() {
        for id in BoundId::ALL {
            assert_eq!(BoundId::parse(id.label()).unwrap(), id);
            let js = serde_json::to_string(&id).unwrap();
            assert_eq!(js, format!("\"{}\"", id.label()));
        }
    }
}
