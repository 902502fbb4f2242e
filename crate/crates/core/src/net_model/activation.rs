//! Activation functions.
//!
//! `Activation` is the evaluable strategy; `ActivationSpec` is the serializable
//! record (kind plus the norms the bounds consume). Built-ins carry their own
//! function. Custom activations carry numbers from the config and become
//! evaluable once a function is attached through an [`ActivationRegistry`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait Activation: Send + Sync {
    fn name(&self) -> &str;
    fn eval(&self, x: f64) -> f64;
    fn derivative(&self, _x: f64) -> Option<f64> {
        None
    }
    /// Points where the function is not smooth (kinks, jumps).
    fn breakpoints(&self) -> &[f64] {
        &[]
    }
    /// Points where the function turns over on its natural scale; used to
    /// refine quadrature panels when the argument is strongly stretched.
    fn features(&self) -> &[f64] {
        &[]
    }
    /// `E[s(U) s(V)]` for centered Gaussians with variances `vu`, `vv` and covariance `cuv`.
    fn bivariate_closed_form(&self, _vu: f64, _vv: f64, _cuv: f64) -> Option<f64> {
        None
    }
    /// `E[s'(G)]` for `G ~ N(0, variance)`.
    fn expected_derivative_closed_form(&self, _variance: f64) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Identity,
    Relu,
    Perceptron,
    Tanh,
    #[serde(rename = "sigmoid")]
    LogisticSigmoid,
    Custom,
}

impl ActivationKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Relu => "relu",
            Self::Perceptron => "perceptron",
            Self::Tanh => "tanh",
            Self::LogisticSigmoid => "sigmoid",
            Self::Custom => "custom",
        }
    }
}

struct Identity;
struct Relu;
struct Perceptron;
struct Tanh;
struct Sigmoid;

const TANH_FEATURES: [f64; 9] = [-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0];
const SIGMOID_FEATURES: [f64; 9] = [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0];

impl Activation for Identity {
    fn name(&self) -> &str {
        "identity"
    }
    fn eval(&self, x: f64) -> f64 {
        x
    }
    fn derivative(&self, _x: f64) -> Option<f64> {
        Some(1.0)
    }
    fn bivariate_closed_form(&self, _vu: f64, _vv: f64, cuv: f64) -> Option<f64> {
        Some(cuv)
    }
    fn expected_derivative_closed_form(&self, _variance: f64) -> Option<f64> {
        Some(1.0)
    }
}

fn correlation(vu: f64, vv: f64, cuv: f64) -> f64 {
    (cuv / (vu * vv).sqrt()).clamp(-1.0, 1.0)
}

impl Activation for Relu {
    fn name(&self) -> &str {
        "relu"
    }
    fn eval(&self, x: f64) -> f64 {
        x.max(0.0)
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        Some(if x > 0.0 { 1.0 } else { 0.0 })
    }
    fn breakpoints(&self) -> &[f64] {
        &[0.0]
    }
    /// Arc-cosine kernel of order one.
    fn bivariate_closed_form(&self, vu: f64, vv: f64, cuv: f64) -> Option<f64> {
        if vu <= 0.0 || vv <= 0.0 {
            return Some(0.0);
        }
        let rho = correlation(vu, vv, cuv);
        let theta = rho.acos();
        let s = (1.0 - rho * rho).max(0.0).sqrt();
        Some((vu * vv).sqrt() * (s + (PI - theta) * rho) / (2.0 * PI))
    }
    fn expected_derivative_closed_form(&self, variance: f64) -> Option<f64> {
        Some(if variance > 0.0 { 0.5 } else { 0.0 })
    }
}

impl Activation for Perceptron {
    fn name(&self) -> &str {
        "perceptron"
    }
    fn eval(&self, x: f64) -> f64 {
        if x >= 0.0 {
            1.0
        } else {
            0.0
        }
    }
    fn breakpoints(&self) -> &[f64] {
        &[0.0]
    }
    /// P(U >= 0, V >= 0) = 1/2 - arccos(rho)/(2 pi); a zero-variance argument is the constant 1.
    fn bivariate_closed_form(&self, vu: f64, vv: f64, cuv: f64) -> Option<f64> {
        let half_or_one = |v: f64| if v > 0.0 { 0.5 } else { 1.0 };
        if vu <= 0.0 {
            return Some(half_or_one(vv));
        }
        if vv <= 0.0 {
            return Some(half_or_one(vu));
        }
        let rho = correlation(vu, vv, cuv);
        Some(0.5 - rho.acos() / (2.0 * PI))
    }
}

impl Activation for Tanh {
    fn name(&self) -> &str {
        "tanh"
    }
    fn eval(&self, x: f64) -> f64 {
        x.tanh()
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        let c = x.cosh();
        Some(1.0 / (c * c))
    }
    fn features(&self) -> &[f64] {
        &TANH_FEATURES
    }
}

impl Activation for Sigmoid {
    fn name(&self) -> &str {
        "sigmoid"
    }
    fn eval(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }
    fn derivative(&self, x: f64) -> Option<f64> {
        let s = self.eval(x);
        Some(s * (1.0 - s))
    }
    fn features(&self) -> &[f64] {
        &SIGMOID_FEATURES
    }
}

/// Serializable activation record plus (optionally) the function itself.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "ActivationFile", into = "ActivationFile")]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub name: String,
    /// `None` marks a non-Lipschitz activation (perceptron).
    pub lipschitz_norm: Option<f64>,
    pub value_at_zero: f64,
    pub sup_norm: Option<f64>,
    pub derivative_available: bool,
    function: Option<Arc<dyn Activation>>,
}

impl fmt::Debug for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActivationSpec")
            .field("kind", &self.kind)
            .field("name", &self.name)
            .field("lipschitz_norm", &self.lipschitz_norm)
            .field("value_at_zero", &self.value_at_zero)
            .field("sup_norm", &self.sup_norm)
            .field("derivative_available", &self.derivative_available)
            .field("evaluable", &self.function.is_some())
            .finish()
    }
}

impl PartialEq for ActivationSpec {
    fn eq(&self, o: &Self) -> bool {
        self.kind == o.kind
            && self.name == o.name
            && self.lipschitz_norm == o.lipschitz_norm
            && self.value_at_zero == o.value_at_zero
            && self.sup_norm == o.sup_norm
            && self.derivative_available == o.derivative_available
    }
}

impl ActivationSpec {
    pub fn builtin(kind: ActivationKind) -> Result<Self> {
        let (f, lip, s0, sup, der): (Arc<dyn Activation>, Option<f64>, f64, Option<f64>, bool) = match kind {
            ActivationKind::Identity => (Arc::new(Identity), Some(1.0), 0.0, None, true),
            ActivationKind::Relu => (Arc::new(Relu), Some(1.0), 0.0, None, true),
            ActivationKind::Perceptron => (Arc::new(Perceptron), None, 1.0, Some(1.0), false),
            ActivationKind::Tanh => (Arc::new(Tanh), Some(1.0), 0.0, Some(1.0), true),
            ActivationKind::LogisticSigmoid => (Arc::new(Sigmoid), Some(0.25), 0.5, Some(1.0), true),
            ActivationKind::Custom => {
                return Err(Error::Config("custom activations need ActivationSpec::custom".into()))
            }
        };
        Ok(Self {
            kind,
            name: kind.label().to_string(),
            lipschitz_norm: lip,
            value_at_zero: s0,
            sup_norm: sup,
            derivative_available: der,
            function: Some(f),
        })
    }

    pub fn identity() -> Self {
        Self::builtin(ActivationKind::Identity).expect("builtin")
    }
    pub fn relu() -> Self {
        Self::builtin(ActivationKind::Relu).expect("builtin")
    }
    pub fn perceptron() -> Self {
        Self::builtin(ActivationKind::Perceptron).expect("builtin")
    }
    pub fn tanh() -> Self {
        Self::builtin(ActivationKind::Tanh).expect("builtin")
    }
    pub fn sigmoid() -> Self {
        Self::builtin(ActivationKind::LogisticSigmoid).expect("builtin")
    }

    /// Custom activation with an attached function. `sigma(0)` is read from the function.
    pub fn custom(function: Arc<dyn Activation>, lipschitz_norm: f64, sup_norm: Option<f64>) -> Result<Self> {
        let mut spec = Self::custom_unattached(function.name(), lipschitz_norm, function.eval(0.0), sup_norm)?;
        spec.derivative_available = function.derivative(0.0).is_some();
        spec.function = Some(function);
        Ok(spec)
    }

    /// Custom activation known only through its numbers; bounds that need no
    /// evaluation still work, sampling and quadrature report `NotEvaluable`.
    pub fn custom_unattached(
        name: &str,
        lipschitz_norm: f64,
        value_at_zero: f64,
        sup_norm: Option<f64>,
    ) -> Result<Self> {
        if !(lipschitz_norm.is_finite() && lipschitz_norm >= 0.0) {
            return Err(Error::Config(format!("custom activation '{name}': lipschitz must be finite and nonnegative")));
        }
        if !value_at_zero.is_finite() {
            return Err(Error::Config(format!("custom activation '{name}': sigma0 must be finite")));
        }
        if let Some(s) = sup_norm {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("custom activation '{name}': sup must be finite and nonnegative")));
            }
        }
        Ok(Self {
            kind: ActivationKind::Custom,
            name: name.to_string(),
            lipschitz_norm: Some(lipschitz_norm),
            value_at_zero,
            sup_norm,
            derivative_available: false,
            function: None,
        })
    }

    pub fn is_evaluable(&self) -> bool {
        self.function.is_some()
    }

    pub fn function(&self) -> Result<&Arc<dyn Activation>> {
        self.function.as_ref().ok_or_else(|| Error::NotEvaluable(self.name.clone()))
    }

    /// `||sigma||_Lip`, or a precondition error for non-Lipschitz activations.
    pub fn lipschitz(&self) -> Result<f64> {
        self.lipschitz_norm.ok_or_else(|| Error::Precondition(format!("activation '{}' is not Lipschitz", self.name)))
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm.is_some()
    }

    fn attach(&mut self, function: Arc<dyn Activation>) -> Result<()> {
        let s0 = function.eval(0.0);
        if (s0 - self.value_at_zero).abs() > 1e-12 * (1.0 + s0.abs()) {
            return Err(Error::Config(format!(
                "custom activation '{}': sigma(0) = {s0} but config states sigma0 = {}",
                self.name, self.value_at_zero
            )));
        }
        self.derivative_available = self.derivative_available || function.derivative(0.0).is_some();
        self.function = Some(function);
        Ok(())
    }
}

/// Named custom activations that configs can refer to.
#[derive(Default, Clone)]
pub struct ActivationRegistry {
    custom: BTreeMap<String, Arc<dyn Activation>>,
}

impl ActivationRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, f: Arc<dyn Activation>) {
        self.custom.insert(f.name().to_string(), f);
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> =
            ["identity", "relu", "perceptron", "tanh", "sigmoid"].iter().map(|s| s.to_string()).collect();
        v.extend(self.custom.keys().cloned());
        v
    }

    /// Attach a registered function to a custom spec; built-ins pass through.
    pub fn resolve(&self, spec: &ActivationSpec) -> Result<ActivationSpec> {
        let mut out = spec.clone();
        if spec.kind == ActivationKind::Custom && spec.function.is_none() {
            if let Some(f) = self.custom.get(&spec.name) {
                out.attach(f.clone())?;
            }
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct ActivationFile {
    kind: ActivationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    derivative: Option<bool>,
}

impl From<ActivationSpec> for ActivationFile {
    fn from(s: ActivationSpec) -> Self {
        let custom = s.kind == ActivationKind::Custom;
        Self {
            kind: s.kind,
            name: custom.then(|| s.name.clone()),
            lipschitz: s.lipschitz_norm,
            sigma0: Some(s.value_at_zero),
            sup: s.sup_norm,
            derivative: custom.then_some(s.derivative_available),
        }
    }
}

impl TryFrom<ActivationFile> for ActivationSpec {
    type Error = Error;

    fn try_from(f: ActivationFile) -> Result<Self> {
        if f.kind == ActivationKind::Custom {
            let name = f.name.ok_or_else(|| Error::Config("custom activation needs a name".into()))?;
            let lip =
                f.lipschitz.ok_or_else(|| Error::Config(format!("custom activation '{name}' needs lipschitz")))?;
            let s0 = f.sigma0.ok_or_else(|| Error::Config(format!("custom activation '{name}' needs sigma0")))?;
            let mut spec = Self::custom_unattached(&name, lip, s0, f.sup)?;
            spec.derivative_available = f.derivative.unwrap_or(false);
            return Ok(spec);
        }
        let spec = Self::builtin(f.kind)?;
        let mismatch =
            |what: &str| Error::Config(format!("activation '{}': {what} does not match the built-in value", spec.name));
        if let Some(l) = f.lipschitz {
            if spec.lipschitz_norm != Some(l) {
                return Err(mismatch("lipschitz"));
            }
        }
        if let Some(s0) = f.sigma0 {
            if s0 != spec.value_at_zero {
                return Err(mismatch("sigma0"));
            }
        }
        if let Some(s) = f.sup {
            if spec.sup_norm != Some(s) {
                return Err(mismatch("sup"));
            }
        }
        if f.name.is_some() {
            return Err(Error::Config("only custom activations take a name".into()));
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Softsign;
    impl Activation for Softsign {
        fn name(&self) -> &str {
            "softsign"
        }
        fn eval(&self, x: f64) -> f64 {
            x / (1.0 + x.abs())
        }
    }

    #[test]
    fn builtin_invariants() {
        let id = ActivationSpec::identity();
        assert_eq!((id.lipschitz_norm, id.value_at_zero, id.sup_norm), (Some(1.0), 0.0, None));
        let r = ActivationSpec::relu();
        assert_eq!((r.lipschitz_norm, r.value_at_zero, r.sup_norm), (Some(1.0), 0.0, None));
        let p = ActivationSpec::perceptron();
        assert_eq!(p.sup_norm, Some(1.0));
        assert!(p.lipschitz().is_err());
        assert!(ActivationSpec::tanh().sup_norm.is_some());
        assert!(ActivationSpec::sigmoid().sup_norm.is_some());
    }

    #[test]
    fn perceptron_closed_form_edges() {
        let p = Perceptron;
        assert_eq!(p.bivariate_closed_form(1.0, 1.0, 1.0), Some(0.5));
        assert_eq!(p.bivariate_closed_form(1.0, 1.0, -1.0), Some(0.0));
        assert_eq!(p.bivariate_closed_form(0.0, 1.0, 0.0), Some(0.5));
        assert_eq!(p.bivariate_closed_form(0.0, 0.0, 0.0), Some(1.0));
    }

    #[test]
    fn custom_sigma0_checked_on_attach() {
        let mut reg = ActivationRegistry::new();
        reg.register(Arc::new(Softsign));
        let good = ActivationSpec::custom_unattached("softsign", 1.0, 0.0, Some(1.0)).unwrap();
        assert!(!good.is_evaluable());
        assert!(reg.resolve(&good).unwrap().is_evaluable());
        let bad = ActivationSpec::custom_unattached("softsign", 1.0, 0.3, Some(1.0)).unwrap();
        assert!(reg.resolve(&bad).is_err());
        assert!(ActivationSpec::custom_unattached("x", f64::NAN, 0.0, None).is_err());
    }

    #[test]
    fn builtin_mismatch_rejected() {
        let f = ActivationFile {
            kind: ActivationKind::Relu,
            name: None,
            lipschitz: Some(2.0),
            sigma0: None,
            sup: None,
            derivative: None,
        };
        assert!(ActivationSpec::try_from(f).is_err());
    }
}
