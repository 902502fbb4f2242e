use std::path::Path;

use serde::{Deserialize, Serialize};

use super::activation::{ActivationRegistry, ActivationSpec};
use super::weights::WeightLaw;
use crate::error::{Error, Result};

/// Hyper-parameters of a fully connected random network.
///
/// File keys: `n0`, `widths`, `output_width`, `c_b`, `c_w`,
/// `activation = {kind, name?, lipschitz?, sigma0?, sup?, derivative?}`,
/// `weights = {kind, params?}`, `inputs` (array of arrays, one per input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct NetConfig {
    pub n0: usize,
    pub widths: Vec<usize>,
    pub output_width: usize,
    pub c_b: f64,
    pub c_w: f64,
    pub activation: ActivationSpec,
    pub weights: WeightLaw,
    pub inputs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n0: usize,
    widths: Vec<usize>,
    #[serde(default = "one")]
    output_width: usize,
    c_b: f64,
    c_w: f64,
    activation: ActivationSpec,
    weights: WeightLaw,
    inputs: Vec<Vec<f64>>,
}

fn one() -> usize {
    1
}

impl From<NetConfig> for RawConfig {
    fn from(c: NetConfig) -> Self {
        Self {
            n0: c.n0,
            widths: c.widths,
            output_width: c.output_width,
            c_b: c.c_b,
            c_w: c.c_w,
            activation: c.activation,
            weights: c.weights,
            inputs: c.inputs,
        }
    }
}

impl TryFrom<RawConfig> for NetConfig {
    type Error = Error;
    fn try_from(r: RawConfig) -> Result<Self> {
        NetConfig::new(r.n0, r.widths, r.output_width, r.c_b, r.c_w, r.activation, r.weights, r.inputs)
    }
}

impl NetConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n0: usize,
        widths: Vec<usize>,
        output_width: usize,
        c_b: f64,
        c_w: f64,
        activation: ActivationSpec,
        weights: WeightLaw,
        inputs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let cfg = Self { n0, widths, output_width, c_b, c_w, activation, weights, inputs };
        cfg.validate()?;
        Ok(cfg)
    }

    #[allow(clippy::too_many_arguments)]
    /// Convenience constructor: `depth` hidden layers of equal width, one output neuron.
    pub fn equal_width(
        n0: usize,
        width: usize,
        depth: usize,
        c_b: f64,
        c_w: f64,
        activation: ActivationSpec,
        weights: WeightLaw,
        inputs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::new(n0, vec![width; depth], 1, c_b, c_w, activation, weights, inputs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n0 == 0 {
            return bad("n0 must be positive".into());
        }
        if self.widths.is_empty() {
            return bad("widths must list at least one hidden layer".into());
        }
        if self.widths.contains(&0) || self.output_width == 0 {
            return bad("every width must be positive".into());
        }
        if !(self.c_b.is_finite() && self.c_b >= 0.0) {
            return bad(format!("c_b must be finite and nonnegative, got {}", self.c_b));
        }
        if !(self.c_w.is_finite() && self.c_w > 0.0) {
            return bad(format!("c_w must be finite and positive, got {}", self.c_w));
        }
        if self.inputs.is_empty() {
            return bad("at least one input is required".into());
        }
        for (i, x) in self.inputs.iter().enumerate() {
            if x.len() != self.n0 {
                return bad(format!("input {i} has length {} but n0 = {}", x.len(), self.n0));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return bad(format!("input {i} has a non-finite entry"));
            }
        }
        for i in 0..self.inputs.len() {
            for j in 0..i {
                if self.inputs[i] == self.inputs[j] {
                    return bad(format!("inputs {j} and {i} coincide; inputs must be distinct"));
                }
            }
        }
        Ok(())
    }

    /// Depth `L` (number of hidden layers).
    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// Number of inputs `d`.
    pub fn dims(&self) -> usize {
        self.inputs.len()
    }

    /// Width of layer `l` in 0..=L+1 (`n_0`, hidden widths, output width).
    pub fn width(&self, l: usize) -> usize {
        match l {
            0 => self.n0,
            l if l <= self.depth() => self.widths[l - 1],
            l if l == self.depth() + 1 => self.output_width,
            _ => panic!("layer {l} beyond output"),
        }
    }

    pub fn with_widths(&self, widths: Vec<usize>) -> Result<Self> {
        let mut c = self.clone();
        c.widths = widths;
        c.validate()?;
        Ok(c)
    }

    pub fn with_inputs(&self, inputs: Vec<Vec<f64>>) -> Result<Self> {
        let mut c = self.clone();
        c.inputs = inputs;
        c.validate()?;
        Ok(c)
    }

    /// Attach registered custom activation functions.
    pub fn attach(&self, registry: &ActivationRegistry) -> Result<Self> {
        let mut c = self.clone();
        c.activation = registry.resolve(&self.activation)?;
        Ok(c)
    }

    pub fn input_norm(&self, i: usize) -> f64 {
        self.inputs[i].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn input_p_norm(&self, i: usize, p: f64) -> f64 {
        self.inputs[i].iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Load from a `.json` or TOML file (chosen by extension).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::WeightLaw;

    fn cfg() -> NetConfig {
        NetConfig::new(
            3,
            vec![16, 8],
            2,
            0.5,
            1.5,
            ActivationSpec::tanh(),
            WeightLaw::student_t(9.0).unwrap(),
            vec![vec![1.0, -0.25, 0.1], vec![0.3, 0.3, 1e-17]],
        )
        .unwrap()
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        let c = cfg();
        let text = c.to_toml_string().unwrap();
        assert_eq!(NetConfig::from_toml_str(&text).unwrap(), c);
        let js = c.to_json_string().unwrap();
        assert_eq!(NetConfig::from_json_str(&js).unwrap(), c);
    }

    #[test]
    fn parses_hand_written_file() {
        let text = r#"
            n0 = 2
            widths = [4, 4]
            c_b = 1
            c_w = 2
            inputs = [[1, 0], [0, 1]]
            activation = { kind = "relu" }
            weights = { kind = "rademacher" }
        "#;
        let c = NetConfig::from_toml_str(text).unwrap();
        assert_eq!(c.output_width, 1);
        assert_eq!(c.depth(), 2);
        assert_eq!(c.activation, ActivationSpec::relu());
    }

    #[test]
    fn rejects_invalid() {
        let c = cfg();
        assert!(c.with_inputs(vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).is_err());
        assert!(c.with_widths(vec![]).is_err());
        assert!(c.with_inputs(vec![vec![1.0]]).is_err());
        let mut d = c.clone();
        d.c_w = 0.0;
        assert!(d.validate().is_err());
    }
}
