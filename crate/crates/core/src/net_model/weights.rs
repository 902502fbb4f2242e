//! Weight laws: centered, unit-variance distributions for the i.i.d. weights.
//!
//! A [`WeightLaw`] is the serializable record `{kind, params}`; it resolves to a
//! [`WeightDistribution`] strategy through the [`WeightLawRegistry`]. Moments are
//! handled in log-space because the explicit bounds ask for orders in the
//! hundreds (`5 * 2^(L+1)`), where Gaussian moments overflow `f64`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::special::ln_double_factorial_odd;

/// How the sampler should draw this law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingPath {
    Gaussian,
    Rademacher,
    Generic,
    Unavailable,
}

pub trait WeightDistribution: Send + Sync {
    fn name(&self) -> &str;
    /// `ln E[W^p]` for even `p >= 2`, `None` when the moment is infinite.
    fn ln_even_moment(&self, p: u32) -> Option<f64>;
    /// Largest even `p` with finite `E[W^p]`; `None` means all moments are finite.
    fn max_finite_moment(&self) -> Option<u32>;
    fn sampling_path(&self) -> SamplingPath;
    /// Fill `out` with i.i.d. draws. Only called when the path is not `Unavailable`.
    fn fill(&self, rng: &mut StreamRng, out: &mut [f64]);
}

struct GaussianLaw;
struct RademacherLaw;
struct UniformLaw;
struct StudentTLaw {
    df: f64,
    dist: StudentT<f64>,
    scale: f64,
}
struct MomentTableLaw {
    name: String,
    ln_moments: BTreeMap<u32, f64>,
    max: u32,
}

impl WeightDistribution for GaussianLaw {
    fn name(&self) -> &str {
        "gaussian"
    }
    fn ln_even_moment(&self, p: u32) -> Option<f64> {
        Some(ln_double_factorial_odd(p))
    }
    fn max_finite_moment(&self) -> Option<u32> {
        None
    }
    fn sampling_path(&self) -> SamplingPath {
        SamplingPath::Gaussian
    }
    fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for v in out {
            *v = rng.sample(StandardNormal);
        }
    }
}

impl WeightDistribution for RademacherLaw {
    fn name(&self) -> &str {
        "rademacher"
    }
    fn ln_even_moment(&self, _p: u32) -> Option<f64> {
        Some(0.0)
    }
    fn max_finite_moment(&self) -> Option<u32> {
        None
    }
    fn sampling_path(&self) -> SamplingPath {
        SamplingPath::Rademacher
    }
    fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for chunk in out.chunks_mut(64) {
            let bits: u64 = rng.random();
            for (i, v) in chunk.iter_mut().enumerate() {
                *v = if (bits >> i) & 1 == 1 { 1.0 } else { -1.0 };
            }
        }
    }
}

const SQRT_3: f64 = 1.732_050_807_568_877_2;

impl WeightDistribution for UniformLaw {
    fn name(&self) -> &str {
        "uniform"
    }
    /// `E[W^p] = 3^{p/2} / (p + 1)` for `W ~ U(-sqrt 3, sqrt 3)`.
    fn ln_even_moment(&self, p: u32) -> Option<f64> {
        Some(0.5 * p as f64 * 3f64.ln() - (p as f64 + 1.0).ln())
    }
    fn max_finite_moment(&self) -> Option<u32> {
        None
    }
    fn sampling_path(&self) -> SamplingPath {
        SamplingPath::Generic
    }
    fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for v in out {
            *v = SQRT_3 * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
}

impl WeightDistribution for StudentTLaw {
    fn name(&self) -> &str {
        "student-t"
    }
    /// For `W = T sqrt((df-2)/df)`: `E[W^p] = (df-2)^{p/2} prod_{i<=p/2} (2i-1)/(df-2i)`, `p < df`.
    fn ln_even_moment(&self, p: u32) -> Option<f64> {
        if p as f64 >= self.df {
            return None;
        }
        let half = p / 2;
        let mut acc = 0.5 * p as f64 * (self.df - 2.0).ln();
        for i in 1..=half {
            acc += (2.0 * i as f64 - 1.0).ln() - (self.df - 2.0 * i as f64).ln();
        }
        Some(acc)
    }
    fn max_finite_moment(&self) -> Option<u32> {
        let mut p = 2u32;
        while ((p + 2) as f64) < self.df {
            p += 2;
        }
        Some(p)
    }
    fn sampling_path(&self) -> SamplingPath {
        SamplingPath::Generic
    }
    fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for v in out {
            *v = self.scale * self.dist.sample(rng);
        }
    }
}

impl WeightDistribution for MomentTableLaw {
    fn name(&self) -> &str {
        &self.name
    }
    fn ln_even_moment(&self, p: u32) -> Option<f64> {
        self.ln_moments.get(&p).copied()
    }
    fn max_finite_moment(&self) -> Option<u32> {
        Some(self.max)
    }
    fn sampling_path(&self) -> SamplingPath {
        SamplingPath::Unavailable
    }
    fn fill(&self, _rng: &mut StreamRng, _out: &mut [f64]) {
        unreachable!("moment-table laws are not sampleable")
    }
}

/// Serializable weight-law record, e.g. `{kind = "student-t", params = {df = 10}}`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "WeightFile", into = "WeightFile")]
pub struct WeightLaw {
    kind: String,
    params: BTreeMap<String, Value>,
    dist: Arc<dyn WeightDistribution>,
}

impl fmt::Debug for WeightLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightLaw").field("kind", &self.kind).field("params", &self.params).finish()
    }
}

impl PartialEq for WeightLaw {
    fn eq(&self, o: &Self) -> bool {
        self.kind == o.kind && self.params == o.params
    }
}

impl WeightLaw {
    pub fn gaussian() -> Self {
        Self::from_parts("gaussian", BTreeMap::new()).expect("builtin")
    }
    pub fn rademacher() -> Self {
        Self::from_parts("rademacher", BTreeMap::new()).expect("builtin")
    }
    pub fn uniform() -> Self {
        Self::from_parts("uniform", BTreeMap::new()).expect("builtin")
    }
    pub fn student_t(df: f64) -> Result<Self> {
        Self::from_parts("student-t", BTreeMap::from([("df".to_string(), Value::from(df))]))
    }
    /// A law known only through its even moments (`moments[p] = E[W^p]`); not sampleable.
    pub fn custom_moments(name: &str, moments: &BTreeMap<u32, f64>) -> Result<Self> {
        let table: serde_json::Map<String, Value> =
            moments.iter().map(|(p, v)| (p.to_string(), Value::from(*v))).collect();
        Self::from_parts(
            "custom",
            BTreeMap::from([("name".to_string(), Value::from(name)), ("moments".to_string(), Value::Object(table))]),
        )
    }

    /// Wrap a user strategy (not serializable through the default registry).
    pub fn from_distribution(dist: Arc<dyn WeightDistribution>) -> Self {
        Self { kind: dist.name().to_string(), params: BTreeMap::new(), dist }
    }

    pub fn from_parts(kind: &str, params: BTreeMap<String, Value>) -> Result<Self> {
        WeightLawRegistry::with_builtins().build(kind, params)
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn params(&self) -> &BTreeMap<String, Value> {
        &self.params
    }

    pub fn distribution(&self) -> &Arc<dyn WeightDistribution> {
        &self.dist
    }

    pub fn is_gaussian(&self) -> bool {
        self.dist.sampling_path() == SamplingPath::Gaussian
    }

    pub fn is_sampleable(&self) -> bool {
        self.dist.sampling_path() != SamplingPath::Unavailable
    }

    pub fn max_finite_moment(&self) -> Option<u32> {
        self.dist.max_finite_moment()
    }

    fn unavailable(&self, p: u32) -> Error {
        Error::MomentUnavailable {
            law: self.kind.clone(),
            p,
            max: self.max_finite_moment().map_or("unbounded".into(), |m| m.to_string()),
        }
    }

    /// `ln E[|W|^p]`: exact for even `p`, the Hölder bracket `(p/(p+1)) ln E[W^{p+1}]` for odd `p`.
    pub fn ln_abs_moment(&self, p: u32) -> Result<f64> {
        if p == 0 {
            return Ok(0.0);
        }
        let even = if p.is_multiple_of(2) { p } else { p + 1 };
        if let Some(max) = self.max_finite_moment() {
            if even > max {
                return Err(self.unavailable(p));
            }
        }
        if even == 2 {
            return Ok(0.0);
        }
        let ln = self.dist.ln_even_moment(even).ok_or_else(|| self.unavailable(p))?;
        Ok(if p.is_multiple_of(2) { ln } else { ln * p as f64 / even as f64 })
    }

    /// `ln (E[|W|^p]^{1/p})`.
    pub fn ln_moment_root(&self, p: u32) -> Result<f64> {
        Ok(self.ln_abs_moment(p)? / p as f64)
    }
}

/// `E[|W|^p]` (exact for even `p`, Hölder upper bracket for odd `p`).
pub fn weight_abs_moment(law: &WeightLaw, p: u32) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidArgument("moment order must be positive".into()));
    }
    Ok(law.ln_abs_moment(p)?.exp())
}

type LawFactory = fn(&BTreeMap<String, Value>) -> Result<Arc<dyn WeightDistribution>>;

/// Name -> factory table for weight laws.
pub struct WeightLawRegistry {
    factories: BTreeMap<String, LawFactory>,
}

fn no_params(kind: &str, params: &BTreeMap<String, Value>) -> Result<()> {
    if params.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("weight law '{kind}' takes no parameters")))
    }
}

impl WeightLawRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register("gaussian", |p| {
            no_params("gaussian", p)?;
            Ok(Arc::new(GaussianLaw))
        });
        r.register("rademacher", |p| {
            no_params("rademacher", p)?;
            Ok(Arc::new(RademacherLaw))
        });
        r.register("uniform", |p| {
            no_params("uniform", p)?;
            Ok(Arc::new(UniformLaw))
        });
        r.register("student-t", |p| {
            let df = p
                .get("df")
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Config("student-t needs numeric params.df".into()))?;
            if !(df > 2.0 && df.is_finite()) {
                return Err(Error::Config(format!("student-t df must exceed 2 for unit variance, got {df}")));
            }
            let dist = StudentT::new(df).map_err(|e| Error::Config(e.to_string()))?;
            Ok(Arc::new(StudentTLaw { df, dist, scale: ((df - 2.0) / df).sqrt() }))
        });
        r.register("custom", |p| {
            let name = p
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Config("custom weight law needs params.name".into()))?;
            let table = p
                .get("moments")
                .and_then(Value::as_object)
                .ok_or_else(|| Error::Config("custom weight law needs params.moments".into()))?;
            let mut ln_moments = BTreeMap::new();
            for (k, v) in table {
                let order: u32 = k.parse().map_err(|_| Error::Config(format!("moment key '{k}' is not an integer")))?;
                let val = v.as_f64().ok_or_else(|| Error::Config(format!("moment {k} is not a number")))?;
                if !order.is_multiple_of(2) || order < 2 {
                    return Err(Error::Config(format!("moment keys must be even integers >= 2, got {order}")));
                }
                if !(val.is_finite() && val > 0.0) {
                    return Err(Error::Config(format!("moment {order} must be finite and positive")));
                }
                ln_moments.insert(order, val.ln());
            }
            match ln_moments.get(&2) {
                Some(0.0) => {}
                _ => return Err(Error::Config("custom weight law must state moments.2 = 1".into())),
            }
            let mut max = 2;
            while ln_moments.contains_key(&(max + 2)) {
                max += 2;
            }
            Ok(Arc::new(MomentTableLaw { name: name.to_string(), ln_moments, max }))
        });
        r
    }

    pub fn register(&mut self, kind: &str, f: LawFactory) {
        self.factories.insert(kind.to_string(), f);
    }

    pub fn build(&self, kind: &str, params: BTreeMap<String, Value>) -> Result<WeightLaw> {
        let f = self.factories.get(kind).ok_or_else(|| Error::Config(format!("unknown weight law '{kind}'")))?;
        let dist = f(&params)?;
        Ok(WeightLaw { kind: kind.to_string(), params, dist })
    }
}

#[derive(Serialize, Deserialize)]
struct WeightFile {
    kind: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    params: BTreeMap<String, Value>,
}

impl From<WeightLaw> for WeightFile {
    fn from(w: WeightLaw) -> Self {
        Self { kind: w.kind, params: w.params }
    }
}

impl TryFrom<WeightFile> for WeightLaw {
    type Error = Error;
    fn try_from(f: WeightFile) -> Result<Self> {
        WeightLaw::from_parts(&f.kind, f.params)
    }
}
