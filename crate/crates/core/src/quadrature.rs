//! One-dimensional rules for `E[h(Z)]`, `Z ~ N(0, 1)`.
//!
//! Rules are strategies selected by name. `panel-legendre` is the default: it
//! splits the truncated support `[-10, 10]` into unit panels, inserts every
//! caller-supplied mark (kinks, jumps, steep regions of the integrand), and runs
//! an `order`-point Gauss–Legendre rule on each panel. Plain `gauss-hermite`
//! ignores marks and is exact for polynomials up to degree `2 order - 1`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gauss_hermite_normal, gauss_legendre, normal_pdf};

pub trait GaussianRule: Send + Sync {
    fn name(&self) -> &str;
    fn order(&self) -> usize;
    /// `E[h(Z)]`; `marks` are points where `h` is non-smooth or varies quickly.
    fn expect(&self, h: &mut dyn FnMut(f64) -> f64, marks: &[f64]) -> f64;
}

pub struct GaussHermite {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_hermite_normal(order);
        Self { order, nodes, weights }
    }
}

impl GaussianRule for GaussHermite {
    fn name(&self) -> &str {
        "gauss-hermite"
    }

    fn order(&self) -> usize {
        self.order
    }

    fn expect(&self, h: &mut dyn FnMut(f64) -> f64, _marks: &[f64]) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * h(x)).sum()
    }
}

pub struct PanelLegendre {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `(z, w * pdf(z) / 2)` on each unit panel `[k, k + 1]` of the support.
    unit: Vec<Vec<(f64, f64)>>,
}

/// Half-width of the truncated Gaussian support; P(|Z| > 10) ~ 1.5e-23.
pub const TRUNCATION: f64 = 10.0;

impl PanelLegendre {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        let t = TRUNCATION as i32;
        let unit = (-t..t)
            .map(|k| {
                let mid = k as f64 + 0.5;
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&x, &w)| {
                        let z = mid + 0.5 * x;
                        (z, 0.5 * w * normal_pdf(z))
                    })
                    .collect()
            })
            .collect();
        Self { order, nodes, weights, unit }
    }

    fn breakpoints(marks: &[f64]) -> Vec<f64> {
        let t = TRUNCATION as i32;
        let mut pts: Vec<f64> = (-t..=t).map(f64::from).collect();
        pts.extend(marks.iter().copied().filter(|m| m.is_finite() && m.abs() < TRUNCATION));
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        pts
    }
}

impl GaussianRule for PanelLegendre {
    fn name(&self) -> &str {
        "panel-legendre"
    }

    fn order(&self) -> usize {
        self.order
    }

    fn expect(&self, h: &mut dyn FnMut(f64) -> f64, marks: &[f64]) -> f64 {
        let pts = Self::breakpoints(marks);
        let mut acc = 0.0;
        for pair in pts.windows(2) {
            if pair[1] - pair[0] == 1.0 && pair[0].fract() == 0.0 {
                let panel = &self.unit[(pair[0] + TRUNCATION) as usize];
                acc += panel.iter().map(|&(z, w)| w * h(z)).sum::<f64>();
                continue;
            }
            let half = 0.5 * (pair[1] - pair[0]);
            let mid = 0.5 * (pair[1] + pair[0]);
            let mut panel = 0.0;
            for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                let z = mid + half * x;
                panel += w * h(z) * normal_pdf(z);
            }
            acc += half * panel;
        }
        acc
    }
}

/// Named rule plus order, as it appears in configs and method tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: String,
    pub order: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rule: "panel-legendre".into(), order: 16 }
    }
}

impl QuadratureSpec {
    pub fn new(rule: &str, order: usize) -> Self {
        Self { rule: rule.into(), order }
    }

    pub fn build(&self) -> Result<Arc<dyn GaussianRule>> {
        QuadratureRegistry::with_builtins().build(&self.rule, self.order)
    }
}

type RuleFactory = fn(usize) -> Arc<dyn GaussianRule>;

pub struct QuadratureRegistry {
    factories: BTreeMap<String, RuleFactory>,
}

impl QuadratureRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register("gauss-hermite", |n| Arc::new(GaussHermite::new(n)));
        r.register("panel-legendre", |n| Arc::new(PanelLegendre::new(n)));
        r
    }

    pub fn register(&mut self, name: &str, f: RuleFactory) {
        self.factories.insert(name.to_string(), f);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, order: usize) -> Result<Arc<dyn GaussianRule>> {
        if order < 2 {
            return Err(Error::InvalidArgument(format!("quadrature order {order} < 2")));
        }
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown quadrature rule '{name}'")))?;
        Ok(f(order))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_smooth_functions() {
        for spec in [QuadratureSpec::new("gauss-hermite", 64), QuadratureSpec::default()] {
            let rule = spec.build().unwrap();
            let m4 = rule.expect(&mut |z| z.powi(4), &[]);
            assert!((m4 - 3.0).abs() < 1e-12, "{}", rule.name());
            let c = rule.expect(&mut |z| z.cos(), &[]);
            assert!((c - (-0.5f64).exp()).abs() < 1e-13, "{}", rule.name());
        }
    }

    #[test]
    fn panel_rule_handles_kinks() {
        let rule = PanelLegendre::new(16);
        // E[max(Z - 0.3, 0)] = phi(0.3) - 0.3 (1 - Phi(0.3))
        let want = normal_pdf(0.3) - 0.3 * crate::special::normal_sf(0.3);
        let got = rule.expect(&mut |z| (z - 0.3).max(0.0), &[0.3]);
        assert!((got - want).abs() < 1e-14);
        let p = rule.expect(&mut |z| if z >= 0.3 { 1.0 } else { 0.0 }, &[0.3]);
        assert!((p - crate::special::normal_sf(0.3)).abs() < 1e-14);
    }

    #[test]
    fn unknown_rule_rejected() {
        assert!(QuadratureSpec::new("simpson", 10).build().is_err());
        assert!(QuadratureSpec::new("gauss-hermite", 1).build().is_err());
    }
}
