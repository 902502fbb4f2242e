//! Log-log rate fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::SweepRow;
use crate::distance_lab::DistanceKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("need at least two paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(LinearFit { slope, intercept: my - slope * mx, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub distance: DistanceKind,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// 95% interval from the spread of per-replicate slopes (needs two replicates).
    pub slope_ci: Option<[f64; 2]>,
    pub replicate_slopes: Vec<f64>,
    pub widths: usize,
}

/// Fit `log d = intercept + slope log n` on replicate-averaged log distances.
pub fn fit_rate(rows: &[SweepRow], kind: DistanceKind) -> Result<RateFit> {
    let mut by_n: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in rows {
        if let Some(e) = r.distance(kind) {
            if !(e.value > 0.0 && e.value.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{} at n = {} is not finite and positive ({})",
                    kind.label(),
                    r.n,
                    e.value
                )));
            }
            by_n.entry(r.n).or_default().insert(r.replicate, e.value.ln());
        }
    }
    if by_n.len() < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 distinct widths, got {}", by_n.len())));
    }
    let x: Vec<f64> = by_n.keys().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = by_n.values().map(|v| v.values().sum::<f64>() / v.len() as f64).collect();
    let fit = ols(&x, &y)?;
    let replicates: Vec<usize> = {
        let mut all: Vec<usize> = by_n.values().flat_map(|v| v.keys().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    let replicate_slopes: Vec<f64> = replicates
        .iter()
        .filter(|r| by_n.values().all(|v| v.contains_key(r)))
        .map(|r| ols(&x, &by_n.values().map(|v| v[r]).collect::<Vec<_>>()).map(|f| f.slope))
        .collect::<Result<_>>()?;
    let slope_ci = (replicate_slopes.len() >= 2).then(|| {
        let k = replicate_slopes.len() as f64;
        let mean = replicate_slopes.iter().sum::<f64>() / k;
        let sd = (replicate_slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        let t = StudentsT::new(0.0, 1.0, k - 1.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::INFINITY);
        let half = t * sd / k.sqrt();
        [fit.slope - half, fit.slope + half]
    });
    Ok(RateFit {
        distance: kind,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        slope_ci,
        replicate_slopes,
        widths: by_n.len(),
    })
}
