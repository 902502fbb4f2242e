//! Lower bounds on `det` and the smallest eigenvalue of the centered kernel
//! `K^(l) - C_b 11^T`, and the depth schedule for joint limits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit_kernel::{expected_sigma_prime_with, min_eigenvalue, KernelSequence, Matrix};
use crate::net_model::NetConfig;
use crate::quadrature::QuadratureSpec;
use crate::special::ln_factorial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelLowerBound {
    pub layer: usize,
    pub value: f64,
    pub ln_value: f64,
}

/// `K^(l) - C_b 11^T`.
pub fn hat_kernel(kernel: &KernelSequence, layer: usize) -> Result<Matrix> {
    let k = kernel.get(layer).ok_or_else(|| Error::LayerOutOfRange { layer, max: kernel.top() })?;
    Ok(k.iter().map(|r| r.iter().map(|v| v - kernel.c_b).collect()).collect())
}

/// `table[m - 2][k] = E[s'(G^(m)(x_k))]` for `m = 2..=upto`.
pub fn sigma_prime_table(
    cfg: &NetConfig,
    kernel: &KernelSequence,
    upto: usize,
    q: &QuadratureSpec,
) -> Result<Vec<Vec<f64>>> {
    (2..=upto)
        .map(|m| {
            let k = kernel.get(m).ok_or(Error::LayerOutOfRange { layer: m, max: kernel.top() })?;
            (0..kernel.dims).map(|i| expected_sigma_prime_with(&cfg.activation, k[i][i], q)).collect()
        })
        .collect()
}

/// `ln a_k(l) = sum_{m=2}^{l-1} 2 ln|E[s'(G^(m)(x_k))]|`.
pub(crate) fn ln_a(table: &[Vec<f64>], layer: usize, k: usize) -> f64 {
    (2..layer).map(|m| 2.0 * table[m - 2][k].abs().ln()).sum()
}

/// The nested sum over distinct indices `prod_i sum_{k_i != k_s, s<i} a_{k_i}`
/// taken over ordered tuples of distinct indices, which equals `d! prod_k a_k`.
pub(crate) fn ln_nested_sum(table: &[Vec<f64>], layer: usize, d: usize) -> f64 {
    ln_factorial(d as u32) + (0..d).map(|k| ln_a(table, layer, k)).sum::<f64>()
}

/// `C_W^{d(l-2)} / d! * lambda(K^(2))^d * nested sum`.
pub fn det_lower_bound(kernel: &KernelSequence, cfg: &NetConfig, layer: usize) -> Result<KernelLowerBound> {
    if layer < 3 || layer > kernel.top() {
        return Err(Error::LayerOutOfRange { layer, max: kernel.top() });
    }
    let d = kernel.dims;
    let table = sigma_prime_table(cfg, kernel, layer - 1, &QuadratureSpec::default())?;
    let lambda = min_eigenvalue(kernel.k(2));
    if lambda <= 0.0 {
        return Ok(KernelLowerBound { layer, value: 0.0, ln_value: f64::NEG_INFINITY });
    }
    let df = d as f64;
    let ln = df * (layer as f64 - 2.0) * cfg.c_w.ln() - ln_factorial(d as u32)
        + df * lambda.ln()
        + ln_nested_sum(&table, layer, d);
    Ok(KernelLowerBound { layer, value: ln.exp(), ln_value: ln })
}

/// `det bound / tr(K^(l) - C_b 11^T)^{d-1}`, a lower bound on `lambda(K^(l))`.
pub fn eigen_lower_bound(kernel: &KernelSequence, cfg: &NetConfig, layer: usize) -> Result<KernelLowerBound> {
    let det = det_lower_bound(kernel, cfg, layer)?;
    let hat = hat_kernel(kernel, layer)?;
    let tr: f64 = (0..hat.len()).map(|i| hat[i][i]).sum();
    let ln = det.ln_value - (kernel.dims as f64 - 1.0) * tr.ln();
    Ok(KernelLowerBound { layer, value: ln.exp(), ln_value: ln })
}

/// `floor(((1/2 - eps) log2 n)^{1/3})`, at least 1.
pub fn depth_schedule(n: u64, epsilon: f64) -> Result<usize> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be at least 2, got {n}")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    let x = ((0.5 - epsilon) * (n as f64).log2()).cbrt();
    // Guard exact cubes against round-off just below the integer.
    Ok(((x + 1e-12).floor() as usize).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_sum_matches_brute_force() {
        let table = vec![vec![0.7, -0.4, 0.9], vec![0.5, 0.8, 0.3]];
        let layer = 4;
        let a: Vec<f64> = (0..3).map(|k| ln_a(&table, layer, k).exp()).collect();
        let mut brute = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    if i != j && j != k && i != k {
                        brute += a[i] * a[j] * a[k];
                    }
                }
            }
        }
        assert!((ln_nested_sum(&table, layer, 3).exp() - brute).abs() < 1e-14);
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(depth_schedule(2, 0.499999).unwrap(), 1);
        assert_eq!(depth_schedule(1u64 << 54, 0.25).unwrap(), 2);
        assert!(depth_schedule(1u64 << 54, 0.0).is_err());
        assert!(depth_schedule(1, 0.25).is_err());
        let mut last = 0;
        for e in 1..63 {
            let l = depth_schedule(1u64 << e, 0.1).unwrap();
            assert!(l >= last);
            last = l;
        }
    }
}
