//! Small Monte Carlo helpers: point estimates with standard errors.
//!
//! All reductions here run sequentially in index order so results are
//! bit-identical regardless of how the inputs were produced.

use serde::{Deserialize, Serialize};

/// A point estimate with its standard error (`se = 0` for closed forms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    pub fn new(value: f64, se: f64) -> Self {
        Estimate { value, se }
    }

    /// `|self − other| ≤ z·√(se₁² + se₂²)`.
    pub fn agrees_with(&self, other: &Estimate, z: f64) -> bool {
        (self.value - other.value).abs() <= z * combined_se(&[self.se, other.se])
    }
}

pub fn combined_se(ses: &[f64]) -> f64 {
    ses.iter().map(|s| s * s).sum::<f64>().sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Mean with the naive i.i.d. standard error.
pub fn mean_se(values: &[f64]) -> Estimate {
    Estimate {
        value: mean(values),
        se: (variance(values) / values.len() as f64).sqrt(),
    }
}

pub const DEFAULT_BATCHES: usize = 32;

/// Mean with a batch-means standard error over `batches` contiguous batches.
/// Falls back to the i.i.d. formula when there are too few values.
pub fn batch_mean_se(values: &[f64], batches: usize) -> Estimate {
    let n = values.len();
    if n < 2 * batches || batches < 2 {
        return mean_se(values);
    }
    let size = n / batches;
    let used = size * batches;
    let batch_means: Vec<f64> = values[..used].chunks(size).map(mean).collect();
    Estimate {
        value: mean(values),
        se: (variance(&batch_means) / batches as f64).sqrt(),
    }
}

/// `ln Σ exp(aᵢ)` without overflow.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_means_match_iid_for_iid_data() {
        let v: Vec<f64> = (0..3200).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let b = batch_mean_se(&v, 32);
        assert_eq!(b.value, mean(&v));
        assert!(b.se > 0.0);
    }

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }

    #[test]
    fn agreement_uses_combined_se() {
        let a = Estimate::new(1.0, 0.3);
        let b = Estimate::new(2.0, 0.4);
        assert!(a.agrees_with(&b, 2.0));
        assert!(!a.agrees_with(&b, 1.9));
    }
}
