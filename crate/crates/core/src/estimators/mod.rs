//! Monte Carlo and optimal-transport estimates of the quantities the bounds
//! control: conditional relative entropies, mutual informations, quadratic
//! Wasserstein distances and the density-variance integral.
//!
//! Outer replicates over `Θ` run in parallel; each draws from its own stream
//! below the caller's [`SeedPath`], and results are reduced in replicate
//! order, so every estimate is bit-identical for any thread count.

mod density;
mod entropy;
mod transport;
mod variance;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mc::{mean, variance as sample_variance, Estimate};
use crate::rng::SeedPath;

pub use density::{conditional_density_y, ConditionalMixture, DensityEstimate, GaussianReference};
pub use entropy::{
    expected_kl, kl_conditional, kl_conditional_with, marginal_kl, mi_x_y, mi_y_theta, KlConditional, MiRoute,
};
pub use transport::{expected_w2, w2_empirical, w2_empirical_1d, w2_empirical_kd, OtMethod, EXACT_ASSIGNMENT_MAX};
pub use variance::{var_density_integral, var_density_integral_from_densities, RepDensity, VdiGrid, MIN_MASS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    ExpectedW2,
    ExpectedKl,
    MarginalKl,
    MiYTheta,
    MiXY,
    VarDensityIntegral,
}

/// A replicated Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub quantity: Quantity,
    pub value: f64,
    pub se: f64,
    /// Number of outer (`Θ`) replicates.
    pub reps_outer: usize,
    pub samples_inner: usize,
    pub method: String,
    pub seed_path: SeedPath,
    /// Estimated finite-sample bias, when a probe was run.
    pub bias: Option<f64>,
    /// `value − bias` with its own standard error.
    pub corrected: Option<Estimate>,
    pub notes: Vec<String>,
}

impl EstimateReport {
    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.value, self.se)
    }

    /// Bias-corrected estimate when available, else the raw one.
    pub fn best(&self) -> Estimate {
        self.corrected.unwrap_or_else(|| self.estimate())
    }
}

/// Budget for the nested (outer `y`, inner density) Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedBudget {
    pub reps: usize,
    pub n_outer: usize,
    pub m_inner: usize,
    /// Also evaluate with `2·m_inner` inner samples and extrapolate.
    #[serde(default)]
    pub richardson: bool,
}

impl NestedBudget {
    pub fn new(reps: usize, n_outer: usize, m_inner: usize) -> Self {
        NestedBudget {
            reps,
            n_outer,
            m_inner,
            richardson: false,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(invalid("reps", "must be at least 1"));
        }
        if self.n_outer < 2 {
            return Err(invalid("n_outer", "must be at least 2"));
        }
        if self.m_inner == 0 {
            return Err(invalid("m_inner", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for NestedBudget {
    fn default() -> Self {
        NestedBudget::new(32, 2048, 4096)
    }
}

/// Runs `f(r, seed/r)` for every replicate in parallel, returning results in
/// replicate order.
pub(crate) fn replicate<T, F>(reps: usize, seed: &SeedPath, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &SeedPath) -> Result<T> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|r| f(r, &seed.child(r as u64)))
        .collect()
}

/// Mean over replicates with the spread-based standard error. With a single
/// replicate, `fallback_se` (the within-replicate error) is used.
pub(crate) fn across_reps(values: &[f64], fallback_se: f64) -> Estimate {
    let m = mean(values);
    if values.len() < 2 {
        return Estimate::new(m, fallback_se);
    }
    Estimate::new(m, (sample_variance(values) / values.len() as f64).sqrt())
}
