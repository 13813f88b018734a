//! Distribution functionals of the input law:
//!
//! * `α(X) = E|‖X‖² − E‖X‖²| / n` (magnitude concentration),
//! * `β_r(X) = (E|⟨X₁, X₂⟩|^r)^{1/r} / n` for independent copies, `r ∈ {1, 2}`,
//! * `‖E X‖² / n`,
//!
//! estimated by Monte Carlo with batch-means standard errors, or evaluated in
//! closed form where the source law allows it.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::mc::{batch_mean_se, mean, Estimate, DEFAULT_BATCHES};
use crate::rng::SeedPath;
use crate::sources::{Marginal, SourceKind, VectorSource};

/// How pairs `(X₁, X₂)` are formed for `β_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// `2·n_pairs` fresh vectors, paired consecutively.
    #[default]
    Independent,
    /// All unordered pairs among `n_pairs` vectors. Lower variance, correlated terms.
    UStatistic,
}

/// `α(X)` by Monte Carlo. Centers at the exact `γ` when the source declares it.
pub fn estimate_alpha<R: Rng + ?Sized>(
    source: &VectorSource,
    n_samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(invalid("n_samples", "need at least 2"));
    }
    let s = source.sample_sq_norms(rng, n_samples)?;
    let center = if source.gamma_is_exact() {
        source.gamma()
    } else {
        mean(&s)
    };
    let dev: Vec<f64> = s.iter().map(|v| (v - center).abs()).collect();
    Ok(batch_mean_se(&dev, DEFAULT_BATCHES))
}

/// Normalized inner products `⟨X₁, X₂⟩/n` over pairs.
fn pair_inner_products<R: Rng + ?Sized>(
    source: &VectorSource,
    n_pairs: usize,
    mode: PairMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = source.n() as f64;
    match mode {
        PairMode::Independent => {
            let xs = source.sample_x(rng, 2 * n_pairs)?;
            Ok((0..n_pairs)
                .map(|i| xs.row(2 * i).dot(&xs.row(2 * i + 1)) / n)
                .collect())
        }
        PairMode::UStatistic => {
            let xs = source.sample_x(rng, n_pairs)?;
            let gram = xs.dot(&xs.t());
            let mut out = Vec::with_capacity(n_pairs * (n_pairs - 1) / 2);
            for i in 0..n_pairs {
                for j in (i + 1)..n_pairs {
                    out.push(gram[[i, j]] / n);
                }
            }
            Ok(out)
        }
    }
}

/// Standard error of a U-statistic mean from its first-order projection.
fn u_statistic_se(m: usize, values: &[f64]) -> f64 {
    let mut row_sums = vec![0.0; m];
    let mut idx = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            row_sums[i] += values[idx];
            row_sums[j] += values[idx];
            idx += 1;
        }
    }
    let h1: Vec<f64> = row_sums.iter().map(|s| s / (m - 1) as f64).collect();
    2.0 * (crate::mc::variance(&h1) / m as f64).sqrt()
}

fn moment_of_pairs(r: u32, values: Vec<f64>, u_stat_m: Option<usize>) -> Estimate {
    let powered: Vec<f64> = values.iter().map(|v| v.abs().powi(r as i32)).collect();
    let mut est = batch_mean_se(&powered, DEFAULT_BATCHES);
    if let Some(m) = u_stat_m {
        est.se = u_statistic_se(m, &powered);
    }
    if r == 2 {
        let root = est.value.sqrt();
        // delta method through x ↦ √x
        let se = if root > 0.0 { est.se / (2.0 * root) } else { est.se.sqrt() };
        Estimate::new(root, se)
    } else {
        est
    }
}

/// `β_r(X)` by Monte Carlo over independent pairs (`r ∈ {1, 2}`).
pub fn estimate_beta<R: Rng + ?Sized>(
    source: &VectorSource,
    r: u32,
    n_pairs: usize,
    rng: &mut R,
) -> Result<Estimate> {
    estimate_beta_with(source, r, n_pairs, PairMode::Independent, rng)
}

pub fn estimate_beta_with<R: Rng + ?Sized>(
    source: &VectorSource,
    r: u32,
    n_pairs: usize,
    mode: PairMode,
    rng: &mut R,
) -> Result<Estimate> {
    if r != 1 && r != 2 {
        return Err(invalid("r", format!("only r in {{1, 2}} is supported, got {r}")));
    }
    if n_pairs < 2 {
        return Err(invalid("n_pairs", "need at least 2"));
    }
    let values = pair_inner_products(source, n_pairs, mode, rng)?;
    let m = (mode == PairMode::UStatistic).then_some(n_pairs);
    Ok(moment_of_pairs(r, values, m))
}

/// `‖(1/n)·E[XXᵀ]‖_F` from a second-moment matrix.
pub fn beta2_exact(second_moment: &Array2<f64>, n: usize) -> Result<f64> {
    let (rows, cols) = second_moment.dim();
    if rows != n || cols != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rows.max(cols),
        });
    }
    let scale = second_moment.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((second_moment[[i, j]] - second_moment[[j, i]]).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    Ok(second_moment.iter().map(|v| v * v).sum::<f64>().sqrt() / n as f64)
}

/// Closed-form `α(X)` when available.
pub fn alpha_exact(source: &VectorSource) -> Option<f64> {
    if source.constant_norm() {
        return Some(0.0);
    }
    match source.kind() {
        SourceKind::Iid(Marginal::StandardNormal) => Some(chi_square_mad_over_n(source.n())),
        SourceKind::Iid(Marginal::Normal { variance }) => {
            Some(variance * chi_square_mad_over_n(source.n()))
        }
        _ => None,
    }
}

/// `E|χ²_n − n| / n`, the mean absolute deviation of a Gamma(n/2, 2) law.
fn chi_square_mad_over_n(n: usize) -> f64 {
    let a = n as f64 / 2.0;
    (4f64.ln() + a * a.ln() - a - ln_gamma(a) - (n as f64).ln()).exp()
}

/// Closed-form `β_r(X)` when available.
pub fn beta_exact(source: &VectorSource, r: u32) -> Option<f64> {
    let n = source.n();
    let nf = n as f64;
    let gamma = source.gamma();
    match (source.kind(), r) {
        (SourceKind::Sphere, 1) => {
            // E|U| with U² ~ Beta(1/2, (n−1)/2)
            Some(gamma * (ln_gamma(nf / 2.0) - ln_gamma((nf + 1.0) / 2.0)).exp() / std::f64::consts::PI.sqrt())
        }
        (SourceKind::Sphere, 2) => Some(gamma / nf.sqrt()),
        (SourceKind::OrthogonalSupport { .. }, 1) => Some(gamma * source.collision_probability()?),
        (SourceKind::OrthogonalSupport { .. }, 2) => {
            Some(gamma * source.collision_probability()?.sqrt())
        }
        (SourceKind::DeterministicPoint { .. }, _) => Some(gamma),
        (SourceKind::Iid(_), 2) => Some(gamma / nf.sqrt()),
        (SourceKind::Iid(Marginal::StandardNormal | Marginal::Normal { .. }), 1) => {
            // ⟨X₁,X₂⟩ | X₂ ~ N(0, σ²‖X₂‖²) and E χ_n = √2 Γ((n+1)/2)/Γ(n/2)
            let e_chi = 2f64.sqrt() * (ln_gamma((nf + 1.0) / 2.0) - ln_gamma(nf / 2.0)).exp();
            Some(gamma * (2.0 / std::f64::consts::PI).sqrt() * e_chi / nf)
        }
        (SourceKind::Iid(Marginal::Rademacher), 1) => Some(rademacher_abs_sum_mean(n) / nf),
        (
            SourceKind::Empirical {
                rows,
                with_replacement: true,
            },
            2,
        ) => {
            let m = rows.nrows() as f64;
            beta2_exact(&(rows.t().dot(rows) / m), n).ok()
        }
        _ => None,
    }
}

/// `E|Σᵢ εᵢ|` for `n` Rademacher signs.
fn rademacher_abs_sum_mean(n: usize) -> f64 {
    let nf = n as f64;
    let ln_norm = ln_gamma(nf + 1.0) - nf * 2f64.ln();
    (0..=n)
        .map(|j| {
            let dev = (2.0 * j as f64 - nf).abs();
            if dev == 0.0 {
                0.0
            } else {
                (dev.ln() + ln_norm - ln_gamma(j as f64 + 1.0) - ln_gamma((n - j) as f64 + 1.0)).exp()
            }
        })
        .sum()
}

/// Monte Carlo / closed-form budget for [`compute_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsBudget {
    pub n_samples: usize,
    pub n_pairs: usize,
}

impl Default for StatsBudget {
    fn default() -> Self {
        StatsBudget {
            n_samples: 20_000,
            n_pairs: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExactFlags {
    pub gamma: bool,
    pub alpha: bool,
    pub beta1: bool,
    pub beta2: bool,
    pub mean_sq_norm: bool,
}

/// Functionals of one source, each exact or estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub n: usize,
    pub gamma: f64,
    pub alpha: Estimate,
    pub beta1: Estimate,
    pub beta2: Estimate,
    /// `‖E X‖²/n`.
    pub mean_sq_norm: Estimate,
    pub n_samples: usize,
    pub n_pairs: usize,
    pub exact: ExactFlags,
}

impl DistributionStats {
    pub fn alpha_ratio(&self) -> f64 {
        self.alpha.value / self.gamma
    }

    pub fn beta2_ratio(&self) -> f64 {
        self.beta2.value / self.gamma
    }
}

/// Assembles [`DistributionStats`], preferring closed forms and falling back
/// to Monte Carlo on independent streams below `seed`.
pub fn compute_stats(
    source: &VectorSource,
    budget: StatsBudget,
    seed: &SeedPath,
) -> Result<DistributionStats> {
    let alpha_cf = alpha_exact(source);
    let beta1_cf = beta_exact(source, 1);
    let beta2_cf = beta_exact(source, 2);
    let mean_cf = source.mean_sq_norm_over_n();

    let alpha = match alpha_cf {
        Some(v) => Estimate::exact(v),
        None => estimate_alpha(source, budget.n_samples, &mut seed.child_named("alpha").rng())?,
    };

    let need_pairs = beta1_cf.is_none() || beta2_cf.is_none() || mean_cf.is_none();
    let (beta1, beta2, mean_sq) = if need_pairs {
        let values = pair_inner_products(
            source,
            budget.n_pairs,
            PairMode::Independent,
            &mut seed.child_named("pairs").rng(),
        )?;
        let b1 = beta1_cf.map(Estimate::exact).unwrap_or_else(|| moment_of_pairs(1, values.clone(), None));
        let b2 = beta2_cf.map(Estimate::exact).unwrap_or_else(|| moment_of_pairs(2, values.clone(), None));
        let ms = mean_cf
            .map(Estimate::exact)
            .unwrap_or_else(|| batch_mean_se(&values, DEFAULT_BATCHES));
        (b1, b2, ms)
    } else {
        (
            Estimate::exact(beta1_cf.unwrap_or_default()),
            Estimate::exact(beta2_cf.unwrap_or_default()),
            Estimate::exact(mean_cf.unwrap_or_default()),
        )
    };

    Ok(DistributionStats {
        n: source.n(),
        gamma: source.gamma(),
        alpha,
        beta1,
        beta2,
        mean_sq_norm: mean_sq,
        n_samples: if alpha_cf.is_some() { 0 } else { budget.n_samples },
        n_pairs: if need_pairs { budget.n_pairs } else { 0 },
        exact: ExactFlags {
            gamma: source.gamma_is_exact(),
            alpha: alpha_cf.is_some(),
            beta1: beta1_cf.is_some(),
            beta2: beta2_cf.is_some(),
            mean_sq_norm: mean_cf.is_some(),
        },
    })
}

/// The set `E = {x : |‖x‖²/n − γ| ≤ (ε/2)γ}` and its estimated complement mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSet {
    pub epsilon: f64,
    pub gamma: f64,
    pub prob_complement: Estimate,
}

impl TruncationSet {
    /// Markov bound `P(Eᶜ) ≤ (2/ε)·α/γ`.
    pub fn markov_bound(&self, alpha: f64) -> f64 {
        2.0 / self.epsilon * alpha / self.gamma
    }
}

pub fn truncation_probability<R: Rng + ?Sized>(
    source: &VectorSource,
    epsilon: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<TruncationSet> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid("epsilon", format!("{epsilon} must lie in (0, 1]")));
    }
    if n_samples < 2 {
        return Err(invalid("n_samples", "need at least 2"));
    }
    let gamma = source.gamma();
    let s = source.sample_sq_norms(rng, n_samples)?;
    let hits: Vec<f64> = s
        .iter()
        .map(|v| if (v - gamma).abs() > 0.5 * epsilon * gamma { 1.0 } else { 0.0 })
        .collect();
    Ok(TruncationSet {
        epsilon,
        gamma,
        prob_complement: batch_mean_se(&hits, DEFAULT_BATCHES),
    })
}
