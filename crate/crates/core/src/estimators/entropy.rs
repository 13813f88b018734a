//! Nested Monte Carlo estimates of relative entropies and mutual informations.
//!
//! Each outer point `y` is scored with an inner-sample density estimate. Since
//! `E log p̂ ≤ log p`, plain nested estimates of `E log p` are biased low by
//! roughly `Var(kernel)/(2 m p²)`; the optional Richardson step compares `m`
//! and `2m` inner samples to estimate and remove that term.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::density::{log_gauss, sq_norm, ConditionalMixture, GaussianReference};
use super::{across_reps, replicate, EstimateReport, NestedBudget, Quantity};
use crate::error::{invalid, Result};
use crate::mc::{batch_mean_se, combined_se, log_sum_exp, Estimate, DEFAULT_BATCHES};
use crate::rng::SeedPath;
use crate::sources::{sample_theta, ProjectionDraw, VectorSource};

/// Draws `(z, ξ)` with `z = θx` for fresh `x` and standard normal `ξ`; the
/// channel output is `y = z + √t ξ`.
fn draw_outputs<R: Rng + ?Sized>(
    theta: &ProjectionDraw,
    source: &VectorSource,
    t: f64,
    count: usize,
    rng: &mut R,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let z = source.sample_projected(theta, rng, count)?;
    let xi = Array2::from_shape_simple_fn(z.raw_dim(), || rng.sample::<f64, _>(StandardNormal));
    let y = &z + &(&xi * t.sqrt());
    Ok((z, xi, y))
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("{t} must be positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlConditional {
    /// Estimate with `m_inner` inner samples.
    pub value: Estimate,
    /// `2·D(2m) − D(m)` when requested.
    pub richardson: Option<Estimate>,
}

/// `D(P_{Y|θ} ‖ G_Y)` from `n_outer` outputs scored against an `m_inner`-sample
/// conditional density.
pub fn kl_conditional<R: Rng + ?Sized>(
    theta: &ProjectionDraw,
    source: &VectorSource,
    t: f64,
    n_outer: usize,
    m_inner: usize,
    rng: &mut R,
) -> Result<Estimate> {
    Ok(kl_conditional_with(theta, source, t, n_outer, m_inner, false, rng)?.value)
}

pub fn kl_conditional_with<R: Rng + ?Sized>(
    theta: &ProjectionDraw,
    source: &VectorSource,
    t: f64,
    n_outer: usize,
    m_inner: usize,
    richardson: bool,
    rng: &mut R,
) -> Result<KlConditional> {
    check_t(t)?;
    if n_outer < 2 || m_inner == 0 {
        return Err(invalid("n_outer, m_inner", "need n_outer >= 2 and m_inner >= 1"));
    }
    let g = GaussianReference::new(theta.k(), source.gamma() + t)?;
    let inner_count = if richardson { 2 * m_inner } else { m_inner };
    let full = ConditionalMixture::for_source(theta, source, t, inner_count, rng)?;
    let half = if richardson && !full.is_exact() {
        Some(ConditionalMixture::from_centers(
            full.centers().slice(ndarray::s![..m_inner, ..]).to_owned(),
            t,
        )?)
    } else {
        None
    };
    let (_, _, y) = draw_outputs(theta, source, t, n_outer, rng)?;
    let mut buf = Vec::with_capacity(inner_count);
    let mut plain = Vec::with_capacity(n_outer);
    let mut extrapolated = Vec::with_capacity(n_outer);
    for row in y.rows() {
        let y = row.as_slice().expect("standard layout");
        let lg = g.log_density(y);
        let lf = full.log_density_buf(y, &mut buf);
        match &half {
            Some(h) => {
                let lh = h.log_density_buf(y, &mut buf);
                plain.push(lh - lg);
                extrapolated.push(2.0 * lf - lh - lg);
            }
            None => {
                plain.push(lf - lg);
                extrapolated.push(lf - lg);
            }
        }
    }
    Ok(KlConditional {
        value: batch_mean_se(&plain, DEFAULT_BATCHES),
        richardson: richardson.then(|| batch_mean_se(&extrapolated, DEFAULT_BATCHES)),
    })
}

fn theta_for(seed: &SeedPath, k: usize, n: usize) -> Result<ProjectionDraw> {
    sample_theta(k, n, &seed.child_named("theta"))
}

fn nested_report(
    quantity: Quantity,
    values: &[Estimate],
    budget: &NestedBudget,
    method: &str,
    seed: &SeedPath,
) -> EstimateReport {
    let means: Vec<f64> = values.iter().map(|e| e.value).collect();
    let est = across_reps(&means, values.first().map_or(0.0, |e| e.se));
    let mut notes = Vec::new();
    if est.value < -3.0 * est.se {
        notes.push(format!(
            "estimate {:.3e} is below zero by more than 3 SE; increase m_inner",
            est.value
        ));
    }
    EstimateReport {
        quantity,
        value: est.value,
        se: est.se,
        reps_outer: budget.reps,
        samples_inner: budget.m_inner,
        method: method.to_string(),
        seed_path: seed.clone(),
        bias: None,
        corrected: None,
        notes,
    }
}

/// `E_Θ[D(P_{Y|Θ} ‖ G_Y)]` over `budget.reps` projection draws.
pub fn expected_kl(
    source: &VectorSource,
    t: f64,
    k: usize,
    budget: &NestedBudget,
    seed: &SeedPath,
) -> Result<EstimateReport> {
    check_t(t)?;
    budget.validate()?;
    let per_rep = replicate(budget.reps, seed, |_, s| {
        let theta = theta_for(s, k, source.n())?;
        kl_conditional_with(
            &theta,
            source,
            t,
            budget.n_outer,
            budget.m_inner,
            budget.richardson,
            &mut s.child_named("density").rng(),
        )
    })?;
    let plain: Vec<Estimate> = per_rep.iter().map(|r| r.value).collect();
    let exact = source.atoms().is_some();
    let method = if exact { "nested-mc/exact-mixture" } else { "nested-mc" };
    let mut report = nested_report(Quantity::ExpectedKl, &plain, budget, method, seed);
    if budget.richardson {
        let ext: Vec<f64> = per_rep.iter().filter_map(|r| r.richardson.map(|e| e.value)).collect();
        let corrected = across_reps(&ext, per_rep[0].richardson.map_or(0.0, |e| e.se));
        report.bias = Some(report.value - corrected.value);
        report.corrected = Some(corrected);
    }
    Ok(report)
}

/// `log p̂_Y(y)` where `p̂_Y(y) = (1/m) Σ φ_{t+S_m}(y)` and `S_m = ‖X_m‖²/n`:
/// given `X`, `ΘX ~ N(0, (‖X‖²/n) I_k)`, so averaging over `Θ` is exact.
fn log_marginal_density(sq: f64, inner_s: &[f64], t: f64, k: usize) -> f64 {
    log_sum_exp(inner_s.iter().map(|&s| log_gauss(sq, t + s, k))) - (inner_s.len() as f64).ln()
}

/// `D(P_Y ‖ G_Y)` for the unconditional output law.
pub fn marginal_kl(
    source: &VectorSource,
    t: f64,
    k: usize,
    budget: &NestedBudget,
    seed: &SeedPath,
) -> Result<EstimateReport> {
    check_t(t)?;
    budget.validate()?;
    let method = "nested-mc/norm-mixture";
    if source.constant_norm() {
        // ΘX | X ~ N(0, γ I_k) for every X, so P_Y = G_Y.
        let mut report = nested_report(Quantity::MarginalKl, &[Estimate::exact(0.0)], budget, method, seed);
        report.notes.push("constant norm: P_Y equals G_Y exactly".into());
        return Ok(report);
    }
    let gamma = source.gamma();
    let values = replicate(budget.reps, seed, |_, s| {
        let mut rng = s.child_named("marginal").rng();
        let inner = source.sample_sq_norms(&mut rng, budget.m_inner)?;
        let outer = source.sample_sq_norms(&mut rng, budget.n_outer)?;
        let terms: Vec<f64> = outer
            .iter()
            .map(|&s_out| {
                let chi: f64 = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
                let sq = (t + s_out) * chi;
                log_marginal_density(sq, &inner, t, k) - log_gauss(sq, gamma + t, k)
            })
            .collect();
        Ok(batch_mean_se(&terms, DEFAULT_BATCHES))
    })?;
    Ok(nested_report(Quantity::MarginalKl, &values, budget, method, seed))
}

/// Which estimator of `I(Y;Θ)` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiRoute {
    /// `E_Θ D(P_{Y|Θ} ‖ G_Y) − D(P_Y ‖ G_Y)`.
    #[default]
    Identity,
    /// `E_Θ E_{Y|Θ} log(p̂_{Y|Θ}(Y)/p̂_Y(Y))`.
    Direct,
}

/// `I(Y; Θ)`.
pub fn mi_y_theta(
    source: &VectorSource,
    t: f64,
    k: usize,
    budget: &NestedBudget,
    seed: &SeedPath,
    route: MiRoute,
) -> Result<EstimateReport> {
    check_t(t)?;
    budget.validate()?;
    match route {
        MiRoute::Identity => {
            let kl = expected_kl(source, t, k, budget, &seed.child_named("expected-kl"))?;
            let mkl = marginal_kl(source, t, k, budget, &seed.child_named("marginal-kl"))?;
            let value = kl.value - mkl.value;
            let se = combined_se(&[kl.se, mkl.se]);
            let mut report = nested_report(
                Quantity::MiYTheta,
                &[Estimate::new(value, se)],
                budget,
                "identity",
                seed,
            );
            report.se = se;
            Ok(report)
        }
        MiRoute::Direct => {
            let values = replicate(budget.reps, seed, |_, s| {
                let theta = theta_for(s, k, source.n())?;
                let mut rng = s.child_named("density").rng();
                let mix = ConditionalMixture::for_source(&theta, source, t, budget.m_inner, &mut rng)?;
                let inner_s = source.sample_sq_norms(&mut rng, budget.m_inner)?;
                let (_, _, y) = draw_outputs(&theta, source, t, budget.n_outer, &mut rng)?;
                let mut buf = Vec::with_capacity(mix.len());
                let terms: Vec<f64> = y
                    .rows()
                    .into_iter()
                    .map(|row| {
                        let y = row.as_slice().expect("standard layout");
                        mix.log_density_buf(y, &mut buf) - log_marginal_density(sq_norm(y), &inner_s, t, k)
                    })
                    .collect();
                Ok(batch_mean_se(&terms, DEFAULT_BATCHES))
            })?;
            Ok(nested_report(Quantity::MiYTheta, &values, budget, "direct", seed))
        }
    }
}

/// `I(X; Y | Θ) = E log(φ_t(Y − ΘX) / p_{Y|Θ}(Y))`.
pub fn mi_x_y(
    source: &VectorSource,
    t: f64,
    k: usize,
    budget: &NestedBudget,
    seed: &SeedPath,
) -> Result<EstimateReport> {
    check_t(t)?;
    budget.validate()?;
    let values = replicate(budget.reps, seed, |_, s| {
        let theta = theta_for(s, k, source.n())?;
        let mut rng = s.child_named("density").rng();
        let mix = ConditionalMixture::for_source(&theta, source, t, budget.m_inner, &mut rng)?;
        let (_, xi, y) = draw_outputs(&theta, source, t, budget.n_outer, &mut rng)?;
        let mut buf = Vec::with_capacity(mix.len());
        let terms: Vec<f64> = y
            .rows()
            .into_iter()
            .zip(xi.rows())
            .map(|(yr, xr)| {
                let noise = t * xr.iter().map(|v| v * v).sum::<f64>();
                log_gauss(noise, t, k) - mix.log_density_buf(yr.as_slice().expect("standard layout"), &mut buf)
            })
            .collect();
        Ok(batch_mean_se(&terms, DEFAULT_BATCHES))
    })?;
    Ok(nested_report(Quantity::MiXY, &values, budget, "nested-mc", seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::*;

    #[test]
    fn orthonormal_rows_with_gaussian_input_give_zero_kl() {
        // θθᵀ = I_k and X ~ N(0, γI) ⇒ P_{Y|θ} = G_Y
        let n = 6;
        let mut e = Array2::zeros((2, n));
        e[[0, 1]] = 1.0;
        e[[1, 4]] = 1.0;
        let theta = ProjectionDraw::from_entries(e, SeedPath::root(0));
        let src = make_iid(n, Marginal::Normal { variance: 1.5 }).unwrap();
        let est = kl_conditional(&theta, &src, 1.0, 4000, 4000, &mut SeedPath::root(1).rng()).unwrap();
        assert!(est.value.abs() <= 3.0 * est.se + 2e-3, "{est:?}");
    }

    #[test]
    fn marginal_kl_vanishes_for_sphere() {
        let src = make_sphere(32, 1.0).unwrap();
        let r = marginal_kl(&src, 1.0, 2, &NestedBudget::new(2, 100, 100), &SeedPath::root(3)).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn drowned_channel_carries_no_information() {
        let src = make_iid(16, Marginal::StandardNormal).unwrap();
        let r = mi_x_y(&src, 1e4, 1, &NestedBudget::new(4, 500, 500), &SeedPath::root(4)).unwrap();
        assert!(r.value < 0.01, "{r:?}");
    }

    #[test]
    fn estimates_are_thread_count_independent() {
        let src = make_iid(8, Marginal::Rademacher).unwrap();
        let b = NestedBudget::new(6, 64, 64);
        let seed = SeedPath::root(77);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| expected_kl(&src, 1.0, 2, &b, &seed)).unwrap();
        let c = four.install(|| expected_kl(&src, 1.0, 2, &b, &seed)).unwrap();
        assert_eq!(a.value.to_bits(), c.value.to_bits());
        assert_eq!(a.se.to_bits(), c.se.to_bits());
    }

    #[test]
    fn richardson_reports_bias() {
        let src = make_iid(8, Marginal::StandardNormal).unwrap();
        let mut b = NestedBudget::new(4, 200, 50);
        b.richardson = true;
        let r = expected_kl(&src, 0.5, 1, &b, &SeedPath::root(2)).unwrap();
        assert!(r.bias.is_some() && r.corrected.is_some());
    }
}
