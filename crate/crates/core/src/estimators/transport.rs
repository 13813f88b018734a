//! Empirical quadratic Wasserstein distances.
//!
//! One dimension uses the sorted coupling. In `k ≥ 2` dimensions the exact
//! route solves the assignment problem (shortest augmenting paths with
//! potentials, `O(m³)`); the entropic route runs stabilized Sinkhorn with the
//! debiased divergence `S(a,b) − ½S(a,a) − ½S(b,b)`, halving `ε` until the
//! divergence stabilizes.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{across_reps, replicate, EstimateReport, Quantity};
use crate::error::{invalid, Error, Result};
use crate::rng::SeedPath;
use crate::sources::{sample_theta, VectorSource};

/// Largest cloud size accepted by the exact assignment solver.
pub const EXACT_ASSIGNMENT_MAX: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OtMethod {
    /// Sorting when `k = 1`, exact assignment up to [`EXACT_ASSIGNMENT_MAX`]
    /// points, entropic beyond.
    #[default]
    Auto,
    ExactAssignment,
    EntropicDebiased,
}

/// `(1/m) Σ (a_(i) − b_(i))²` over order statistics.
pub fn w2_empirical_1d(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.len() != samples_b.len() {
        return Err(Error::DimensionMismatch {
            expected: samples_a.len(),
            got: samples_b.len(),
        });
    }
    if samples_a.is_empty() {
        return Err(invalid("samples", "need at least one sample"));
    }
    let mut a = samples_a.to_vec();
    let mut b = samples_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

fn check_clouds(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Err(invalid("samples", "need at least one sample"));
    }
    Ok(())
}

fn cost_matrix(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Vec<f64> {
    let m = a.nrows();
    let mut c = vec![0.0; m * m];
    c.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let ai = a.row(i);
        for (j, cij) in row.iter_mut().enumerate() {
            *cij = ai.iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
        }
    });
    c
}

/// Minimum-cost perfect matching by shortest augmenting paths with row and
/// column potentials. Returns the total cost.
fn assignment_cost(cost: &[f64], m: usize) -> f64 {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * m..i0 * m];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m).map(|j| cost[(p[j] - 1) * m + (j - 1)]).sum()
}

const SINKHORN_MAX_ITERS: usize = 20_000;
/// Scalings beyond this are folded back into the potentials.
const ABSORB_AT: f64 = 1e30;

/// Entropic OT value `mean(f) + mean(g)` for uniform weights at regularization
/// `eps`, warm-started from the potentials `(f, g)`, which are updated in place.
///
/// Iterates on the scalings `(u, v)` of the kernel `exp((fᵢ + gⱼ − Cᵢⱼ)/ε)` and
/// absorbs them into the potentials whenever they grow large.
fn sinkhorn(cost: &[f64], m: usize, eps: f64, f: &mut [f64], g: &mut [f64], tol: f64) -> Result<f64> {
    let build_kernel = |f: &[f64], g: &[f64]| -> Vec<f64> {
        let mut k = vec![0.0; m * m];
        k.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            for (j, kij) in row.iter_mut().enumerate() {
                *kij = ((f[i] + g[j] - cost[i * m + j]) / eps).exp();
            }
        });
        k
    };
    let mut kernel = build_kernel(f, g);
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; m];
    let mf = m as f64;
    let mut kv = vec![0.0; m];
    let mut residual = f64::INFINITY;
    for iter in 0..SINKHORN_MAX_ITERS {
        kv.par_iter_mut().enumerate().for_each(|(i, o)| {
            *o = kernel[i * m..(i + 1) * m].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / mf;
        });
        u.iter_mut().zip(&kv).for_each(|(ui, s)| *ui = 1.0 / s);
        let mut ktu = vec![0.0; m];
        for i in 0..m {
            let ui = u[i];
            for (o, kij) in ktu.iter_mut().zip(&kernel[i * m..(i + 1) * m]) {
                *o += kij * ui;
            }
        }
        v.iter_mut().zip(&ktu).for_each(|(vj, s)| *vj = mf / s);
        let bad = u.iter().chain(&v).any(|x| !x.is_finite() || *x == 0.0);
        if bad {
            return Err(Error::NotConverged {
                method: "sinkhorn",
                iterations: iter,
                residual,
            });
        }
        if iter % 10 == 9 {
            // rows are off after the column update; columns are exact
            residual = (0..m)
                .map(|i| {
                    let s: f64 = kernel[i * m..(i + 1) * m].iter().zip(&v).map(|(a, b)| a * b).sum();
                    (u[i] * s / mf - 1.0).abs()
                })
                .fold(0.0, f64::max);
            if residual < tol {
                for i in 0..m {
                    f[i] += eps * u[i].ln();
                    g[i] += eps * v[i].ln();
                }
                return Ok((f.iter().sum::<f64>() + g.iter().sum::<f64>()) / mf);
            }
        }
        let big = u.iter().chain(&v).any(|x| *x > ABSORB_AT || *x < 1.0 / ABSORB_AT);
        if big {
            for i in 0..m {
                f[i] += eps * u[i].ln();
                g[i] += eps * v[i].ln();
            }
            u.iter_mut().for_each(|x| *x = 1.0);
            v.iter_mut().for_each(|x| *x = 1.0);
            kernel = build_kernel(f, g);
        }
    }
    Err(Error::NotConverged {
        method: "sinkhorn",
        iterations: SINKHORN_MAX_ITERS,
        residual,
    })
}

fn entropic_debiased(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<f64> {
    let m = a.nrows();
    let cab = cost_matrix(a, b);
    let caa = cost_matrix(a, a);
    let cbb = cost_matrix(b, b);
    let scale = cab.iter().sum::<f64>() / (m * m) as f64;
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut pot = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    let mut eps = scale;
    let eps_min = 1e-4 * scale;
    let tol = 1e-4;
    let mut prev: Option<f64> = None;
    while eps >= eps_min {
        let [fab, gab, faa, gaa, fbb, gbb] = &mut pot;
        let sab = sinkhorn(&cab, m, eps, fab, gab, tol)?;
        let saa = sinkhorn(&caa, m, eps, faa, gaa, tol)?;
        let sbb = sinkhorn(&cbb, m, eps, fbb, gbb, tol)?;
        let div = sab - 0.5 * (saa + sbb);
        if let Some(p) = prev {
            if (div - p).abs() <= 1e-3 * div.abs().max(1e-6 * scale) {
                return Ok(div.max(0.0));
            }
        }
        prev = Some(div);
        eps *= 0.5;
    }
    Err(Error::NotConverged {
        method: "sinkhorn epsilon annealing",
        iterations: ((scale / eps_min).log2().ceil()) as usize,
        residual: prev.unwrap_or(f64::NAN),
    })
}

/// Empirical `W₂²` between two equal-size clouds (`m × k`).
pub fn w2_empirical_kd(samples_a: ArrayView2<f64>, samples_b: ArrayView2<f64>, method: OtMethod) -> Result<f64> {
    check_clouds(&samples_a, &samples_b)?;
    let m = samples_a.nrows();
    let method = match method {
        OtMethod::Auto if m <= EXACT_ASSIGNMENT_MAX => OtMethod::ExactAssignment,
        OtMethod::Auto => OtMethod::EntropicDebiased,
        other => other,
    };
    match method {
        OtMethod::ExactAssignment => {
            if m > EXACT_ASSIGNMENT_MAX {
                return Err(invalid(
                    "method",
                    format!("exact assignment is limited to {EXACT_ASSIGNMENT_MAX} points, got {m}"),
                ));
            }
            let cost = cost_matrix(&samples_a, &samples_b);
            Ok(assignment_cost(&cost, m) / m as f64)
        }
        OtMethod::EntropicDebiased => entropic_debiased(&samples_a, &samples_b),
        OtMethod::Auto => unreachable!(),
    }
}

/// Dispatches to the sorted coupling for `k = 1` and [`w2_empirical_kd`] otherwise.
pub fn w2_empirical(samples_a: ArrayView2<f64>, samples_b: ArrayView2<f64>, method: OtMethod) -> Result<f64> {
    check_clouds(&samples_a, &samples_b)?;
    if samples_a.ncols() == 1 && method != OtMethod::EntropicDebiased {
        let a: Vec<f64> = samples_a.column(0).to_vec();
        let b: Vec<f64> = samples_b.column(0).to_vec();
        return w2_empirical_1d(&a, &b);
    }
    w2_empirical_kd(samples_a, samples_b, method)
}

/// `E_Θ[W₂²(P_{Z|Θ}, G_Z)]` from `m_samples`-point clouds per replicate.
///
/// Empirical OT overestimates the population distance. The bias probe
/// recomputes each replicate on the first halves of both clouds; the gap
/// `W(m/2) − W(m)` estimates the bias at `m`, reported in `bias`, and
/// `corrected` is `2W(m) − W(m/2)` averaged over replicates.
pub fn expected_w2(
    source: &VectorSource,
    k: usize,
    reps: usize,
    m_samples: usize,
    seed: &SeedPath,
    method: OtMethod,
) -> Result<EstimateReport> {
    if reps == 0 {
        return Err(invalid("reps", "must be at least 1"));
    }
    if m_samples < 4 {
        return Err(invalid("m_samples", "must be at least 4"));
    }
    let gamma_sd = source.gamma().sqrt();
    let half = m_samples / 2;
    let per_rep = replicate(reps, seed, |_, s| {
        let theta = sample_theta(k, source.n(), &s.child_named("theta"))?;
        let mut rng = s.child_named("clouds").rng();
        let z = source.sample_projected(&theta, &mut rng, m_samples)?;
        let g = Array2::from_shape_simple_fn((m_samples, k), || gamma_sd * rng.sample::<f64, _>(StandardNormal));
        let full = w2_empirical(z.view(), g.view(), method)?;
        let halved = w2_empirical(
            z.slice(ndarray::s![..half, ..]),
            g.slice(ndarray::s![..half, ..]),
            method,
        )?;
        Ok((full, halved))
    })?;
    let raw: Vec<f64> = per_rep.iter().map(|r| r.0).collect();
    let corrected: Vec<f64> = per_rep.iter().map(|r| 2.0 * r.0 - r.1).collect();
    let est = across_reps(&raw, 0.0);
    let corr = across_reps(&corrected, 0.0);
    let method_name = match (k, method) {
        (1, OtMethod::Auto | OtMethod::ExactAssignment) => "sorted-1d",
        (_, OtMethod::EntropicDebiased) => "entropic-debiased",
        (_, _) if m_samples <= EXACT_ASSIGNMENT_MAX => "exact-assignment",
        _ => "entropic-debiased",
    };
    Ok(EstimateReport {
        quantity: Quantity::ExpectedW2,
        value: est.value,
        se: est.se,
        reps_outer: reps,
        samples_inner: m_samples,
        method: method_name.to_string(),
        seed_path: seed.clone(),
        bias: Some(est.value - corr.value),
        corrected: Some(corr),
        notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;

    fn brute_force(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let m = a.nrows();
        let cost = cost_matrix(&a.view(), &b.view());
        let mut perm: Vec<usize> = (0..m).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
            best = best.min(c);
        });
        best / m as f64
    }

    fn permute(v: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
        if i == v.len() {
            f(v);
            return;
        }
        for j in i..v.len() {
            v.swap(i, j);
            permute(v, i + 1, f);
            v.swap(i, j);
        }
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = SeedPath::root(1).rng();
        for trial in 0..20 {
            let m = 2 + trial % 6;
            let a = Array2::from_shape_simple_fn((m, 2), || rng.sample::<f64, _>(StandardNormal));
            let b = Array2::from_shape_simple_fn((m, 2), || rng.sample::<f64, _>(StandardNormal));
            let got = w2_empirical_kd(a.view(), b.view(), OtMethod::ExactAssignment).unwrap();
            assert_relative_eq!(got, brute_force(&a, &b), max_relative = 1e-12);
        }
    }

    #[test]
    fn one_dimensional_basics() {
        let a = [3.0, 1.0, 2.0];
        assert_eq!(w2_empirical_1d(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|v| v + 5.0).collect();
        assert_relative_eq!(w2_empirical_1d(&a, &shifted).unwrap(), 25.0);
        assert!(w2_empirical_1d(&a, &a[..2]).is_err());
    }

    #[test]
    fn sinkhorn_identical_clouds_near_zero() {
        let mut rng = SeedPath::root(2).rng();
        let a = Array2::from_shape_simple_fn((60, 2), || rng.sample::<f64, _>(StandardNormal));
        let v = w2_empirical_kd(a.view(), a.view(), OtMethod::EntropicDebiased).unwrap();
        assert!(v <= 1e-6, "{v}");
        assert_eq!(w2_empirical_kd(a.view(), a.view(), OtMethod::ExactAssignment).unwrap(), 0.0);
    }
}
