//! Moment functionals `m_p(Y, Θ)` and `M(Y, Θ) = √(m_{k−1} m_{k+1})`.
//!
//! For an independent pair `(X₁, X₂)` and noise power `t`, let
//! `V_a = t + ‖X₁‖²/2n + ‖X₂‖²/2n`, `V_g = √((t + ‖X₁‖²/n)(t + ‖X₂‖²/n))` and
//! `R = ⟨X₁, X₂⟩/n`. Then
//!
//! ```text
//! m_p = E[(V_a − R)^{−k/2} ((V_g² − R²)/(V_a − R))^{p/2} − V_a^{−k/2} (V_g²/V_a)^{p/2}]
//! ```
//!
//! which is estimated here by Monte Carlo over pairs, and evaluated in closed
//! form for orthogonal-support and spherical sources.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::LogValue;
use crate::error::{invalid, Error, Result};
use crate::mc::{batch_mean_se, Estimate, DEFAULT_BATCHES};
use crate::quadrature::gauss_legendre;
use crate::sources::VectorSource;

/// The tuple `(V_a, V_g, R)` for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStatistics {
    pub v_a: f64,
    pub v_g: f64,
    pub r: f64,
}

pub fn pair_stats(x1: &[f64], x2: &[f64], t: f64, n: usize) -> Result<PairStatistics> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("{t} must be positive")));
    }
    if x1.len() != n || x2.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if x1.len() != n { x1.len() } else { x2.len() },
        });
    }
    let raw = PairRaw::from_vectors(x1, x2);
    Ok(raw.statistics(t))
}

/// Source-only pair summaries, reusable across `(k, p, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PairRaw {
    s1: f64,
    s2: f64,
    r: f64,
    /// `‖X₁ − X₂‖²/n`
    diff: f64,
    /// `s1·s2 − r²`, computed as `s1 · ‖X₂ − proj_{X₁} X₂‖²/n`.
    wedge: f64,
}

impl PairRaw {
    fn from_vectors(x1: &[f64], x2: &[f64]) -> Self {
        let nf = x1.len() as f64;
        let mut n1 = 0.0;
        let mut n2 = 0.0;
        let mut dot = 0.0;
        let mut diff = 0.0;
        for (a, b) in x1.iter().zip(x2) {
            n1 += a * a;
            n2 += b * b;
            dot += a * b;
            diff += (a - b) * (a - b);
        }
        let wedge = if n1 > 0.0 {
            let c = dot / n1;
            let resid: f64 = x1.iter().zip(x2).map(|(a, b)| (b - c * a).powi(2)).sum();
            (n1 / nf) * (resid / nf)
        } else {
            0.0
        };
        PairRaw {
            s1: n1 / nf,
            s2: n2 / nf,
            r: dot / nf,
            diff: diff / nf,
            wedge,
        }
    }

    fn statistics(&self, t: f64) -> PairStatistics {
        PairStatistics {
            v_a: t + 0.5 * (self.s1 + self.s2),
            v_g: ((t + self.s1) * (t + self.s2)).sqrt(),
            r: self.r,
        }
    }

    /// Lemma-5 integrand in log space, returning an error on overflow.
    fn integrand(&self, t: f64, k: f64, p: f64) -> Result<f64> {
        let a = t + 0.5 * self.diff;
        let b = t * t + t * (self.s1 + self.s2) + self.wedge.max(0.0);
        let va = t + 0.5 * (self.s1 + self.s2);
        let vg2 = (t + self.s1) * (t + self.s2);
        let log1 = -0.5 * k * a.ln() + 0.5 * p * (b.ln() - a.ln());
        let log2 = -0.5 * k * va.ln() + 0.5 * p * (vg2.ln() - va.ln());
        if log1 > 700.0 || log2 > 700.0 {
            return Err(Error::Overflow {
                context: "moment integrand",
            });
        }
        Ok(log1.exp() - log2.exp())
    }
}

/// Independent pairs drawn once from a source, reusable for every `(k, p, t)`.
#[derive(Debug, Clone)]
pub struct PairSample {
    pairs: Vec<PairRaw>,
}

impl PairSample {
    pub fn draw<R: Rng + ?Sized>(source: &VectorSource, n_pairs: usize, rng: &mut R) -> Result<Self> {
        if n_pairs < 2 {
            return Err(invalid("n_pairs", "need at least 2"));
        }
        const CHUNK: usize = 1024;
        let mut pairs = Vec::with_capacity(n_pairs);
        let mut left = n_pairs;
        while left > 0 {
            let m = left.min(CHUNK);
            let xs = source.sample_x(rng, 2 * m)?;
            for i in 0..m {
                let a = xs.row(2 * i);
                let b = xs.row(2 * i + 1);
                pairs.push(PairRaw::from_vectors(
                    a.as_slice().expect("row-major sample"),
                    b.as_slice().expect("row-major sample"),
                ));
            }
            left -= m;
        }
        Ok(PairSample { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn statistics(&self, t: f64) -> Vec<PairStatistics> {
        self.pairs.iter().map(|p| p.statistics(t)).collect()
    }

    /// Monte Carlo `m_p` over the stored pairs.
    pub fn m_p(&self, k: usize, p: f64, t: f64) -> Result<MomentEstimate> {
        check_kpt(k, p, t)?;
        let values = self
            .pairs
            .iter()
            .map(|pr| pr.integrand(t, k as f64, p))
            .collect::<Result<Vec<f64>>>()?;
        Ok(MomentEstimate {
            k,
            p,
            t,
            value: batch_mean_se(&values, DEFAULT_BATCHES),
            method: MomentMethod::Mc,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentMethod {
    Mc,
    ClosedOrthogonal,
    ClosedSphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub k: usize,
    pub p: f64,
    pub t: f64,
    pub value: Estimate,
    pub method: MomentMethod,
}

fn check_kpt(k: usize, p: f64, t: f64) -> Result<()> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if !(p >= 0.0) {
        return Err(invalid("p", format!("{p} must be nonnegative")));
    }
    if !(t > 0.0) {
        return Err(invalid("t", format!("{t} must be positive")));
    }
    Ok(())
}

/// `g_{k,p}(u) = (1 − u)^{−k/2} (1 + u)^{p/2} − 1`.
pub fn g_kp(u: f64, k: usize, p: f64) -> Result<f64> {
    if !(u.abs() < 1.0) {
        return Err(invalid("u", format!("|u| = {} must be below 1", u.abs())));
    }
    let log = -0.5 * k as f64 * (-u).ln_1p() + 0.5 * p * u.ln_1p();
    Ok(log.exp_m1())
}

/// Upper bound on `g_{k,p}(r/(t+γ))` for `|r| ≤ γ`:
/// `((k+p)/2)·r/(t+γ) + (t+2γ)^{p/2} (t+γ)^{(k−p)/2} t^{−k/2} · r²/γ²`.
pub fn g_kp_upper(r: f64, t: f64, gamma: f64, k: usize, p: f64) -> Result<f64> {
    if !(t > 0.0) || !(gamma > 0.0) {
        return Err(invalid("t, gamma", "must be positive"));
    }
    if r.abs() > gamma {
        return Err(invalid("r", format!("|r| = {} exceeds gamma = {gamma}", r.abs())));
    }
    let kf = k as f64;
    let linear = 0.5 * (kf + p) * r / (t + gamma);
    let log_coef = 0.5 * p * (t + 2.0 * gamma).ln() + 0.5 * (kf - p) * (t + gamma).ln() - 0.5 * kf * t.ln();
    Ok(linear + log_coef.exp() * (r / gamma).powi(2))
}

/// Monte Carlo `m_p` from `n_pairs` fresh independent pairs.
pub fn m_p_mc<R: Rng + ?Sized>(
    source: &VectorSource,
    k: usize,
    p: f64,
    t: f64,
    n_pairs: usize,
    rng: &mut R,
) -> Result<MomentEstimate> {
    check_kpt(k, p, t)?;
    PairSample::draw(source, n_pairs, rng)?.m_p(k, p, t)
}

/// Closed form for a source uniform-or-weighted on orthogonal vectors of
/// squared norm `nγ` with collision probability `λ`.
pub fn m_p_orthogonal(lambda: f64, gamma: f64, t: f64, k: usize, p: f64) -> f64 {
    let kf = k as f64;
    let first = (0.5 * p * (t + 2.0 * gamma).ln() - 0.5 * kf * t.ln()).exp();
    let second = (0.5 * (p - kf) * (t + gamma).ln()).exp();
    lambda * (first - second)
}

/// Closed form for the uniform law on the sphere of squared radius `nγ`:
/// `E[(t + γ(1+U))^{p/2} / (t + γ(1−U))^{k/2}] − (t+γ)^{(p−k)/2}` where `U` is
/// the cosine of the angle between two independent uniform directions.
///
/// The expectation is computed with `u = sin φ`, which turns the density of
/// `U` into the weight `cos^{n−2} φ`, by Gauss–Legendre quadrature whose order
/// doubles from `quadrature_order` until the relative change is below `1e−10`.
pub fn m_p_sphere(n: usize, gamma: f64, t: f64, k: usize, p: f64, quadrature_order: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("n", "sphere requires n >= 2"));
    }
    if quadrature_order < 16 {
        return Err(invalid("quadrature_order", "must be at least 16"));
    }
    check_kpt(k, p, t)?;
    if !(gamma > 0.0) {
        return Err(invalid("gamma", "must be positive"));
    }
    const MAX_ORDER: usize = 4096;
    const TOL: f64 = 1e-10;
    let baseline = (0.5 * (p - k as f64) * (t + gamma).ln()).exp();
    let half_width = (40.0 / (n as f64).sqrt()).min(std::f64::consts::FRAC_PI_2);
    let eval = |order: usize| -> f64 {
        let (x, w) = gauss_legendre(order);
        let mut num = 0.0;
        let mut den = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let phi = half_width * xi;
            let c = phi.cos();
            if c <= 0.0 {
                continue;
            }
            let weight = wi * ((n as f64 - 2.0) * c.ln()).exp();
            let u = phi.sin();
            let log_f = 0.5 * p * (t + gamma * (1.0 + u)).ln() - 0.5 * k as f64 * (t + gamma * (1.0 - u)).ln();
            num += weight * (log_f.exp() - baseline);
            den += weight;
        }
        num / den
    };
    let mut order = quadrature_order;
    let mut prev = eval(order);
    while order < MAX_ORDER {
        order *= 2;
        let cur = eval(order);
        let change = (cur - prev).abs();
        if change <= TOL * cur.abs().max(TOL * baseline) {
            return Ok(cur);
        }
        prev = cur;
    }
    let last = eval(order / 2);
    Err(Error::QuadratureNotConverged {
        achieved: (prev - last).abs() / prev.abs().max(f64::MIN_POSITIVE),
        order,
    })
}

/// `M = √(m_{k−1} m_{k+1})`, flooring negative Monte Carlo inputs at zero.
pub fn big_m(m_km1: f64, m_kp1: f64) -> f64 {
    if m_km1 < 0.0 || m_kp1 < 0.0 {
        warn!("negative moment estimate floored at 0 (m_k-1 = {m_km1}, m_k+1 = {m_kp1})");
    }
    (m_km1.max(0.0) * m_kp1.max(0.0)).sqrt()
}

/// `M ≤ β₁/t` when `k = 1`.
pub fn m_bound_k1(beta1: f64, t: f64) -> f64 {
    beta1 / t
}

/// Bound on `M` for norms confined to `γ_min ≤ ‖X‖²/n ≤ γ_max`:
/// `(2γ_max/γ_min)^{1/4}·[k·β₁/γ_min + (1+2γ_max/t)^{k/2}·β₂²/γ_min²]`.
///
/// When `γ_min = γ_max = γ` and `mean_sq_norm = ‖E X‖²/n` is given, the sharper
/// `2^{1/4}[k·mean_sq_norm/γ + (1+2γ/t)^{k/2}·β₂²/γ²]` is returned instead.
pub fn m_bound_bounded(
    gamma_min: f64,
    gamma_max: f64,
    beta1: f64,
    beta2: f64,
    t: f64,
    k: usize,
    mean_sq_norm: Option<f64>,
) -> Result<LogValue> {
    if !(gamma_min > 0.0) || gamma_max < gamma_min {
        return Err(invalid("gamma_min", "need 0 < gamma_min <= gamma_max"));
    }
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    let kf = k as f64;
    let log_growth = 0.5 * kf * (2.0 * gamma_max / t).ln_1p();
    let (log_prefactor, first) = match mean_sq_norm {
        Some(ms) if gamma_min == gamma_max => (0.25 * 2f64.ln(), kf * ms / gamma_min),
        _ => (0.25 * (2.0 * gamma_max / gamma_min).ln(), kf * beta1 / gamma_min),
    };
    let second_log = log_growth + 2.0 * (beta2 / gamma_min).ln();
    Ok(LogValue::from_log(log_prefactor + crate::mc::log_sum_exp([first.ln(), second_log])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedPath;
    use crate::sources::*;
    use approx::assert_relative_eq;
    use ndarray::Array1;

    #[test]
    fn pair_stats_special_configurations() {
        let n = 4;
        let x = [1.0, -1.0, 1.0, 1.0];
        let t = 0.7;
        let s = pair_stats(&x, &x, t, n).unwrap();
        assert_relative_eq!(s.v_a, t + 1.0);
        assert_relative_eq!(s.v_g, t + 1.0);
        assert_relative_eq!(s.r, 1.0);
        let y = [1.0, 1.0, -1.0, 1.0];
        let s = pair_stats(&x, &y, t, n).unwrap();
        assert_relative_eq!(s.r, 0.0);
        assert_relative_eq!(s.v_a, t + 1.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let s = pair_stats(&x, &neg, t, n).unwrap();
        assert_relative_eq!(s.r, -1.0);
        assert_relative_eq!(s.v_g, t + 1.0);
        assert!(pair_stats(&x, &y[..3], t, n).is_err());
    }

    #[test]
    fn g_kp_values() {
        for k in 1..5 {
            assert_eq!(g_kp(0.0, k, 1.5).unwrap(), 0.0);
        }
        assert_relative_eq!(g_kp(0.5, 1, 2.0).unwrap(), 1.5 / 0.5f64.sqrt() - 1.0, epsilon = 1e-14);
        assert_relative_eq!(g_kp(0.5, 1, 2.0).unwrap(), 1.12132, epsilon = 1e-5);
        assert!(g_kp(1.0, 1, 0.0).is_err());
        assert!(g_kp(-1.0, 1, 0.0).is_err());
    }

    #[test]
    fn g_kp_above_tangent() {
        for k in 1..=6 {
            for p in [k as f64 - 1.0, k as f64 + 1.0] {
                for i in 0..1000 {
                    let u = i as f64 / 1000.0;
                    assert!(g_kp(u, k, p).unwrap() >= 0.5 * (k as f64 + p) * u - 1e-12);
                }
            }
        }
    }

    #[test]
    fn g_kp_upper_values() {
        assert_eq!(g_kp_upper(0.0, 1.0, 1.0, 3, 2.0).unwrap(), 0.0);
        assert_relative_eq!(g_kp_upper(0.5, 1.0, 1.0, 1, 0.0).unwrap(), 0.125 + 2f64.sqrt() * 0.25, epsilon = 1e-14);
        assert_relative_eq!(g_kp_upper(0.5, 1.0, 1.0, 1, 0.0).unwrap(), 0.4786, epsilon = 1e-4);
        assert!(g_kp_upper(1.5, 1.0, 1.0, 1, 0.0).is_err());
    }

    #[test]
    fn orthogonal_closed_form_values() {
        assert_eq!(m_p_orthogonal(0.0, 1.0, 1.0, 1, 0.0), 0.0);
        let m0 = m_p_orthogonal(0.1, 1.0, 1.0, 1, 0.0);
        let m2 = m_p_orthogonal(0.1, 1.0, 1.0, 1, 2.0);
        assert_relative_eq!(m0, 0.1 * (1.0 - 0.5f64.sqrt()), epsilon = 1e-15);
        assert_relative_eq!(m2, 0.1 * (3.0 - 2f64.sqrt()), epsilon = 1e-15);
        assert_relative_eq!(big_m(m0, m2), 0.06816, epsilon = 1e-5);
    }

    #[test]
    fn orthogonal_decreases_in_t_when_k_exceeds_p() {
        for (k, p) in [(2, 1.0), (3, 2.0), (1, 0.0), (4, 0.0)] {
            let mut last = f64::INFINITY;
            for i in 1..200 {
                let t = 0.05 * i as f64;
                let v = m_p_orthogonal(0.3, 1.0, t, k, p);
                assert!(v < last);
                last = v;
            }
        }
    }

    #[test]
    fn big_m_basic() {
        assert_eq!(big_m(0.0, 5.0), 0.0);
        assert_eq!(big_m(4.0, 9.0), 6.0);
        assert_eq!(big_m(-0.1, 9.0), 0.0);
    }

    #[test]
    fn lemma_bounds_arithmetic() {
        assert_eq!(m_bound_k1(1.0, 4.0), 0.25);
        let b = m_bound_bounded(1.0, 1.0, 0.0, 0.02f64.sqrt(), 2.0, 2, Some(0.0)).unwrap();
        assert_relative_eq!(b.value, 2f64.powf(0.25) * 2.0 * 0.02, epsilon = 1e-12);
        assert_relative_eq!(b.value, 0.04757, epsilon = 1e-4);
        assert!(m_bound_bounded(0.0, 1.0, 0.1, 0.1, 1.0, 1, None).is_err());
    }

    #[test]
    fn deterministic_point_is_exact() {
        let x = Array1::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let src = make_deterministic(x).unwrap();
        let gamma = src.gamma();
        let mut rng = SeedPath::root(5).rng();
        for (k, p, t) in [(1, 0.0, 0.5), (2, 3.0, 1.0), (3, 2.0, 4.0)] {
            let m = m_p_mc(&src, k, p, t, 10, &mut rng).unwrap();
            let want = g_kp(gamma / (t + gamma), k, p).unwrap() * (t + gamma).powf(0.5 * (p - k as f64));
            assert_relative_eq!(m.value.value, want, max_relative = 1e-12);
            assert!(m.value.se < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn sphere_quadrature_limits() {
        let v = m_p_sphere(1_000_000, 1.0, 1.0, 2, 1.0, 16).unwrap();
        assert!(v.abs() < 1e-4 && v >= 0.0, "{v}");
        assert!(m_p_sphere(1, 1.0, 1.0, 1, 0.0, 16).is_err());
        assert!(m_p_sphere(10, 1.0, 1.0, 1, 0.0, 8).is_err());
    }

    #[test]
    fn sphere_n2_matches_arcsine_oracle() {
        // n = 2: U = cos(uniform angle); integrate directly over the angle.
        let (k, p, t, gamma) = (1usize, 2.0, 1.0, 1.0);
        let direct = crate::quadrature::integrate(
            |a: f64| {
                let u = a.cos();
                (t + gamma * (1.0 + u)).powf(p / 2.0) / (t + gamma * (1.0 - u)).powf(k as f64 / 2.0)
            },
            0.0,
            std::f64::consts::PI,
            200,
        ) / std::f64::consts::PI
            - (t + gamma).powf((p - k as f64) / 2.0);
        let v = m_p_sphere(2, gamma, t, k, p, 16).unwrap();
        assert_relative_eq!(v, direct, max_relative = 1e-9);
    }

    #[test]
    fn sphere_mc_agrees_with_quadrature() {
        let src = make_sphere(50, 1.0).unwrap();
        let m = m_p_mc(&src, 2, 1.0, 1.0, 40_000, &mut SeedPath::root(9).rng()).unwrap();
        let q = m_p_sphere(50, 1.0, 1.0, 2, 1.0, 16).unwrap();
        assert!((m.value.value - q).abs() <= 3.0 * m.value.se, "{m:?} vs {q}");
    }

    #[test]
    fn orthogonal_mc_agrees_with_closed_form() {
        let src = make_orthogonal_support(10, &[0.1; 10], 1.0).unwrap();
        let pairs = PairSample::draw(&src, 40_000, &mut SeedPath::root(3).rng()).unwrap();
        for (k, p) in [(1, 0.0), (1, 2.0), (2, 3.0)] {
            let m = pairs.m_p(k, p, 1.0).unwrap();
            let c = m_p_orthogonal(0.1, 1.0, 1.0, k, p);
            assert!((m.value.value - c).abs() <= 3.0 * m.value.se, "{m:?} vs {c}");
        }
    }
}
