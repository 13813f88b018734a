use std::f64::consts::PI;

use gaussproj::estimators::*;
use gaussproj::quadrature::integrate;
use gaussproj::sources::*;
use gaussproj::SeedPath;
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn phi(y: f64, v: f64) -> f64 {
    (-(y * y) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
}

/// Covariance `tI + γθθᵀ` of `Y | θ` when `X ~ N(0, γI)`.
fn gaussian_cov(theta: &ProjectionDraw, gamma: f64, t: f64) -> DMatrix<f64> {
    let k = theta.k();
    let g = theta.gram();
    DMatrix::from_fn(k, k, |i, j| gamma * g[[i, j]] + if i == j { t } else { 0.0 })
}

fn gaussian_kl(cov: &DMatrix<f64>, ref_var: f64) -> f64 {
    let k = cov.nrows() as f64;
    0.5 * (cov.trace() / ref_var - k + k * ref_var.ln() - cov.determinant().ln())
}

#[test]
fn density_matches_gaussian_closed_form() {
    let (n, gamma, t) = (12, 1.0, 0.8);
    let src = make_iid(n, Marginal::StandardNormal).unwrap();
    let theta = sample_theta(2, n, &SeedPath::root(1)).unwrap();
    let cov = gaussian_cov(&theta, gamma, t);
    let inv = cov.clone().try_inverse().unwrap();
    let xs = src.sample_x(&mut SeedPath::root(2).rng(), 40_000).unwrap();
    let mut rng = SeedPath::root(3).rng();
    for _ in 0..10 {
        let y = [rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)];
        let v = nalgebra::Vector2::new(y[0], y[1]);
        let want = (-0.5 * (v.transpose() * &inv * v)[0]).exp() / (2.0 * PI * cov.determinant().sqrt());
        let got = conditional_density_y(&theta, t, &xs, &y).unwrap();
        assert!((got.density - want).abs() <= 3.5 * got.se, "{got:?} vs {want}");
    }
}

#[test]
fn conditional_kl_matches_gaussian_closed_form() {
    let (n, t) = (16, 1.0);
    let src = make_iid(n, Marginal::StandardNormal).unwrap();
    for (i, k) in [1usize, 2].iter().enumerate() {
        let theta = sample_theta(*k, n, &SeedPath::root(10 + i as u64)).unwrap();
        let want = gaussian_kl(&gaussian_cov(&theta, 1.0, t), 1.0 + t);
        let got = kl_conditional(&theta, &src, t, 4096, 4096, &mut SeedPath::root(20 + i as u64).rng()).unwrap();
        assert!((got.value - want).abs() <= (3.0 * got.se).max(0.02 * want), "k={k}: {got:?} vs {want}");
        assert!(got.value >= -3.0 * got.se);
    }
}

#[test]
fn marginal_kl_matches_norm_mixture_quadrature() {
    // X ~ N(0, I_4): Y ~ N(0, t + S) given S = χ²₄/4 ~ Gamma(2, 1/2)
    let (n, t) = (4usize, 0.5);
    let s_density = |s: f64| 4.0 * s * (-2.0 * s).exp();
    let p_y = |y: f64| integrate(|s| s_density(s) * phi(y, t + s), 0.0, 25.0, 200);
    let want = integrate(|y| {
        let p = p_y(y);
        if p > 0.0 { p * (p / phi(y, 1.0 + t)).ln() } else { 0.0 }
    }, -25.0, 25.0, 300);
    let src = make_iid(n, Marginal::StandardNormal).unwrap();
    let got = marginal_kl(&src, t, 1, &NestedBudget::new(16, 4000, 4000), &SeedPath::root(5)).unwrap();
    assert!((got.value - want).abs() <= 3.0 * got.se + 1e-3, "{got:?} vs {want}");
    assert!(got.value <= gaussproj::bounds::kl_marginal_bound(gaussproj::stats::alpha_exact(&src).unwrap(), 1.0, t, 1) + 3.0 * got.se);
}

/// `∫ p log p` for the binary-input channel output `½[φ_t(y−a) + φ_t(y+a)]`.
fn binary_output_neg_entropy(a: f64, t: f64) -> f64 {
    let w = a + 12.0 * t.sqrt();
    integrate(|y| {
        let p = 0.5 * (phi(y - a, t) + phi(y + a, t));
        if p > 0.0 { p * p.ln() } else { 0.0 }
    }, -w, w, 400)
}

/// `E_θ f(|θ|)` for `θ ~ N(0,1)`.
fn over_theta(f: impl Fn(f64) -> f64) -> f64 {
    integrate(|th: f64| phi(th, 1.0) * f(th.abs()), -9.0, 9.0, 160)
}

#[test]
fn binary_channel_mutual_informations() {
    let t = 0.5;
    let src = make_iid(1, Marginal::Rademacher).unwrap();
    let mi_xy_oracle = over_theta(|a| -binary_output_neg_entropy(a, t) - 0.5 * (2.0 * PI * std::f64::consts::E * t).ln());
    // P_Y = N(0, 1 + t), so I(Y;Θ) = E_θ D(P_{Y|θ} ‖ G_Y)
    let mi_yt_oracle = over_theta(|a| {
        binary_output_neg_entropy(a, t) + 0.5 * (2.0 * PI * (1.0 + t)).ln() + (a * a + t) / (2.0 * (1.0 + t))
    });
    let budget = NestedBudget::new(200, 400, 400);
    let got_xy = mi_x_y(&src, t, 1, &budget, &SeedPath::root(7)).unwrap();
    assert!((got_xy.value - mi_xy_oracle).abs() <= 3.0 * got_xy.se + 2e-3, "{got_xy:?} vs {mi_xy_oracle}");
    let got_yt = mi_y_theta(&src, t, 1, &budget, &SeedPath::root(8), MiRoute::Direct).unwrap();
    assert!((got_yt.value - mi_yt_oracle).abs() <= 3.0 * got_yt.se + 2e-3, "{got_yt:?} vs {mi_yt_oracle}");
    let cap = gaussproj::bounds::awgn_capacity(1.0 / t);
    assert!((mi_xy_oracle + mi_yt_oracle - cap).abs() < 1e-8);
}

fn gaussian_cloud(m: usize, k: usize, sd: f64, seed: u64) -> Array2<f64> {
    let mut rng = SeedPath::root(seed).rng();
    Array2::from_shape_simple_fn((m, k), || sd * rng.sample::<f64, _>(StandardNormal))
}

#[test]
fn w2_one_dimensional_gaussians() {
    let a = gaussian_cloud(100_000, 1, 1.0, 1);
    let b = gaussian_cloud(100_000, 1, 2.0, 2);
    let v = w2_empirical_1d(a.as_slice().unwrap(), b.as_slice().unwrap()).unwrap();
    assert!((v - 1.0).abs() < 0.02, "{v}");
    let shifted: Vec<f64> = a.iter().map(|x| x + 3.0).collect();
    let moved: Vec<f64> = b.iter().map(|x| x + 3.0).collect();
    assert!((w2_empirical_1d(&shifted, &moved).unwrap() - v).abs() < 1e-9);
}

#[test]
fn w2_two_dimensional_gaussians() {
    let a = gaussian_cloud(2000, 2, 1.0, 3);
    let b = gaussian_cloud(2000, 2, 2.0, 4);
    let v = w2_empirical_kd(a.view(), b.view(), OtMethod::ExactAssignment).unwrap();
    assert!((v - 2.0).abs() < 0.15, "{v}");
}

#[test]
fn exact_and_entropic_agree() {
    let a = gaussian_cloud(1000, 2, 1.0, 5);
    let b = gaussian_cloud(1000, 2, 2.0, 6);
    let exact = w2_empirical_kd(a.view(), b.view(), OtMethod::ExactAssignment).unwrap();
    let entropic = w2_empirical_kd(a.view(), b.view(), OtMethod::EntropicDebiased).unwrap();
    assert!((exact - entropic).abs() <= 0.05 * exact, "{exact} vs {entropic}");
}

#[test]
fn expected_w2_gaussian_oracle() {
    // Z | θ ~ N(0, γ‖θ‖²), so E W₂² = γ E(‖θ‖ − 1)² = γ(2 − 2 E χ_n/√n).
    let n = 32usize;
    let gamma = 1.0;
    let e_chi = 2f64.sqrt() * (statrs::function::gamma::ln_gamma((n as f64 + 1.0) / 2.0) - statrs::function::gamma::ln_gamma(n as f64 / 2.0)).exp();
    let want = gamma * (2.0 - 2.0 * e_chi / (n as f64).sqrt());
    let src = make_iid(n, Marginal::StandardNormal).unwrap();
    let r = expected_w2(&src, 1, 200, 20_000, &SeedPath::root(9), OtMethod::Auto).unwrap();
    let c = r.corrected.unwrap();
    let allowance = r.bias.unwrap().abs();
    assert!((c.value - want).abs() <= 3.0 * c.se + allowance, "{r:?} vs {want}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn w2_metric_axioms(seed in 0u64..10_000, m in 2usize..12) {
        let a = gaussian_cloud(m, 2, 1.0, seed);
        let b = gaussian_cloud(m, 2, 1.5, seed + 1);
        let c = gaussian_cloud(m, 2, 0.5, seed + 2);
        let w = |x: &Array2<f64>, y: &Array2<f64>| w2_empirical_kd(x.view(), y.view(), OtMethod::ExactAssignment).unwrap();
        prop_assert_eq!(w(&a, &a), 0.0);
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() <= 1e-12 * w(&a, &b).max(1.0));
        let (ab, bc, ac) = (w(&a, &b).sqrt(), w(&b, &c).sqrt(), w(&a, &c).sqrt());
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn kl_estimates_nonnegative_within_noise(seed in 0u64..1000) {
        let src = make_iid(8, Marginal::Rademacher).unwrap();
        let theta = sample_theta(1, 8, &SeedPath::root(seed)).unwrap();
        let e = kl_conditional(&theta, &src, 1.0, 300, 300, &mut SeedPath::root(seed + 1).rng()).unwrap();
        prop_assert!(e.value >= -3.0 * e.se, "{:?}", e);
    }
}
