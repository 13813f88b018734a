use gaussproj::bounds::*;
use gaussproj::moments::*;
use gaussproj::sources::*;
use gaussproj::stats::*;
use gaussproj::{Estimate, SeedPath};
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_rotation(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeedPath::root(seed).rng();
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    Array2::from_shape_fn((n, n), |(i, j)| q[(i, j)])
}

/// Rows with correlated coordinates and uneven norms.
fn skewed_dataset(rows: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeedPath::root(seed).rng();
    Array2::from_shape_fn((rows, n), |(_, j)| {
        let z: f64 = rng.sample(StandardNormal);
        z * (1.0 + j as f64 / n as f64) + if j % 3 == 0 { 0.5 } else { 0.0 }
    })
}

fn functionals(src: &VectorSource, seed: u64) -> [Estimate; 3] {
    let mut rng = SeedPath::root(seed).rng();
    [
        estimate_alpha(src, 20_000, &mut rng).unwrap(),
        estimate_beta(src, 1, 20_000, &mut rng).unwrap(),
        estimate_beta(src, 2, 20_000, &mut rng).unwrap(),
    ]
}

fn within_3se(a: &Estimate, b: &Estimate) -> bool {
    a.agrees_with(b, 3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn functionals_are_rotation_invariant(seed in 0u64..1000) {
        let n = 12;
        let rows = skewed_dataset(200, n, seed);
        let rotated = rows.dot(&random_rotation(n, seed + 1).t());
        let a = make_empirical(rows, true).unwrap();
        let b = make_empirical(rotated, true).unwrap();
        prop_assert!((a.gamma() - b.gamma()).abs() < 1e-10 * a.gamma());
        // same stream: identical row indices, so only rounding differs
        for (x, y) in functionals(&a, seed + 2).iter().zip(functionals(&b, seed + 2).iter()) {
            prop_assert!((x.value - y.value).abs() <= 1e-9 * x.value.abs().max(1e-12), "{x:?} {y:?}");
        }
        // independent streams agree statistically
        for (x, y) in functionals(&a, seed + 3).iter().zip(functionals(&b, seed + 4).iter()) {
            prop_assert!(within_3se(x, y), "{x:?} {y:?}");
        }
    }

    #[test]
    fn ratios_to_gamma_are_scale_invariant(seed in 0u64..1000) {
        let c = 3.0;
        let rows = skewed_dataset(150, 10, seed);
        let a = make_empirical(rows.clone(), true).unwrap();
        let b = make_empirical(rows * c, true).unwrap();
        prop_assert!((b.gamma() / a.gamma() - c * c).abs() < 1e-12);
        let fa = functionals(&a, seed + 1);
        let fb = functionals(&b, seed + 1);
        for (x, y) in fa.iter().zip(fb.iter()) {
            prop_assert!((x.value / a.gamma() - y.value / b.gamma()).abs() <= 1e-9 * (x.value / a.gamma()).abs().max(1e-12));
            prop_assert!((y.se - c * c * x.se).abs() <= 1e-9 * y.se.max(1e-12));
        }
    }

    #[test]
    fn beta1_never_exceeds_beta2(seed in 0u64..1000, which in 0usize..5) {
        let n = 24;
        let src = match which {
            0 => make_sphere(n, 1.5).unwrap(),
            1 => make_iid(n, Marginal::StandardNormal).unwrap(),
            2 => make_iid(n, Marginal::Rademacher).unwrap(),
            3 => make_orthogonal_support(n, &[0.4, 0.3, 0.2, 0.1], 1.0).unwrap(),
            _ => make_empirical(skewed_dataset(100, n, seed), true).unwrap(),
        };
        let mut rng = SeedPath::root(seed).rng();
        let b1 = estimate_beta(&src, 1, 20_000, &mut rng).unwrap();
        let b2 = estimate_beta(&src, 2, 20_000, &mut rng).unwrap();
        prop_assert!(b1.value <= b2.value + 3.0 * (b1.se.powi(2) + b2.se.powi(2)).sqrt(), "{b1:?} {b2:?}");
    }

    #[test]
    fn sphere_beta2_is_gamma_over_root_n(seed in 0u64..1000, n in 2usize..200, gamma in 0.1f64..5.0) {
        let src = make_sphere(n, gamma).unwrap();
        let est = estimate_beta(&src, 2, 20_000, &mut SeedPath::root(seed).rng()).unwrap();
        let want = gamma / (n as f64).sqrt();
        prop_assert!((est.value - want).abs() <= 3.0 * est.se, "{est:?} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pair_statistics_identities(seed in 0u64..100_000, n in 1usize..64, t in 0.01f64..10.0) {
        let mut rng = SeedPath::root(seed).rng();
        let x1: Vec<f64> = (0..n).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) - 1.0).collect();
        let s = pair_stats(&x1, &x2, t, n).unwrap();
        let nf = n as f64;
        let sum: f64 = x1.iter().zip(&x2).map(|(a, b)| (a + b) * (a + b)).sum();
        let diff: f64 = x1.iter().zip(&x2).map(|(a, b)| (a - b) * (a - b)).sum();
        let scale = s.v_a.abs().max(1.0);
        prop_assert!((s.v_a + s.r - (t + sum / (2.0 * nf))).abs() <= 1e-12 * scale);
        prop_assert!((s.v_a - s.r - (t + diff / (2.0 * nf))).abs() <= 1e-12 * scale);
        prop_assert!(s.v_g <= s.v_a * (1.0 + 1e-12));
    }

    #[test]
    fn g_kp_below_its_upper_bound(
        rho in -1.0f64..=1.0,
        t in 1e-3f64..20.0,
        gamma in 1e-2f64..20.0,
        k in 1usize..=6,
        plus in any::<bool>(),
    ) {
        let p = if plus { k as f64 + 1.0 } else { k as f64 - 1.0 };
        let r = rho * gamma;
        let lhs = g_kp(r / (t + gamma), k, p).unwrap();
        let rhs = g_kp_upper(r, t, gamma, k, p).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn orthogonal_moments_decrease_in_t(lambda in 0.01f64..1.0, gamma in 0.1f64..5.0, t in 0.05f64..10.0, k in 2usize..=6) {
        for p in [k as f64 - 1.0, k as f64 - 2.0] {
            prop_assert!(m_p_orthogonal(lambda, gamma, 1.1 * t, k, p) <= m_p_orthogonal(lambda, gamma, t, k, p));
        }
    }

    #[test]
    fn thm2_monotone_in_functionals(
        alpha in 1e-4f64..1.0,
        beta1 in 1e-4f64..1.0,
        beta2 in 1e-4f64..1.0,
        t in 0.05f64..10.0,
        eps in 1e-3f64..1.0,
        k in 1usize..=8,
    ) {
        let f = |a: f64, b1: f64, b2: f64| thm2_kl_bound(a, b1, b2, 1.0, t, eps, k, THM2_C).log_value;
        let base = f(alpha, beta1, beta2);
        prop_assert!(f(1.5 * alpha, beta1, beta2) > base);
        prop_assert!(f(alpha, 1.5 * beta1, beta2) > base);
        prop_assert!(f(alpha, beta1, 1.5 * beta2) > base);
        let w = |a: f64, b1: f64, b2: f64| thm1_w2_bound(a, b1, b2, 1.0, k, THM1_C).log_value;
        let wbase = w(alpha, beta1, beta2);
        prop_assert!(w(1.5 * alpha, beta1, beta2) > wbase);
        prop_assert!(w(alpha, 1.5 * beta1, beta2) > wbase);
        prop_assert!(w(alpha, beta1, 1.5 * beta2) > wbase);
    }

    #[test]
    fn thm2_terms_decrease_in_t(x in 1e-4f64..1.0, t in 0.05f64..10.0, eps in 1e-3f64..1.0, k in 1usize..=8) {
        // isolate the first and third terms by zeroing the others
        let first = |t: f64| thm2_kl_bound(x, 0.0, 0.0, 1.0, t, eps, k, THM2_C).value;
        let third = |t: f64| thm2_kl_bound(0.0, 0.0, x, 1.0, t, eps, k, THM2_C).value;
        let middle = |t: f64| thm2_kl_bound(0.0, x, 0.0, 1.0, t, eps, k, THM2_C).value;
        prop_assert!(first(1.2 * t) < first(t));
        prop_assert!(third(1.2 * t) < third(t));
        prop_assert_eq!(middle(1.2 * t), middle(t));
        // the third term grows with epsilon, the first shrinks
        prop_assert!(thm2_kl_bound(0.0, 0.0, x, 1.0, t, 1.2 * eps, k, THM2_C).value > third(t));
        prop_assert!(thm2_kl_bound(x, 0.0, 0.0, 1.0, t, 1.2 * eps, k, THM2_C).value < first(t));
    }

    #[test]
    fn sphere_bounds_monotone(ms in 1e-4f64..1.0, beta2 in 1e-4f64..1.0, t in 0.05f64..10.0, k in 1usize..=8) {
        let kl = |ms: f64, b2: f64, t: f64| thm4_kl_sphere_bound(ms, b2, 1.0, t, k).log_value;
        prop_assert!(kl(1.5 * ms, beta2, t) > kl(ms, beta2, t));
        prop_assert!(kl(ms, 1.5 * beta2, t) > kl(ms, beta2, t));
        prop_assert!(kl(ms, beta2, 1.5 * t) < kl(ms, beta2, t));
        prop_assert!(thm3_kl_k1_bound(ms, beta2, 1.5 * t) < thm3_kl_k1_bound(ms, beta2, t));
        let w = |ms: f64, b2: f64| thm5_w2_sphere_bound(ms, b2, 1.0, k, THM5_C).0.log_value;
        prop_assert!(w(1.5 * ms, beta2) > w(ms, beta2));
        prop_assert!(w(ms, 1.5 * beta2) > w(ms, beta2));
    }

    #[test]
    fn log_and_linear_values_agree(
        alpha in 1e-6f64..10.0,
        beta1 in 1e-6f64..10.0,
        beta2 in 1e-6f64..10.0,
        gamma in 0.1f64..10.0,
        t in 1e-3f64..10.0,
        k in 1usize..=64,
    ) {
        for v in [
            thm1_w2_bound(alpha, beta1, beta2, gamma, k, THM1_C),
            thm2_kl_bound(alpha, beta1, beta2, gamma, t, 1.0, k, THM2_C),
            thm4_kl_sphere_bound(alpha, beta2, gamma, t, k),
            thm5_w2_sphere_bound(alpha, beta2, gamma, k, THM5_C).0,
            mi_truncated_conditional_bound(beta1, beta2, gamma, t, 0.5, k),
        ] {
            if v.value < 1e300 {
                prop_assert!((v.log_value.exp() - v.value).abs() <= 1e-12 * v.value);
            } else {
                prop_assert!(v.log_value >= 1e300f64.ln());
            }
        }
    }
}
