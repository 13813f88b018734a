//! Closed-form right-hand sides of the projection bounds.
//!
//! Factors such as `(1 + cγ/t)^{k/4}` can be astronomically large for small
//! `t`, so composite bounds are carried as [`LogValue`]s.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::mc::{log_sum_exp, mean_se, Estimate};

pub const THM1_C: f64 = 40.0;
pub const THM2_C: f64 = 3.0;
pub const THM5_C: f64 = 10.0;
pub const COR1_C: f64 = 40.0;

/// A nonnegative quantity with its natural log. `value` is `+∞` when the
/// linear value is not representable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub value: f64,
    pub log_value: f64,
}

impl LogValue {
    pub fn from_log(log_value: f64) -> Self {
        LogValue {
            value: log_value.exp(),
            log_value,
        }
    }

    pub fn from_value(value: f64) -> Self {
        LogValue {
            value,
            log_value: value.ln(),
        }
    }

    pub fn zero() -> Self {
        LogValue::from_value(0.0)
    }

    /// Sum of nonnegative terms given by their logs.
    pub fn sum_logs(logs: &[f64]) -> Self {
        LogValue::from_log(log_sum_exp(logs.iter().copied()))
    }

    pub fn scale(self, c: f64) -> Self {
        LogValue::from_log(self.log_value + c.ln())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption {
    pub name: String,
    pub ok: bool,
}

/// An evaluated bound with every input recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub params: BTreeMap<String, f64>,
    pub value: f64,
    pub log_value: f64,
    pub assumptions_ok: Vec<Assumption>,
}

impl BoundReport {
    pub fn new(name: &str, params: &[(&str, f64)], v: LogValue) -> Self {
        BoundReport {
            bound_name: name.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value: v.value,
            log_value: v.log_value,
            assumptions_ok: Vec::new(),
        }
    }

    pub fn assume(mut self, name: &str, ok: bool) -> Self {
        self.assumptions_ok.push(Assumption {
            name: name.to_string(),
            ok,
        });
        self
    }

    pub fn citable(&self) -> bool {
        self.assumptions_ok.iter().all(|a| a.ok)
    }
}

fn kappa_objective(x: f64) -> f64 {
    x.ln_1p() / x.sqrt()
}

/// `(κ, argmax)` for `κ = sup_{x>0} log(1+x)/√x`.
fn kappa_search() -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.5f64, 20.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    while (b - a).abs() > 1e-12 {
        if kappa_objective(c) > kappa_objective(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
    }
    let x = 0.5 * (a + b);
    (kappa_objective(x), x)
}

static KAPPA: OnceLock<(f64, f64)> = OnceLock::new();

/// `κ = sup_{x>0} log(1+x)/√x ≈ 0.80474`.
pub fn kappa() -> f64 {
    KAPPA.get_or_init(kappa_search).0
}

pub fn kappa_maximizer() -> f64 {
    KAPPA.get_or_init(kappa_search).1
}

/// `I(Y;Θ) ≤ κ (πk/2)^{1/4} √M`.
pub fn mi_bound_from_m(m_value: f64, k: usize) -> f64 {
    kappa() * (PI * k as f64 / 2.0).powf(0.25) * m_value.max(0.0).sqrt()
}

/// `I(Y;Θ) ≤ κ ∫ √Var(p_{Y|Θ}(y)) dy`.
pub fn mi_bound_from_var_integral(integral: f64) -> f64 {
    kappa() * integral
}

/// `D(P_Y ‖ G_Y) ≤ (k/2) log(1 + γ/t) · α/γ`.
pub fn kl_marginal_bound(alpha: f64, gamma: f64, t: f64, k: usize) -> f64 {
    0.5 * k as f64 * (gamma / t).ln_1p() * alpha / gamma
}

/// `E[W₂²(P_{Z|Θ}, G_Z)] ≤ γ C [kα/γ + k^{3/4}(β₁/γ)^{1/2} + k(β₂/γ)^{4/(k+4)}]`.
pub fn thm1_w2_bound(alpha: f64, beta1: f64, beta2: f64, gamma: f64, k: usize, c: f64) -> LogValue {
    let kf = k as f64;
    let terms = [
        kf.ln() + (alpha / gamma).ln(),
        0.75 * kf.ln() + 0.5 * (beta1 / gamma).ln(),
        kf.ln() + 4.0 / (kf + 4.0) * (beta2 / gamma).ln(),
    ];
    LogValue::from_log(gamma.ln() + c.ln() + log_sum_exp(terms))
}

fn thm2_log_terms(alpha: f64, beta1: f64, beta2: f64, gamma: f64, t: f64, epsilon: f64, k: usize) -> [f64; 3] {
    let kf = k as f64;
    [
        kf.ln() + (gamma / t).ln_1p().ln() + (alpha / (epsilon * gamma)).ln(),
        0.75 * kf.ln() + 0.5 * (beta1 / gamma).ln(),
        0.25 * kf.ln() + 0.25 * kf * ((2.0 + epsilon) * gamma / t).ln_1p() + (beta2 / gamma).ln(),
    ]
}

/// `E[D(P_{Y|Θ} ‖ G_Y)] ≤ C [k log(1+γ/t) α/(εγ) + k^{3/4}(β₁/γ)^{1/2}
/// + k^{1/4}(1 + (2+ε)γ/t)^{k/4} β₂/γ]`.
#[allow(clippy::too_many_arguments)]
pub fn thm2_kl_bound(
    alpha: f64,
    beta1: f64,
    beta2: f64,
    gamma: f64,
    t: f64,
    epsilon: f64,
    k: usize,
    c: f64,
) -> LogValue {
    let terms = thm2_log_terms(alpha, beta1, beta2, gamma, t, epsilon, k);
    LogValue::from_log(c.ln() + log_sum_exp(terms))
}

pub const EPSILON_FLOOR: f64 = 1e-4;

/// Minimizes [`thm2_kl_bound`] over `ε ∈ [EPSILON_FLOOR, 1]`: a log-spaced grid
/// followed by golden-section refinement around the best grid point.
pub fn thm2_optimize_epsilon(
    alpha: f64,
    beta1: f64,
    beta2: f64,
    gamma: f64,
    t: f64,
    k: usize,
    c: f64,
) -> (f64, LogValue) {
    let f = |le: f64| thm2_kl_bound(alpha, beta1, beta2, gamma, t, le.exp(), k, c).log_value;
    let lo = EPSILON_FLOOR.ln();
    let steps = 200;
    let grid: Vec<f64> = (0..=steps).map(|i| lo * (1.0 - i as f64 / steps as f64)).collect();
    let mut best = steps;
    for (i, &le) in grid.iter().enumerate() {
        if f(le) < f(grid[best]) {
            best = i;
        }
    }
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(steps)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let x1 = b - inv_phi * (b - a);
        let x2 = a + inv_phi * (b - a);
        if f(x1) < f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let refined = 0.5 * (a + b);
    let le = if f(refined) < f(grid[best]) { refined } else { grid[best] };
    let eps = le.exp().clamp(EPSILON_FLOOR, 1.0);
    (eps, thm2_kl_bound(alpha, beta1, beta2, gamma, t, eps, k, c))
}

/// `E[W₂²]/γ ≤ C′(n^{−1/4} + k n^{−2/(k+4)})`.
pub fn cor1_w2_bound(n: usize, k: usize, c_prime: f64) -> f64 {
    let nf = n as f64;
    let kf = k as f64;
    c_prime * (nf.powf(-0.25) + kf * nf.powf(-2.0 / (kf + 4.0)))
}

/// `E[D(P_{Y|Θ} ‖ G_Y)] ≤ α/(2t) + √(β₁/t)` for `k = 1`.
pub fn thm3_kl_k1_bound(alpha: f64, beta1: f64, t: f64) -> f64 {
    alpha / (2.0 * t) + (beta1 / t).sqrt()
}

/// Constant-norm case: `k^{3/4}(‖EX‖²/(nγ))^{1/2} + k^{1/4}(1+2γ/t)^{k/4} β₂/γ`.
pub fn thm4_kl_sphere_bound(mean_sq_norm_over_n: f64, beta2: f64, gamma: f64, t: f64, k: usize) -> LogValue {
    let kf = k as f64;
    LogValue::sum_logs(&[
        0.75 * kf.ln() + 0.5 * (mean_sq_norm_over_n / gamma).ln(),
        0.25 * kf.ln() + 0.25 * kf * (2.0 * gamma / t).ln_1p() + (beta2 / gamma).ln(),
    ])
}

/// Constant-norm W₂ bound `Cγ[k^{3/4}(‖EX‖²/(nγ))^{1/2} + k(β₂/γ)^{4/(k+4)}]`
/// together with the noise level `t* = (3γ/2)(k^{1/4}β₂/(4γ))^{4/(k+4)}`.
pub fn thm5_w2_sphere_bound(mean_sq_norm_over_n: f64, beta2: f64, gamma: f64, k: usize, c: f64) -> (LogValue, f64) {
    let kf = k as f64;
    let v = LogValue::sum_logs(&[
        0.75 * kf.ln() + 0.5 * (mean_sq_norm_over_n / gamma).ln(),
        kf.ln() + 4.0 / (kf + 4.0) * (beta2 / gamma).ln(),
    ])
    .scale(c * gamma);
    (v, thm5_t_star(beta2, gamma, k))
}

pub fn thm5_t_star(beta2: f64, gamma: f64, k: usize) -> f64 {
    let kf = k as f64;
    1.5 * gamma * (kf.powf(0.25) * beta2 / (4.0 * gamma)).powf(4.0 / (kf + 4.0))
}

/// `c_k = 6(1 + 4/k)(k^{1/4}/4)^{4/(k+4)}`, below 10 for every `k ≥ 1`.
pub fn thm5_c_k(k: usize) -> f64 {
    let kf = k as f64;
    6.0 * (1.0 + 4.0 / kf) * (kf.powf(0.25) / 4.0).powf(4.0 / (kf + 4.0))
}

/// `W₂²(P_{Z|Θ}, G_Z) ≤ 4tk + 4(t+γ) D(P_{Y|Θ} ‖ G_Y)`.
pub fn w2_from_kl(kl_value: f64, t: f64, gamma: f64, k: usize) -> f64 {
    4.0 * t * k as f64 + 4.0 * (t + gamma) * kl_value
}

/// `I(Y;Θ) ≤ (k/2) log(1+γ/t)(P(Eᶜ) + α/γ) + I(Y;Θ | X ∈ E) P(E)`.
pub fn mi_truncation_bound(k: usize, t: f64, gamma: f64, alpha: f64, prob_complement: f64, mi_conditional_bound: f64) -> f64 {
    0.5 * k as f64 * (gamma / t).ln_1p() * (prob_complement + alpha / gamma) + mi_conditional_bound
}

/// Bound on `I(Y;Θ | X ∈ E) P(E)` for the norm band `|‖x‖²/n − γ| ≤ εγ/2`:
/// `κ(πk/2)^{1/4} (2^{9/4}3^{1/4})^{1/2} [kβ₁/γ + (1+(2+ε)γ/t)^{k/2} β₂²/γ²]^{1/2}`.
pub fn mi_truncated_conditional_bound(beta1: f64, beta2: f64, gamma: f64, t: f64, epsilon: f64, k: usize) -> LogValue {
    let kf = k as f64;
    let inner = log_sum_exp([
        kf.ln() + (beta1 / gamma).ln(),
        0.5 * kf * ((2.0 + epsilon) * gamma / t).ln_1p() + 2.0 * (beta2 / gamma).ln(),
    ]);
    let log_const = kappa().ln() + 0.25 * (PI * kf / 2.0).ln() + 0.5 * (2.25 * 2f64.ln() + 0.25 * 3f64.ln());
    LogValue::from_log(log_const + 0.5 * inner)
}

/// `∫ √f ≤ √(2π^{k/2+1}/Γ(k/2)) (μ_{k−1} μ_{k+1})^{1/4}` with `μ_p = ∫‖y‖^p f(y) dy`.
pub fn int_moment_bound(mu_km1: f64, mu_kp1: f64, k: usize) -> f64 {
    let kf = k as f64;
    let log_c = 0.5 * (2f64.ln() + (0.5 * kf + 1.0) * PI.ln() - ln_gamma(0.5 * kf));
    log_c.exp() * (mu_km1.max(0.0) * mu_kp1.max(0.0)).powf(0.25)
}

/// AWGN capacity `½ log(1 + snr)` in nats.
pub fn awgn_capacity(snr: f64) -> f64 {
    0.5 * snr.ln_1p()
}

/// `I(X;Y|Θ) = k C(γ/t) − E[D(P_{Y|Θ} ‖ G_Y)]`. A negative result means the
/// Monte Carlo error exceeded the true gap; it is returned as is with a warning.
pub fn cs_gap(expected_kl: f64, k: usize, gamma: f64, t: f64) -> f64 {
    let v = k as f64 * awgn_capacity(gamma / t) - expected_kl;
    if v < 0.0 {
        warn!("implied I(X;Y|Θ) = {v} is negative");
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDevCheck {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub holds: bool,
}

/// Checks `E[log((1+μ)/(1+X)) 1_E(X)] ≤ (log(1+μ)/μ) E|μ − X|` for a sample of a
/// nonnegative `X` with mean `μ`.
pub fn check_log_dev(samples: &[f64], mu: f64, in_set: impl Fn(f64) -> bool) -> LogDevCheck {
    let lhs_terms: Vec<f64> = samples
        .iter()
        .map(|&x| if in_set(x) { ((1.0 + mu) / (1.0 + x)).ln() } else { 0.0 })
        .collect();
    let c = mu.ln_1p() / mu;
    let rhs_terms: Vec<f64> = samples.iter().map(|&x| c * (mu - x).abs()).collect();
    let lhs = mean_se(&lhs_terms);
    let rhs = mean_se(&rhs_terms);
    let tol = 3.0 * crate::mc::combined_se(&[lhs.se, rhs.se]) + 1e-12;
    LogDevCheck {
        lhs,
        rhs,
        holds: lhs.value <= rhs.value + tol,
    }
}
