//! Registered checks, verification rows and verdicts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mc::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    Thm1,
    Thm2,
    Thm3,
    Thm4,
    Thm5,
    Cor1Trend,
    Lemma2,
    Lemma3,
    Lemma4,
    Lemma6,
    Lemma7,
    EdklAlt,
    DpyToAlpha,
    CsGap,
    GKpInequality,
    LogDevInequality,
}

/// How a row's margin is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `lhs ≤ rhs`.
    Dominance,
    /// `lhs = rhs`.
    Identity,
    /// `lhs < rhs` by more than two standard errors.
    Trend,
}

impl CheckId {
    pub const ALL: [CheckId; 16] = [
        CheckId::Thm1,
        CheckId::Thm2,
        CheckId::Thm3,
        CheckId::Thm4,
        CheckId::Thm5,
        CheckId::Cor1Trend,
        CheckId::Lemma2,
        CheckId::Lemma3,
        CheckId::Lemma4,
        CheckId::Lemma6,
        CheckId::Lemma7,
        CheckId::EdklAlt,
        CheckId::DpyToAlpha,
        CheckId::CsGap,
        CheckId::GKpInequality,
        CheckId::LogDevInequality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckId::Thm1 => "thm1",
            CheckId::Thm2 => "thm2",
            CheckId::Thm3 => "thm3",
            CheckId::Thm4 => "thm4",
            CheckId::Thm5 => "thm5",
            CheckId::Cor1Trend => "cor1_trend",
            CheckId::Lemma2 => "lemma2",
            CheckId::Lemma3 => "lemma3",
            CheckId::Lemma4 => "lemma4",
            CheckId::Lemma6 => "lemma6",
            CheckId::Lemma7 => "lemma7",
            CheckId::EdklAlt => "edkl_alt",
            CheckId::DpyToAlpha => "dpy_to_alpha",
            CheckId::CsGap => "cs_gap",
            CheckId::GKpInequality => "g_kp_inequality",
            CheckId::LogDevInequality => "log_dev_inequality",
        }
    }

    pub fn from_name(name: &str) -> Option<CheckId> {
        CheckId::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn describe(self) -> &'static str {
        match self {
            CheckId::Thm1 => "E W2^2 <= C gamma [k alpha/gamma + k^3/4 (beta1/gamma)^1/2 + k (beta2/gamma)^4/(k+4)]",
            CheckId::Thm2 => "E D(P_Y|Theta || G_Y) <= KL bound at fixed and optimized epsilon",
            CheckId::Thm3 => "E D(P_Y|Theta || G_Y) <= alpha/(2t) + sqrt(beta1/t), k = 1",
            CheckId::Thm4 => "E D(P_Y|Theta || G_Y) <= constant-norm KL bound",
            CheckId::Thm5 => "E W2^2 <= constant-norm W2 bound",
            CheckId::Cor1Trend => "E W2^2/gamma decreases in n and stays below C'(n^-1/4 + k n^-2/(k+4))",
            CheckId::Lemma2 => "I(Y;Theta) <= kappa int sqrt(Var p_Y|Theta) dy",
            CheckId::Lemma3 => "kappa int sqrt(Var p_Y|Theta) dy <= kappa (pi/2)^1/4 sqrt(M)",
            CheckId::Lemma4 => "I(Y;Theta) <= kappa (pi k/2)^1/4 sqrt(M)",
            CheckId::Lemma6 => "M <= beta1/t, k = 1",
            CheckId::Lemma7 => "M <= bounded-norm moment bound",
            CheckId::EdklAlt => "E D(P_Y|Theta || G_Y) = D(P_Y || G_Y) + I(Y;Theta)",
            CheckId::DpyToAlpha => "D(P_Y || G_Y) <= (k/2) log(1 + gamma/t) alpha/gamma",
            CheckId::CsGap => "E D(P_Y|Theta || G_Y) + I(X;Y|Theta) = k C(gamma/t)",
            CheckId::GKpInequality => "g_kp(r/(t+gamma)) <= linear + quadratic upper bound on a grid",
            CheckId::LogDevInequality => "E[log((1+mu)/(1+X))] <= (log(1+mu)/mu) E|mu - X|",
        }
    }

    pub fn kind(self) -> CheckKind {
        match self {
            CheckId::EdklAlt | CheckId::CsGap => CheckKind::Identity,
            _ => CheckKind::Dominance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    HoldsMarginal,
    Violated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::HoldsMarginal => "holds-marginal",
            Verdict::Violated => "violated",
        }
    }
}

/// Standard errors at which a dominance or trend row stops being marginal.
pub const VIOLATION_SIGMAS: f64 = 3.0;
/// Identity rows within this many standard errors hold outright.
pub const IDENTITY_HOLD_SIGMAS: f64 = 2.0;
/// Required decrease, in standard errors, for a trend row to hold.
pub const TREND_SIGMAS: f64 = 2.0;

pub fn verdict(kind: CheckKind, margin: f64) -> Verdict {
    if margin.is_nan() {
        return Verdict::Violated;
    }
    match kind {
        CheckKind::Dominance if margin >= 0.0 => Verdict::Holds,
        CheckKind::Trend if margin > TREND_SIGMAS => Verdict::Holds,
        CheckKind::Dominance | CheckKind::Trend if margin >= -VIOLATION_SIGMAS => Verdict::HoldsMarginal,
        CheckKind::Dominance | CheckKind::Trend => Verdict::Violated,
        CheckKind::Identity if margin.abs() <= IDENTITY_HOLD_SIGMAS => Verdict::Holds,
        CheckKind::Identity if margin.abs() <= VIOLATION_SIGMAS => Verdict::HoldsMarginal,
        CheckKind::Identity => Verdict::Violated,
    }
}

/// `(rhs − lhs)/se`. With `se = 0` the sign of the difference decides, up to
/// rounding.
pub fn margin(lhs: f64, rhs: f64, se: f64) -> f64 {
    if rhs == f64::INFINITY && lhs.is_finite() {
        return f64::INFINITY;
    }
    let diff = rhs - lhs;
    if se > 0.0 && se.is_finite() {
        return diff / se;
    }
    let tol = 1e-12 * lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    if diff.abs() <= tol {
        0.0
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// One (check, grid point) comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    pub check: String,
    pub kind: CheckKind,
    pub source: String,
    pub params: BTreeMap<String, f64>,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_log: f64,
    pub rhs_se: f64,
    pub margin: f64,
    pub verdict: Verdict,
    /// Seed paths of every random input to the row.
    pub seed_paths: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerificationRow {
    pub fn new(
        check: CheckId,
        kind: CheckKind,
        source: &str,
        params: &[(&str, f64)],
        lhs: Estimate,
        rhs: Estimate,
        rhs_log: f64,
        seed_paths: Vec<String>,
    ) -> Self {
        let se = (lhs.se * lhs.se + rhs.se * rhs.se).sqrt();
        let m = margin(lhs.value, rhs.value, se);
        VerificationRow {
            check: check.name().to_string(),
            kind,
            source: source.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            lhs: lhs.value,
            lhs_se: lhs.se,
            rhs: rhs.value,
            rhs_log,
            rhs_se: rhs.se,
            margin: m,
            verdict: verdict(kind, m),
            seed_paths,
            notes: Vec::new(),
        }
    }
}

/// Standard error of `f(inputs)` by first-order propagation with forward
/// differences. Exact inputs (`se = 0`) contribute nothing.
pub fn propagate(f: impl Fn(&[f64]) -> f64, inputs: &[Estimate]) -> Estimate {
    let x: Vec<f64> = inputs.iter().map(|e| e.value).collect();
    let base = f(&x);
    if !base.is_finite() {
        return Estimate::exact(base);
    }
    let mut var = 0.0;
    for (i, e) in inputs.iter().enumerate() {
        if !(e.se > 0.0) {
            continue;
        }
        let h = 1e-6 * e.value.abs().max(e.se);
        let mut xp = x.clone();
        xp[i] += h;
        let d = (f(&xp) - base) / h;
        if d.is_finite() {
            var += (d * e.se).powi(2);
        }
    }
    Estimate::new(base, var.sqrt())
}
