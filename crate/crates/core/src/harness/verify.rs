//! `verify`: evaluate every configured check at every applicable grid point.

use std::collections::BTreeMap;

use log::{info, warn};
use rand_distr::{Distribution, Exp1, LogNormal, Uniform};
use serde::Serialize;

use super::checks::{propagate, CheckId, CheckKind, Verdict, VerificationRow};
use super::config::ExperimentConfig;
use super::workspace::{estimate_seed, estimated_seconds, EstKey, MomentTable, Needs, QuantityKey, StatsEntry, Workspace};
use crate::bounds::{
    awgn_capacity, check_log_dev, cor1_w2_bound, kappa, kl_marginal_bound, mi_bound_from_m,
    thm1_w2_bound, thm2_kl_bound, thm2_optimize_epsilon, thm3_kl_k1_bound, thm4_kl_sphere_bound,
    thm5_w2_sphere_bound,
};
use crate::error::{Error, Result};
use crate::estimators::EstimateReport;
use crate::mc::Estimate;
use crate::moments::{g_kp, g_kp_upper, m_bound_bounded, m_bound_k1};
use crate::rng::SeedPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Summary {
    pub rows: usize,
    pub holds: usize,
    pub holds_marginal: usize,
    pub violated: usize,
}

impl Summary {
    pub fn of(rows: &[VerificationRow]) -> Self {
        let count = |v: Verdict| rows.iter().filter(|r| r.verdict == v).count();
        Summary {
            rows: rows.len(),
            holds: count(Verdict::Holds),
            holds_marginal: count(Verdict::HoldsMarginal),
            violated: count(Verdict::Violated),
        }
    }

    /// 0 when everything holds, 2 with marginal rows only, 1 on a violation.
    pub fn exit_code(&self) -> i32 {
        if self.violated > 0 {
            1
        } else if self.holds_marginal > 0 {
            2
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateEntry {
    pub key: EstKey,
    pub quantity: String,
    pub n: usize,
    pub k: usize,
    pub t: Option<f64>,
    pub report: EstimateReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub exit_code: i32,
    pub rows: Vec<VerificationRow>,
    pub stats: Vec<StatsEntry>,
    pub moments: Vec<(usize, usize, MomentTable)>,
    pub estimates: Vec<EstimateEntry>,
    /// Seed paths used by each check.
    pub seed_lineage: BTreeMap<String, Vec<String>>,
    pub skipped: Vec<String>,
    pub estimated_seconds: f64,
}

fn uses_source(c: CheckId) -> bool {
    !matches!(c, CheckId::GKpInequality | CheckId::LogDevInequality)
}

/// Grid points where `check` applies, as `(s, n, k, ti)`.
fn points(cfg: &ExperimentConfig, sources: &[Vec<Option<crate::sources::VectorSource>>], c: CheckId) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    let est_ks = cfg.estimation_ks();
    for (s, spec) in cfg.sources.iter().enumerate() {
        for (ni, &n) in cfg.grid.n.iter().enumerate() {
            let Some(src) = &sources[s][ni] else { continue };
            for &k in &cfg.grid.k {
                let estimable = est_ks.contains(&k);
                let ok = match c {
                    CheckId::Thm1 | CheckId::Thm2 | CheckId::Lemma4 | CheckId::EdklAlt | CheckId::DpyToAlpha | CheckId::CsGap => estimable,
                    CheckId::Thm3 | CheckId::Lemma2 | CheckId::Lemma3 => k == 1 && estimable,
                    CheckId::Lemma6 => k == 1,
                    CheckId::Thm4 | CheckId::Thm5 => estimable && src.constant_norm(),
                    CheckId::Cor1Trend => estimable && spec.is_gaussian_iid(),
                    CheckId::Lemma7 => src.norm_range().is_some_and(|(lo, _)| lo > 0.0),
                    CheckId::GKpInequality | CheckId::LogDevInequality => false,
                };
                if !ok {
                    continue;
                }
                let t_free = matches!(c, CheckId::Thm1 | CheckId::Thm5 | CheckId::Cor1Trend);
                if t_free {
                    out.push((s, n, k, 0));
                } else {
                    out.extend((0..cfg.grid.t.len()).map(|ti| (s, n, k, ti)));
                }
            }
        }
    }
    out
}

fn key(quantity: QuantityKey, s: usize, n: usize, k: usize, ti: usize) -> EstKey {
    EstKey {
        quantity,
        source: s,
        n,
        k,
        ti,
    }
}

fn needs_for(cfg: &ExperimentConfig, sources: &[Vec<Option<crate::sources::VectorSource>>]) -> (Needs, Vec<String>) {
    let mut needs = Needs::default();
    let mut skipped = Vec::new();
    for (s, spec) in cfg.sources.iter().enumerate() {
        for (ni, &n) in cfg.grid.n.iter().enumerate() {
            if sources[s][ni].is_none() {
                skipped.push(format!("source {s} ({spec:?}) has no version at n = {n}"));
            }
        }
    }
    for k in &cfg.grid.k {
        if *k > cfg.estimation_k_cap {
            skipped.push(format!("k = {k} exceeds estimation_k_cap; only bound-only checks run there"));
        }
    }
    for c in cfg.check_ids() {
        for (s, n, k, ti) in points(cfg, sources, c) {
            if uses_source(c) {
                needs.stats.insert((s, n));
            }
            use QuantityKey::*;
            let q: &[QuantityKey] = match c {
                CheckId::Thm1 | CheckId::Thm5 | CheckId::Cor1Trend => &[ExpectedW2],
                CheckId::Thm2 | CheckId::Thm3 | CheckId::Thm4 => &[ExpectedKl],
                CheckId::Lemma2 => &[MiYTheta, VarDensityIntegral],
                CheckId::Lemma3 => &[VarDensityIntegral],
                CheckId::Lemma4 => &[MiYTheta],
                CheckId::EdklAlt => &[ExpectedKl, MarginalKl, MiYTheta],
                CheckId::DpyToAlpha => &[MarginalKl],
                CheckId::CsGap => &[ExpectedKl, MiXY],
                _ => &[],
            };
            for &quantity in q {
                let (k, ti) = match quantity {
                    ExpectedW2 => (k, 0),
                    VarDensityIntegral => (1, ti),
                    _ => (k, ti),
                };
                needs.estimates.insert(key(quantity, s, n, k, ti));
            }
            if matches!(c, CheckId::Lemma3 | CheckId::Lemma4 | CheckId::Lemma6 | CheckId::Lemma7) {
                needs.moments.insert((s, n));
            }
        }
    }
    (needs, skipped)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    ws: &'a Workspace,
}

impl Ctx<'_> {
    fn stats(&self, s: usize, n: usize) -> &StatsEntry {
        &self.ws.stats[&(s, n)]
    }

    fn label(&self, s: usize) -> String {
        let src = self.ws.sources[s].iter().flatten().next().map(|v| v.label()).unwrap_or_default();
        format!("{s}:{src}")
    }

    fn est(&self, q: QuantityKey, s: usize, n: usize, k: usize, ti: usize) -> (Estimate, String) {
        let key = key(q, s, n, k, ti);
        let r = self.ws.estimate(key);
        (r.best(), estimate_seed(&self.ws.root, key).to_string())
    }

    fn moments(&self, s: usize, n: usize, k: usize, t: f64) -> (Estimate, String) {
        let table = &self.ws.moments[&(s, n)];
        let m = table.get(k, t).expect("moment table covers the grid");
        (m.big_m, table.seed_path.clone())
    }
}

fn seeds(list: &[&str]) -> Vec<String> {
    list.iter().filter(|s| !s.is_empty()).map(|s| s.to_string()).collect()
}

fn check_rows(ctx: &Ctx, c: CheckId) -> Result<Vec<VerificationRow>> {
    let cfg = ctx.cfg;
    let consts = &cfg.constants;
    let mut rows = Vec::new();
    match c {
        CheckId::GKpInequality => return Ok(g_kp_rows(cfg)),
        CheckId::LogDevInequality => return Ok(log_dev_rows(cfg, &ctx.ws.root)),
        CheckId::Cor1Trend => return Ok(cor1_rows(ctx)),
        _ => {}
    }
    for (s, n, k, ti) in points(cfg, &ctx.ws.sources, c) {
        let t = cfg.grid.t[ti];
        let st = ctx.stats(s, n);
        let d = &st.stats;
        let g = d.gamma;
        let src_label = ctx.label(s);
        let kf = k as f64;
        let base = [("n", n as f64), ("k", kf), ("t", t)];
        let no_t = [("n", n as f64), ("k", kf)];
        let row = |params: &[(&str, f64)], kind: CheckKind, lhs: Estimate, rhs: Estimate, rhs_log: f64, s: Vec<String>| {
            VerificationRow::new(c, kind, &src_label, params, lhs, rhs, rhs_log, s)
        };
        match c {
            CheckId::Thm1 => {
                let (w, ws) = ctx.est(QuantityKey::ExpectedW2, s, n, k, 0);
                let f = |x: &[f64]| thm1_w2_bound(x[0], x[1], x[2], g, k, consts.thm1).value;
                let rhs = propagate(f, &[d.alpha, d.beta1, d.beta2]);
                let log = thm1_w2_bound(d.alpha.value, d.beta1.value, d.beta2.value, g, k, consts.thm1).log_value;
                rows.push(row(&no_t, CheckKind::Dominance, w, rhs, log, seeds(&[&ws, &st.seed_path])));
            }
            CheckId::Thm2 => {
                let (kl, ks) = ctx.est(QuantityKey::ExpectedKl, s, n, k, ti);
                let mut eps_list: Vec<(f64, bool)> = cfg.grid.epsilon.iter().map(|&e| (e, false)).collect();
                if cfg.grid.optimize_epsilon {
                    let (e, _) =
                        thm2_optimize_epsilon(d.alpha.value, d.beta1.value, d.beta2.value, g, t, k, consts.thm2);
                    eps_list.push((e, true));
                }
                for (eps, optimized) in eps_list {
                    let f = |x: &[f64]| thm2_kl_bound(x[0], x[1], x[2], g, t, eps, k, consts.thm2).value;
                    let rhs = propagate(f, &[d.alpha, d.beta1, d.beta2]);
                    let log = thm2_kl_bound(d.alpha.value, d.beta1.value, d.beta2.value, g, t, eps, k, consts.thm2).log_value;
                    let params = [("n", n as f64), ("k", kf), ("t", t), ("epsilon", eps), ("optimized", f64::from(u8::from(optimized)))];
                    rows.push(row(&params, CheckKind::Dominance, kl, rhs, log, seeds(&[&ks, &st.seed_path])));
                }
            }
            CheckId::Thm3 => {
                let (kl, ks) = ctx.est(QuantityKey::ExpectedKl, s, n, k, ti);
                let rhs = propagate(|x| thm3_kl_k1_bound(x[0], x[1], t), &[d.alpha, d.beta1]);
                rows.push(row(&base, CheckKind::Dominance, kl, rhs, rhs.value.ln(), seeds(&[&ks, &st.seed_path])));
            }
            CheckId::Thm4 => {
                let (kl, ks) = ctx.est(QuantityKey::ExpectedKl, s, n, k, ti);
                let f = |x: &[f64]| thm4_kl_sphere_bound(x[0], x[1], g, t, k).value;
                let rhs = propagate(f, &[d.mean_sq_norm, d.beta2]);
                let log = thm4_kl_sphere_bound(d.mean_sq_norm.value, d.beta2.value, g, t, k).log_value;
                rows.push(row(&base, CheckKind::Dominance, kl, rhs, log, seeds(&[&ks, &st.seed_path])));
            }
            CheckId::Thm5 => {
                let (w, ws) = ctx.est(QuantityKey::ExpectedW2, s, n, k, 0);
                let f = |x: &[f64]| thm5_w2_sphere_bound(x[0], x[1], g, k, consts.thm5).0.value;
                let rhs = propagate(f, &[d.mean_sq_norm, d.beta2]);
                let log = thm5_w2_sphere_bound(d.mean_sq_norm.value, d.beta2.value, g, k, consts.thm5).0.log_value;
                rows.push(row(&no_t, CheckKind::Dominance, w, rhs, log, seeds(&[&ws, &st.seed_path])));
            }
            CheckId::Lemma2 => {
                let (mi, ms) = ctx.est(QuantityKey::MiYTheta, s, n, 1, ti);
                let (v, vs) = ctx.est(QuantityKey::VarDensityIntegral, s, n, 1, ti);
                let rhs = Estimate::new(kappa() * v.value, kappa() * v.se);
                rows.push(row(&base, CheckKind::Dominance, mi, rhs, rhs.value.ln(), seeds(&[&ms, &vs])));
            }
            CheckId::Lemma3 => {
                let (v, vs) = ctx.est(QuantityKey::VarDensityIntegral, s, n, 1, ti);
                let lhs = Estimate::new(kappa() * v.value, kappa() * v.se);
                let (m, mseed) = ctx.moments(s, n, 1, t);
                let rhs = propagate(|x| mi_bound_from_m(x[0], 1), &[m]);
                rows.push(row(&base, CheckKind::Dominance, lhs, rhs, rhs.value.ln(), seeds(&[&vs, &mseed])));
            }
            CheckId::Lemma4 => {
                let (mi, ms) = ctx.est(QuantityKey::MiYTheta, s, n, k, ti);
                let (m, mseed) = ctx.moments(s, n, k, t);
                let rhs = propagate(|x| mi_bound_from_m(x[0], k), &[m]);
                rows.push(row(&base, CheckKind::Dominance, mi, rhs, rhs.value.ln(), seeds(&[&ms, &mseed])));
            }
            CheckId::Lemma6 => {
                let (m, mseed) = ctx.moments(s, n, 1, t);
                let rhs = propagate(|x| m_bound_k1(x[0], t), &[d.beta1]);
                rows.push(row(&base, CheckKind::Dominance, m, rhs, rhs.value.ln(), seeds(&[&mseed, &st.seed_path])));
            }
            CheckId::Lemma7 => {
                let src = ctx.ws.source(s, n, cfg).expect("planned source");
                let (lo, hi) = src.norm_range().expect("planned with a norm range");
                let (m, mseed) = ctx.moments(s, n, k, t);
                let constant = lo == hi;
                let f = |x: &[f64]| {
                    m_bound_bounded(lo, hi, x[0], x[1], t, k, constant.then_some(x[2])).map(|v| v.value).unwrap_or(f64::NAN)
                };
                let rhs = propagate(f, &[d.beta1, d.beta2, d.mean_sq_norm]);
                let log = m_bound_bounded(lo, hi, d.beta1.value, d.beta2.value, t, k, constant.then_some(d.mean_sq_norm.value))?.log_value;
                rows.push(row(&base, CheckKind::Dominance, m, rhs, log, seeds(&[&mseed, &st.seed_path])));
            }
            CheckId::EdklAlt => {
                let (kl, ks) = ctx.est(QuantityKey::ExpectedKl, s, n, k, ti);
                let (mk, mks) = ctx.est(QuantityKey::MarginalKl, s, n, k, ti);
                let (mi, mis) = ctx.est(QuantityKey::MiYTheta, s, n, k, ti);
                let rhs = Estimate::new(mk.value + mi.value, (mk.se.powi(2) + mi.se.powi(2)).sqrt());
                rows.push(row(&base, CheckKind::Identity, kl, rhs, rhs.value.ln(), seeds(&[&ks, &mks, &mis])));
            }
            CheckId::DpyToAlpha => {
                let (mk, mks) = ctx.est(QuantityKey::MarginalKl, s, n, k, ti);
                let rhs = propagate(|x| kl_marginal_bound(x[0], g, t, k), &[d.alpha]);
                rows.push(row(&base, CheckKind::Dominance, mk, rhs, rhs.value.ln(), seeds(&[&mks, &st.seed_path])));
            }
            CheckId::CsGap => {
                let (kl, ks) = ctx.est(QuantityKey::ExpectedKl, s, n, k, ti);
                let (mi, mis) = ctx.est(QuantityKey::MiXY, s, n, k, ti);
                let lhs = Estimate::new(kl.value + mi.value, (kl.se.powi(2) + mi.se.powi(2)).sqrt());
                let rhs = Estimate::exact(kf * awgn_capacity(g / t));
                rows.push(row(&base, CheckKind::Identity, lhs, rhs, rhs.value.ln(), seeds(&[&ks, &mis])));
            }
            CheckId::GKpInequality | CheckId::LogDevInequality | CheckId::Cor1Trend => unreachable!(),
        }
    }
    Ok(rows)
}

fn cor1_rows(ctx: &Ctx) -> Vec<VerificationRow> {
    let cfg = ctx.cfg;
    let pts = points(cfg, &ctx.ws.sources, CheckId::Cor1Trend);
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (s, n, k, _) in pts {
        groups.entry((s, k)).or_default().push(n);
    }
    let mut rows = Vec::new();
    for ((s, k), mut ns) in groups {
        ns.sort_unstable();
        ns.dedup();
        let label = ctx.label(s);
        let scaled: Vec<(usize, Estimate, String)> = ns
            .iter()
            .map(|&n| {
                let (w, seed) = ctx.est(QuantityKey::ExpectedW2, s, n, k, 0);
                let g = ctx.stats(s, n).stats.gamma;
                (n, Estimate::new(w.value / g, w.se / g), seed)
            })
            .collect();
        for (n, w, seed) in &scaled {
            let rhs = cor1_w2_bound(*n, k, cfg.constants.cor1);
            rows.push(VerificationRow::new(
                CheckId::Cor1Trend,
                CheckKind::Dominance,
                &label,
                &[("n", *n as f64), ("k", k as f64)],
                *w,
                Estimate::exact(rhs),
                rhs.ln(),
                vec![seed.clone()],
            ));
        }
        for pair in scaled.windows(2) {
            let (n0, w0, s0) = &pair[0];
            let (n1, w1, s1) = &pair[1];
            rows.push(VerificationRow::new(
                CheckId::Cor1Trend,
                CheckKind::Trend,
                &label,
                &[("n", *n1 as f64), ("k", k as f64), ("n_prev", *n0 as f64)],
                *w1,
                *w0,
                w0.value.ln(),
                vec![s1.clone(), s0.clone()],
            ));
        }
    }
    rows
}

fn log_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![(lo * hi).sqrt()];
    }
    (0..points)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Largest relative excess `(g − upper)/(1 + |upper|)` over an `(r, t, γ)` grid
/// together with the number of grid points.
pub fn g_kp_excess(k: usize, p: f64, points: usize) -> (f64, usize) {
    let ts = log_space(1e-3, 1e2, points);
    let gammas = log_space(1e-2, 1e2, points);
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for &t in &ts {
        for &gamma in &gammas {
            for i in 0..points {
                let rho = if points == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (points - 1) as f64 };
                let r = rho * gamma;
                let (Ok(lhs), Ok(rhs)) = (g_kp(r / (t + gamma), k, p), g_kp_upper(r, t, gamma, k, p)) else {
                    continue;
                };
                worst = worst.max((lhs - rhs) / (1.0 + rhs.abs()));
                count += 1;
            }
        }
    }
    (worst, count)
}

fn g_kp_rows(cfg: &ExperimentConfig) -> Vec<VerificationRow> {
    let mut rows = Vec::new();
    for &k in &cfg.grid.k {
        for p in [k as f64 - 1.0, k as f64 + 1.0] {
            let (excess, count) = g_kp_excess(k, p, cfg.budgets.g_kp_points);
            // rounding slack on the relative excess
            let lhs = if excess.abs() < 1e-12 { 0.0 } else { excess };
            rows.push(VerificationRow::new(
                CheckId::GKpInequality,
                CheckKind::Dominance,
                "-",
                &[("k", k as f64), ("p", p), ("points", count as f64)],
                Estimate::exact(lhs),
                Estimate::exact(0.0),
                f64::NEG_INFINITY,
                Vec::new(),
            ));
        }
    }
    rows
}

/// Samples of the three reference laws: Exp(1), LogNormal(0,1), Uniform(0,2).
pub fn log_dev_laws() -> [(&'static str, f64); 3] {
    [("exp(1)", 1.0), ("lognormal(0,1)", 0.5f64.exp()), ("uniform(0,2)", 1.0)]
}

pub fn log_dev_samples(law: usize, count: usize, seed: &SeedPath) -> Vec<f64> {
    let mut rng = seed.rng();
    match law {
        0 => (0..count).map(|_| Exp1.sample(&mut rng)).collect(),
        1 => {
            let d = LogNormal::new(0.0, 1.0).expect("valid lognormal");
            (0..count).map(|_| d.sample(&mut rng)).collect()
        }
        _ => {
            let d = Uniform::new(0.0, 2.0).expect("valid uniform");
            (0..count).map(|_| d.sample(&mut rng)).collect()
        }
    }
}

fn log_dev_rows(cfg: &ExperimentConfig, root: &SeedPath) -> Vec<VerificationRow> {
    log_dev_laws()
        .iter()
        .enumerate()
        .map(|(i, (name, mu))| {
            let seed = root.child_named("log_dev").child(i as u64);
            let x = log_dev_samples(i, cfg.budgets.log_dev_samples, &seed);
            let c = check_log_dev(&x, *mu, |_| true);
            VerificationRow::new(
                CheckId::LogDevInequality,
                CheckKind::Dominance,
                name,
                &[("mu", *mu), ("samples", x.len() as f64)],
                c.lhs,
                c.rhs,
                c.rhs.value.ln(),
                vec![seed.to_string()],
            )
        })
        .collect()
}

/// Plans, computes and evaluates every configured check. Fails with a config
/// error when the estimated runtime exceeds the configured ceiling.
pub fn run_verify(cfg: &ExperimentConfig, jobs: usize) -> Result<VerifyReport> {
    let sources = Workspace::build_sources(cfg)?;
    let (needs, skipped) = needs_for(cfg, &sources);
    for s in &skipped {
        warn!("{s}");
    }
    let secs = estimated_seconds(cfg, &needs, jobs);
    info!("estimated runtime {secs:.1} s on {jobs} worker(s)");
    if secs > cfg.max_runtime_seconds {
        return Err(Error::Config(format!(
            "budget infeasible: estimated runtime {secs:.0} s exceeds max_runtime_seconds = {}",
            cfg.max_runtime_seconds
        )));
    }
    let ws = Workspace::compute(cfg, &needs)?;
    let ctx = Ctx { cfg, ws: &ws };
    let mut rows = Vec::new();
    let mut lineage: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for c in cfg.check_ids() {
        let r = check_rows(&ctx, c)?;
        let entry = lineage.entry(c.name().to_string()).or_default();
        for row in &r {
            for s in &row.seed_paths {
                if !entry.contains(s) {
                    entry.push(s.clone());
                }
            }
        }
        rows.extend(r);
    }
    let summary = Summary::of(&rows);
    let estimates = ws
        .estimates
        .iter()
        .map(|(k, r)| EstimateEntry {
            key: *k,
            quantity: k.quantity.name().to_string(),
            n: k.n,
            k: k.k,
            t: (k.quantity != QuantityKey::ExpectedW2).then(|| cfg.grid.t[k.ti]),
            report: r.clone(),
        })
        .collect();
    Ok(VerifyReport {
        config: cfg.clone(),
        summary,
        exit_code: summary.exit_code(),
        rows,
        stats: ws.stats.values().cloned().collect(),
        moments: ws.moments.iter().map(|(&(s, n), m)| (s, n, m.clone())).collect(),
        estimates,
        seed_lineage: lineage,
        skipped,
        estimated_seconds: secs,
    })
}
