//! Batch experiments: configuration, inequality verification, parameter
//! sweeps and plot data.
//!
//! Work units (stats, moment tables, estimates) run on a dedicated thread pool
//! and land in ordered maps, so every output file is byte-identical for any
//! worker count.

pub mod checks;
pub mod config;
pub mod plotdata;
pub mod report;
pub mod sweep;
pub mod verify;
pub mod workspace;

use serde::Serialize;

pub use checks::{CheckId, CheckKind, Verdict, VerificationRow};
pub use config::{apply_override, Budgets, Constants, ExperimentConfig, Grid, SourceSpec, SCHEMA_VERSION};
pub use plotdata::{emit_plotdata, CurveSpec, Series};
pub use sweep::{run_sweep, SweepTable};
pub use verify::{run_verify, Summary, VerifyReport};

use crate::bounds::{
    cor1_w2_bound, thm1_w2_bound, thm2_kl_bound, thm2_optimize_epsilon, thm3_kl_k1_bound, thm4_kl_sphere_bound,
    thm5_w2_sphere_bound, BoundReport, LogValue,
};
use crate::error::{Error, Result};
use workspace::{EstKey, MomentTable, Needs, QuantityKey, StatsEntry, Workspace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_MARGINAL: i32 = 2;
pub const EXIT_CONFIG: i32 = 64;
/// A computation failed after the config was accepted.
pub const EXIT_RUNTIME: i32 = 70;

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::UnknownColumn { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Worker count from the flag, then `GAUSSPROJ_JOBS`, then the machine.
pub fn resolve_jobs(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("GAUSSPROJ_JOBS").ok().and_then(|v| v.parse().ok()))
        .filter(|&j| j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `f` on a pool of `jobs` threads.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

fn all_points(cfg: &ExperimentConfig) -> Result<(Workspace, Vec<(usize, usize)>)> {
    let sources = Workspace::build_sources(cfg)?;
    let mut needs = Needs::default();
    let mut pts = Vec::new();
    for s in 0..cfg.sources.len() {
        for (ni, &n) in cfg.grid.n.iter().enumerate() {
            if sources[s][ni].is_some() {
                needs.stats.insert((s, n));
                pts.push((s, n));
            }
        }
    }
    Ok((Workspace::compute(cfg, &needs)?, pts))
}

/// `α`, `β₁`, `β₂` and `‖EX‖²/n` for every source and grid `n`.
pub fn run_stats(cfg: &ExperimentConfig) -> Result<Vec<StatsEntry>> {
    let (ws, _) = all_points(cfg)?;
    Ok(ws.stats.into_values().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentEntry {
    pub source: usize,
    pub n: usize,
    pub table: MomentTable,
}

/// `m_{k−1}`, `m_{k+1}` and `M` for every source, `n`, `k` and `t`.
pub fn run_moments(cfg: &ExperimentConfig) -> Result<Vec<MomentEntry>> {
    let sources = Workspace::build_sources(cfg)?;
    let mut needs = Needs::default();
    for s in 0..cfg.sources.len() {
        for (ni, &n) in cfg.grid.n.iter().enumerate() {
            if sources[s][ni].is_some() {
                needs.moments.insert((s, n));
            }
        }
    }
    let ws = Workspace::compute(cfg, &needs)?;
    Ok(ws
        .moments
        .into_iter()
        .map(|((source, n), table)| MomentEntry { source, n, table })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsEntry {
    pub source: String,
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub bounds: Vec<BoundReport>,
}

/// Every bound at every grid point, from the source's functionals.
pub fn run_bounds(cfg: &ExperimentConfig) -> Result<Vec<BoundsEntry>> {
    let (ws, pts) = all_points(cfg)?;
    let c = &cfg.constants;
    let mut out = Vec::new();
    for (s, n) in pts {
        let e = &ws.stats[&(s, n)];
        let d = &e.stats;
        let src = ws.source(s, n, cfg).expect("built");
        let (a, b1, b2, ms, g) = (d.alpha.value, d.beta1.value, d.beta2.value, d.mean_sq_norm.value, d.gamma);
        let constant = src.constant_norm();
        for &k in &cfg.grid.k {
            for &t in &cfg.grid.t {
                let p = [("alpha", a), ("beta1", b1), ("beta2", b2), ("gamma", g), ("t", t), ("k", k as f64)];
                let mut bounds = vec![BoundReport::new("thm1", &p, thm1_w2_bound(a, b1, b2, g, k, c.thm1))];
                for &eps in &cfg.grid.epsilon {
                    let mut pe = p.to_vec();
                    pe.push(("epsilon", eps));
                    bounds.push(BoundReport::new("thm2", &pe, thm2_kl_bound(a, b1, b2, g, t, eps, k, c.thm2)));
                }
                let (eps, v) = thm2_optimize_epsilon(a, b1, b2, g, t, k, c.thm2);
                let mut pe = p.to_vec();
                pe.push(("epsilon", eps));
                bounds.push(BoundReport::new("thm2_opt", &pe, v));
                bounds.push(
                    BoundReport::new("thm3", &p, LogValue::from_value(thm3_kl_k1_bound(a, b1, t))).assume("k = 1", k == 1),
                );
                let pm = [("mean_sq_norm", ms), ("beta2", b2), ("gamma", g), ("t", t), ("k", k as f64)];
                bounds.push(
                    BoundReport::new("thm4", &pm, thm4_kl_sphere_bound(ms, b2, g, t, k)).assume("constant norm", constant),
                );
                let (v5, t_star) = thm5_w2_sphere_bound(ms, b2, g, k, c.thm5);
                let mut p5 = pm.to_vec();
                p5.push(("t_star", t_star));
                bounds.push(BoundReport::new("thm5", &p5, v5).assume("constant norm", constant));
                bounds.push(
                    BoundReport::new("cor1", &[("n", n as f64), ("k", k as f64)], LogValue::from_value(cor1_w2_bound(n, k, c.cor1)))
                        .assume("iid gaussian", cfg.sources[s].is_gaussian_iid()),
                );
                out.push(BoundsEntry {
                    source: format!("{s}:{}", e.label),
                    n,
                    k,
                    t,
                    bounds,
                });
            }
        }
    }
    Ok(out)
}

/// The configured `estimates` at every grid point with `k` under the cap.
pub fn run_estimates(cfg: &ExperimentConfig) -> Result<Vec<verify::EstimateEntry>> {
    let sources = Workspace::build_sources(cfg)?;
    let mut needs = Needs::default();
    for s in 0..cfg.sources.len() {
        for (ni, &n) in cfg.grid.n.iter().enumerate() {
            if sources[s][ni].is_none() {
                continue;
            }
            for k in cfg.estimation_ks() {
                for ti in 0..cfg.grid.t.len() {
                    for q in &cfg.estimates {
                        let quantity = QuantityKey::from_quantity(*q);
                        let (k, ti) = match quantity {
                            QuantityKey::ExpectedW2 => (k, 0),
                            QuantityKey::VarDensityIntegral if k != 1 => continue,
                            _ => (k, ti),
                        };
                        needs.estimates.insert(EstKey {
                            quantity,
                            source: s,
                            n,
                            k,
                            ti,
                        });
                    }
                }
            }
        }
    }
    let ws = Workspace::compute(cfg, &needs)?;
    Ok(ws
        .estimates
        .into_iter()
        .map(|(key, report)| verify::EstimateEntry {
            key,
            quantity: key.quantity.name().to_string(),
            n: key.n,
            k: key.k,
            t: (key.quantity != QuantityKey::ExpectedW2).then(|| cfg.grid.t[key.ti]),
            report,
        })
        .collect())
}
