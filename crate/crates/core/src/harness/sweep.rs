//! `sweep`: one row per `(source, n, k, t)` with the functionals, every bound
//! and every requested estimate.

use std::path::Path;

use log::info;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::report::fmt_f64;
use super::workspace::{estimated_seconds, EstKey, Needs, QuantityKey, Workspace};
use crate::bounds::{
    cor1_w2_bound, thm1_w2_bound, thm2_kl_bound, thm2_optimize_epsilon, thm3_kl_k1_bound, thm4_kl_sphere_bound,
    thm5_w2_sphere_bound,
};
use crate::error::{Error, Result};

/// Column names in output order, given the requested estimates.
pub fn columns(quantities: &[QuantityKey]) -> Vec<String> {
    let mut c: Vec<String> = [
        "source", "n", "k", "t", "gamma", "alpha", "alpha_se", "beta1", "beta1_se", "beta2", "beta2_se",
        "mean_sq_norm", "mean_sq_norm_se", "thm1", "thm1_log", "thm2", "thm2_log", "thm2_epsilon", "thm2_opt",
        "thm2_opt_log", "thm2_opt_epsilon", "thm3", "thm3_log", "thm4", "thm4_log", "thm5", "thm5_log",
        "thm5_t_star", "cor1", "cor1_log", "big_m", "big_m_se",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for q in quantities {
        let name = q.name();
        c.push(name.to_string());
        c.push(format!("{name}_se"));
        if *q == QuantityKey::ExpectedW2 {
            c.push(format!("{name}_corrected"));
            c.push(format!("{name}_corrected_se"));
        }
    }
    c
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SweepTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn requested(cfg: &ExperimentConfig) -> Vec<QuantityKey> {
    let mut q: Vec<QuantityKey> = cfg.estimates.iter().map(|q| QuantityKey::from_quantity(*q)).collect();
    q.dedup();
    q
}

fn est_key(q: QuantityKey, s: usize, n: usize, k: usize, ti: usize) -> Option<EstKey> {
    let (k, ti) = match q {
        QuantityKey::ExpectedW2 => (k, 0),
        QuantityKey::VarDensityIntegral if k != 1 => return None,
        _ => (k, ti),
    };
    Some(EstKey {
        quantity: q,
        source: s,
        n,
        k,
        ti,
    })
}

pub fn run_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<SweepTable> {
    let sources = Workspace::build_sources(cfg)?;
    let quantities = requested(cfg);
    let est_ks = cfg.estimation_ks();
    let mut needs = Needs::default();
    let mut points = Vec::new();
    for s in 0..cfg.sources.len() {
        for (ni, &n) in cfg.grid.n.iter().enumerate() {
            if sources[s][ni].is_none() {
                continue;
            }
            needs.stats.insert((s, n));
            needs.moments.insert((s, n));
            for &k in &cfg.grid.k {
                for ti in 0..cfg.grid.t.len() {
                    points.push((s, n, k, ti));
                    if est_ks.contains(&k) {
                        needs.estimates.extend(quantities.iter().filter_map(|&q| est_key(q, s, n, k, ti)));
                    }
                }
            }
        }
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
    let c = &cfg.constants;
    let eps = cfg.grid.epsilon.first().copied().unwrap_or(1.0);
    let mut rows = Vec::new();
    for (s, n, k, ti) in points {
        let t = cfg.grid.t[ti];
        let entry = &ws.stats[&(s, n)];
        let d = &entry.stats;
        let g = d.gamma;
        let src = ws.source(s, n, cfg).expect("built");
        let mut row: Vec<String> = vec![format!("{s}:{}", entry.label), n.to_string(), k.to_string(), fmt_f64(t), fmt_f64(g)];
        for e in [d.alpha, d.beta1, d.beta2, d.mean_sq_norm] {
            row.push(fmt_f64(e.value));
            row.push(fmt_f64(e.se));
        }
        let (a, b1, b2, ms) = (d.alpha.value, d.beta1.value, d.beta2.value, d.mean_sq_norm.value);
        let thm1 = thm1_w2_bound(a, b1, b2, g, k, c.thm1);
        let thm2 = thm2_kl_bound(a, b1, b2, g, t, eps, k, c.thm2);
        let (opt_eps, thm2_opt) = thm2_optimize_epsilon(a, b1, b2, g, t, k, c.thm2);
        row.extend([thm1.value, thm1.log_value, thm2.value, thm2.log_value, eps, thm2_opt.value, thm2_opt.log_value, opt_eps].map(fmt_f64));
        if k == 1 {
            let v = thm3_kl_k1_bound(a, b1, t);
            row.extend([fmt_f64(v), fmt_f64(v.ln())]);
        } else {
            row.extend([String::new(), String::new()]);
        }
        if src.constant_norm() {
            let v4 = thm4_kl_sphere_bound(ms, b2, g, t, k);
            let (v5, t_star) = thm5_w2_sphere_bound(ms, b2, g, k, c.thm5);
            row.extend([v4.value, v4.log_value, v5.value, v5.log_value, t_star].map(fmt_f64));
        } else {
            row.extend(std::iter::repeat_n(String::new(), 5));
        }
        let cor1 = cor1_w2_bound(n, k, c.cor1);
        row.extend([fmt_f64(cor1), fmt_f64(cor1.ln())]);
        match ws.moments.get(&(s, n)).and_then(|m| m.get(k, t)) {
            Some(m) => row.extend([fmt_f64(m.big_m.value), fmt_f64(m.big_m.se)]),
            None => row.extend([String::new(), String::new()]),
        }
        for &q in &quantities {
            let rep = est_key(q, s, n, k, ti).and_then(|key| ws.estimates.get(&key));
            match rep {
                Some(r) => {
                    row.extend([fmt_f64(r.value), fmt_f64(r.se)]);
                    if q == QuantityKey::ExpectedW2 {
                        let b = r.best();
                        row.extend([fmt_f64(b.value), fmt_f64(b.se)]);
                    }
                }
                None => {
                    let width = if q == QuantityKey::ExpectedW2 { 4 } else { 2 };
                    row.extend(std::iter::repeat_n(String::new(), width));
                }
            }
        }
        rows.push(row);
    }
    Ok(SweepTable {
        columns: columns(&quantities),
        rows,
    })
}
