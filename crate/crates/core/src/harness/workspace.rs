//! Shared computations behind `verify`, `sweep` and the inspection commands:
//! sources per grid dimension, distribution functionals, moment tables and
//! replicated estimates, each on its own seed path and computed in parallel.

use std::collections::{BTreeMap, BTreeSet};

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::estimators::{
    expected_kl, expected_w2, marginal_kl, mi_x_y, mi_y_theta, var_density_integral, EstimateReport, MiRoute,
    NestedBudget, OtMethod, Quantity, VdiGrid,
};
use crate::mc::Estimate;
use crate::moments::{big_m, m_p_orthogonal, m_p_sphere, MomentEstimate, MomentMethod, PairSample};
use crate::rng::SeedPath;
use crate::sources::{SourceKind, VectorSource};
use crate::stats::{compute_stats, DistributionStats, StatsBudget};

/// Operations per second per worker assumed by the runtime ceiling.
const OPS_PER_SECOND: f64 = 5e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EstKey {
    pub quantity: QuantityKey,
    pub source: usize,
    pub n: usize,
    pub k: usize,
    /// Index into the grid's `t` values (0 for `t`-free quantities).
    pub ti: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKey {
    ExpectedW2,
    ExpectedKl,
    MarginalKl,
    MiYTheta,
    MiXY,
    VarDensityIntegral,
}

impl QuantityKey {
    pub fn from_quantity(q: Quantity) -> Self {
        match q {
            Quantity::ExpectedW2 => QuantityKey::ExpectedW2,
            Quantity::ExpectedKl => QuantityKey::ExpectedKl,
            Quantity::MarginalKl => QuantityKey::MarginalKl,
            Quantity::MiYTheta => QuantityKey::MiYTheta,
            Quantity::MiXY => QuantityKey::MiXY,
            Quantity::VarDensityIntegral => QuantityKey::VarDensityIntegral,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QuantityKey::ExpectedW2 => "expected_w2",
            QuantityKey::ExpectedKl => "expected_kl",
            QuantityKey::MarginalKl => "marginal_kl",
            QuantityKey::MiYTheta => "mi_y_theta",
            QuantityKey::MiXY => "mi_x_y",
            QuantityKey::VarDensityIntegral => "var_density_integral",
        }
    }
}

/// `m_{k−1}`, `m_{k+1}` and `M` at one `(k, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentPair {
    pub k: usize,
    pub t: f64,
    pub lo: MomentEstimate,
    pub hi: MomentEstimate,
    /// `M` with a conservative error from the joint extremes `(mᵢ⁺ + seᵢ)`.
    pub big_m: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub method: MomentMethod,
    pub seed_path: String,
    pub pairs: usize,
    pub entries: Vec<MomentPair>,
}

impl MomentTable {
    pub fn get(&self, k: usize, t: f64) -> Option<&MomentPair> {
        self.entries.iter().find(|e| e.k == k && e.t == t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsEntry {
    pub source: usize,
    pub label: String,
    pub stats: DistributionStats,
    pub seed_path: String,
}

/// What a command needs computed.
#[derive(Debug, Default, Clone)]
pub struct Needs {
    pub stats: BTreeSet<(usize, usize)>,
    pub moments: BTreeSet<(usize, usize)>,
    pub estimates: BTreeSet<EstKey>,
}

enum Unit {
    Stats(usize, usize),
    Moments(usize, usize),
    Estimate(EstKey),
}

enum UnitOut {
    Stats((usize, usize), StatsEntry),
    Moments((usize, usize), MomentTable),
    Estimate(EstKey, EstimateReport),
}

pub struct Workspace {
    pub root: SeedPath,
    /// `sources[s][i]` is source `s` at `grid.n[i]`, absent when its dimension
    /// is fixed to something else.
    pub sources: Vec<Vec<Option<VectorSource>>>,
    pub stats: BTreeMap<(usize, usize), StatsEntry>,
    pub moments: BTreeMap<(usize, usize), MomentTable>,
    pub estimates: BTreeMap<EstKey, EstimateReport>,
}

impl Workspace {
    pub fn build_sources(cfg: &ExperimentConfig) -> Result<Vec<Vec<Option<VectorSource>>>> {
        cfg.sources
            .iter()
            .map(|spec| cfg.grid.n.iter().map(|&n| spec.build(n)).collect())
            .collect()
    }

    pub fn source(&self, s: usize, n: usize, cfg: &ExperimentConfig) -> Option<&VectorSource> {
        let i = cfg.grid.n.iter().position(|&v| v == n)?;
        self.sources[s][i].as_ref()
    }

    /// Computes every unit of `needs` in parallel. Results land in ordered
    /// maps, so nothing depends on scheduling.
    pub fn compute(cfg: &ExperimentConfig, needs: &Needs) -> Result<Workspace> {
        let sources = Self::build_sources(cfg)?;
        let root = SeedPath::root(cfg.root_seed);
        let find = |s: usize, n: usize| -> &VectorSource {
            let i = cfg.grid.n.iter().position(|&v| v == n).expect("grid n");
            sources[s][i].as_ref().expect("planned units only use built sources")
        };
        let mut units: Vec<Unit> = Vec::new();
        units.extend(needs.estimates.iter().map(|k| Unit::Estimate(*k)));
        units.extend(needs.moments.iter().map(|&(s, n)| Unit::Moments(s, n)));
        units.extend(needs.stats.iter().map(|&(s, n)| Unit::Stats(s, n)));
        info!("computing {} work units", units.len());
        let outs: Vec<UnitOut> = units
            .into_par_iter()
            .map(|u| -> Result<UnitOut> {
                match u {
                    Unit::Stats(s, n) => {
                        let seed = root.child_named("stats").child(s as u64).child(n as u64);
                        let src = find(s, n);
                        let budget = StatsBudget {
                            n_samples: cfg.budgets.stats_samples,
                            n_pairs: cfg.budgets.stats_pairs,
                        };
                        let stats = compute_stats(src, budget, &seed)?;
                        Ok(UnitOut::Stats(
                            (s, n),
                            StatsEntry {
                                source: s,
                                label: src.label(),
                                stats,
                                seed_path: seed.to_string(),
                            },
                        ))
                    }
                    Unit::Moments(s, n) => {
                        let seed = root.child_named("moments").child(s as u64).child(n as u64);
                        Ok(UnitOut::Moments((s, n), moment_table(cfg, find(s, n), &seed)?))
                    }
                    Unit::Estimate(key) => {
                        let report = run_estimate(cfg, find(key.source, key.n), key, &root)?;
                        Ok(UnitOut::Estimate(key, report))
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ws = Workspace {
            root,
            sources,
            stats: BTreeMap::new(),
            moments: BTreeMap::new(),
            estimates: BTreeMap::new(),
        };
        for o in outs {
            match o {
                UnitOut::Stats(k, v) => {
                    ws.stats.insert(k, v);
                }
                UnitOut::Moments(k, v) => {
                    ws.moments.insert(k, v);
                }
                UnitOut::Estimate(k, v) => {
                    ws.estimates.insert(k, v);
                }
            }
        }
        Ok(ws)
    }

    pub fn estimate(&self, key: EstKey) -> &EstimateReport {
        &self.estimates[&key]
    }
}

pub fn estimate_seed(root: &SeedPath, key: EstKey) -> SeedPath {
    root.child_named(key.quantity.name())
        .child(key.source as u64)
        .child(key.n as u64)
        .child(key.k as u64)
        .child(key.ti as u64)
}

fn run_estimate(cfg: &ExperimentConfig, src: &VectorSource, key: EstKey, root: &SeedPath) -> Result<EstimateReport> {
    let b = &cfg.budgets;
    let seed = estimate_seed(root, key);
    let t = cfg.grid.t[key.ti];
    let nested = NestedBudget {
        reps: b.reps,
        n_outer: b.n_outer,
        m_inner: b.m_inner,
        richardson: b.richardson,
    };
    match key.quantity {
        QuantityKey::ExpectedW2 => {
            let m = if key.k == 1 { b.m_samples } else { b.m_samples_kd };
            expected_w2(src, key.k, b.w2_reps, m, &seed, OtMethod::Auto)
        }
        QuantityKey::ExpectedKl => expected_kl(src, t, key.k, &nested, &seed),
        QuantityKey::MarginalKl => marginal_kl(src, t, key.k, &nested, &seed),
        QuantityKey::MiYTheta => mi_y_theta(src, t, key.k, &nested, &seed, MiRoute::Direct),
        QuantityKey::MiXY => mi_x_y(src, t, key.k, &nested, &seed),
        QuantityKey::VarDensityIntegral => {
            let grid = VdiGrid {
                half_width_sd: 8.0,
                nodes: b.vdi_nodes,
            };
            var_density_integral(src, t, &grid, b.vdi_reps, b.vdi_m_inner, &seed)
        }
    }
}

fn combine_m(lo: Estimate, hi: Estimate) -> Estimate {
    let value = big_m(lo.value, hi.value);
    let upper = ((lo.value.max(0.0) + lo.se) * (hi.value.max(0.0) + hi.se)).sqrt();
    Estimate::new(value, upper - value)
}

/// `m_{k±1}` over every grid `(k, t)`, in closed form when the source allows.
fn moment_table(cfg: &ExperimentConfig, src: &VectorSource, seed: &SeedPath) -> Result<MomentTable> {
    let gamma = src.gamma();
    let n = src.n();
    let closed: Option<(MomentMethod, Box<dyn Fn(usize, f64, f64) -> Result<f64> + '_>)> = match src.kind() {
        SourceKind::OrthogonalSupport { .. } | SourceKind::DeterministicPoint { .. } => {
            let lambda = src.collision_probability().unwrap_or(1.0);
            Some((
                MomentMethod::ClosedOrthogonal,
                Box::new(move |k, p, t| Ok(m_p_orthogonal(lambda, gamma, t, k, p))),
            ))
        }
        SourceKind::Sphere if n >= 2 => Some((
            MomentMethod::ClosedSphere,
            Box::new(move |k, p, t| m_p_sphere(n, gamma, t, k, p, 64)),
        )),
        _ => None,
    };
    let mut entries = Vec::new();
    match closed {
        Some((method, f)) => {
            for &k in &cfg.grid.k {
                for &t in &cfg.grid.t {
                    let mk = |p: f64| -> Result<MomentEstimate> {
                        Ok(MomentEstimate {
                            k,
                            p,
                            t,
                            value: Estimate::exact(f(k, p, t)?),
                            method,
                        })
                    };
                    let lo = mk(k as f64 - 1.0)?;
                    let hi = mk(k as f64 + 1.0)?;
                    entries.push(MomentPair {
                        k,
                        t,
                        lo,
                        hi,
                        big_m: combine_m(lo.value, hi.value),
                    });
                }
            }
            Ok(MomentTable {
                method,
                seed_path: String::new(),
                pairs: 0,
                entries,
            })
        }
        None => {
            let sample = PairSample::draw(src, cfg.budgets.moment_pairs, &mut seed.rng())?;
            for &k in &cfg.grid.k {
                for &t in &cfg.grid.t {
                    let lo = sample.m_p(k, k as f64 - 1.0, t)?;
                    let hi = sample.m_p(k, k as f64 + 1.0, t)?;
                    entries.push(MomentPair {
                        k,
                        t,
                        lo,
                        hi,
                        big_m: combine_m(lo.value, hi.value),
                    });
                }
            }
            Ok(MomentTable {
                method: MomentMethod::Mc,
                seed_path: seed.to_string(),
                pairs: cfg.budgets.moment_pairs,
                entries,
            })
        }
    }
}

/// Rough operation count of `needs`, converted to seconds for `jobs` workers.
pub fn estimated_seconds(cfg: &ExperimentConfig, needs: &Needs, jobs: usize) -> f64 {
    let b = &cfg.budgets;
    let f = |v: usize| v as f64;
    let mut ops = 0.0;
    for &(_, n) in &needs.stats {
        ops += f(n) * (f(b.stats_samples) + 2.0 * f(b.stats_pairs));
    }
    for &(_, n) in &needs.moments {
        ops += f(b.moment_pairs) * (2.0 * f(n) + 4.0 * f(cfg.grid.k.len() * cfg.grid.t.len()));
    }
    for key in &needs.estimates {
        let (n, k) = (f(key.n), f(key.k));
        let nested = f(b.reps) * (f(b.n_outer) * f(b.m_inner) * k + f(b.m_inner) * n * k);
        ops += match key.quantity {
            QuantityKey::ExpectedKl | QuantityKey::MiXY => nested,
            QuantityKey::MarginalKl => 2.0 * nested,
            QuantityKey::MiYTheta => 3.0 * nested,
            QuantityKey::VarDensityIntegral => f(b.vdi_reps) * f(b.vdi_m_inner) * (n + f(b.vdi_nodes)),
            QuantityKey::ExpectedW2 if key.k == 1 => {
                let m = f(b.m_samples);
                1.5 * f(b.w2_reps) * m * (n + 2.0 * m.log2())
            }
            QuantityKey::ExpectedW2 => {
                let m = f(b.m_samples_kd);
                1.5 * f(b.w2_reps) * (m * n * k + m * m * m)
            }
        };
    }
    ops / (OPS_PER_SECOND * jobs.max(1) as f64)
}
