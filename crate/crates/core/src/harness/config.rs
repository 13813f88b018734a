//! Experiment configuration: one JSON document, versioned, unknown keys rejected.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::checks::CheckId;
use crate::bounds::{COR1_C, THM1_C, THM2_C, THM5_C};
use crate::error::{Error, Result};
use crate::estimators::{Quantity, EXACT_ASSIGNMENT_MAX};
use crate::sources::{
    make_deterministic, make_empirical, make_iid, make_orthogonal_support, make_sphere, Marginal, VectorSource,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub root_seed: u64,
    pub sources: Vec<SourceSpec>,
    pub grid: Grid,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub checks: Vec<String>,
    /// Quantities estimated by `sweep` and `estimate`.
    #[serde(default)]
    pub estimates: Vec<Quantity>,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default = "default_k_cap")]
    pub estimation_k_cap: usize,
    #[serde(default = "default_runtime")]
    pub max_runtime_seconds: f64,
    #[serde(default)]
    pub output: Output,
}

fn default_k_cap() -> usize {
    4
}

fn default_runtime() -> f64 {
    3600.0
}

/// Law of `X`. The dimension comes from the grid, except for empirical data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    Iid {
        marginal: Marginal,
    },
    Sphere {
        #[serde(default = "one")]
        gamma: f64,
    },
    /// `support` orthogonal atoms with the given weights (uniform if omitted).
    OrthogonalSupport {
        support: usize,
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    /// The point whose coordinates repeat `pattern` cyclically.
    Deterministic {
        pattern: Vec<f64>,
    },
    /// Rows of a numeric CSV file, relative paths resolved against the config.
    Empirical {
        path: PathBuf,
        #[serde(default = "yes")]
        with_replacement: bool,
    },
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl SourceSpec {
    /// Builds the source at dimension `n`; `Ok(None)` when the source has a fixed
    /// dimension different from `n`.
    pub fn build(&self, n: usize) -> Result<Option<VectorSource>> {
        let src = match self {
            SourceSpec::Iid { marginal } => make_iid(n, *marginal)?,
            SourceSpec::Sphere { gamma } => make_sphere(n, *gamma)?,
            SourceSpec::OrthogonalSupport {
                support,
                gamma,
                weights,
            } => {
                let w = weights.clone().unwrap_or_else(|| vec![1.0 / *support as f64; *support]);
                if w.len() != *support {
                    return Err(Error::Config(format!(
                        "orthogonal-support source has support {support} but {} weights",
                        w.len()
                    )));
                }
                if *support > n {
                    return Ok(None);
                }
                make_orthogonal_support(n, &w, *gamma)?
            }
            SourceSpec::Deterministic { pattern } => {
                if pattern.is_empty() {
                    return Err(Error::Config("deterministic source needs a non-empty pattern".into()));
                }
                make_deterministic(Array1::from_shape_fn(n, |i| pattern[i % pattern.len()]))?
            }
            SourceSpec::Empirical {
                path,
                with_replacement,
            } => {
                let rows = read_rows(path)?;
                if rows.ncols() != n {
                    return Ok(None);
                }
                make_empirical(rows, *with_replacement)?
            }
        };
        Ok(Some(src))
    }

    pub fn is_gaussian_iid(&self) -> bool {
        matches!(
            self,
            SourceSpec::Iid {
                marginal: Marginal::StandardNormal | Marginal::Normal { .. }
            }
        )
    }
}

fn read_rows(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(r) => r,
            // a header line
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::Config(format!("{}: line {}: {e}", path.display(), i + 1)));
            }
        };
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Config(format!("{}: ragged row at line {}", path.display(), i + 1)));
            }
            _ => {}
        }
        data.extend(row);
    }
    let cols = cols.ok_or_else(|| Error::Config(format!("{}: no data rows", path.display())))?;
    Array2::from_shape_vec((data.len() / cols, cols), data).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub t: Vec<f64>,
    /// Fixed truncation levels for the KL bound.
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    /// Also report the KL bound at its optimal `ε`.
    #[serde(default = "yes")]
    pub optimize_epsilon: bool,
}

fn default_epsilon() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Samples for `α`.
    pub stats_samples: usize,
    /// Pairs for `β₁`, `β₂`.
    pub stats_pairs: usize,
    /// Pairs for Monte Carlo `m_p`.
    pub moment_pairs: usize,
    /// `Θ` replicates of the nested KL and MI estimators.
    pub reps: usize,
    pub n_outer: usize,
    pub m_inner: usize,
    pub richardson: bool,
    /// `Θ` replicates of the W₂ estimator.
    pub w2_reps: usize,
    /// Cloud size for W₂ at `k = 1`.
    pub m_samples: usize,
    /// Cloud size for W₂ at `k ≥ 2`.
    pub m_samples_kd: usize,
    pub vdi_reps: usize,
    pub vdi_m_inner: usize,
    pub vdi_nodes: usize,
    pub log_dev_samples: usize,
    /// Points per axis of the `(r, t, γ)` grid for the `g_{k,p}` inequality.
    pub g_kp_points: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            stats_samples: 20_000,
            stats_pairs: 20_000,
            moment_pairs: 100_000,
            reps: 16,
            n_outer: 1024,
            m_inner: 2048,
            richardson: false,
            w2_reps: 16,
            m_samples: 100_000,
            m_samples_kd: 500,
            vdi_reps: 64,
            vdi_m_inner: 2048,
            vdi_nodes: 401,
            log_dev_samples: 100_000,
            g_kp_points: 22,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    pub thm1: f64,
    pub thm2: f64,
    pub thm5: f64,
    pub cor1: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            thm1: THM1_C,
            thm2: THM2_C,
            thm5: THM5_C,
            cor1: COR1_C,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            dir: PathBuf::from("gaussproj-out"),
        }
    }
}

/// Sets `path` (dot-separated keys or array indices) in a JSON document. The
/// value is parsed as JSON, falling back to a plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = doc;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("override `{path}`: `{key}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("override `{path}`: index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("override `{path}`: `{key}` is not inside an object"))),
        };
    }
    Err(Error::Config(format!("override `{assignment}` has an empty key")))
}

impl ExperimentConfig {
    /// Parses, applies overrides and validates. Relative empirical paths are
    /// resolved against `base_dir`.
    pub fn from_json(text: &str, overrides: &[String], base_dir: Option<&Path>) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: ExperimentConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = base_dir {
            for s in &mut cfg.sources {
                if let SourceSpec::Empirical { path, .. } = s {
                    if path.is_relative() {
                        *path = base.join(&*path);
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, overrides, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.sources.is_empty() {
            return fail("no sources".into());
        }
        let g = &self.grid;
        if g.n.is_empty() || g.k.is_empty() || g.t.is_empty() {
            return fail("grid must have at least one value of n, k and t".into());
        }
        if g.n.contains(&0) || g.k.contains(&0) {
            return fail("grid n and k must be positive".into());
        }
        if g.t.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return fail("grid t must be finite and positive".into());
        }
        if g.epsilon.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return fail("grid epsilon must lie in (0, 1]".into());
        }
        if g.epsilon.is_empty() && !g.optimize_epsilon {
            return fail("grid has no epsilon and optimize_epsilon is off".into());
        }
        let b = &self.budgets;
        let counts = [
            ("stats_samples", b.stats_samples),
            ("stats_pairs", b.stats_pairs),
            ("moment_pairs", b.moment_pairs),
            ("reps", b.reps),
            ("n_outer", b.n_outer),
            ("m_inner", b.m_inner),
            ("w2_reps", b.w2_reps),
            ("m_samples", b.m_samples),
            ("m_samples_kd", b.m_samples_kd),
            ("vdi_reps", b.vdi_reps),
            ("vdi_m_inner", b.vdi_m_inner),
            ("vdi_nodes", b.vdi_nodes),
            ("log_dev_samples", b.log_dev_samples),
            ("g_kp_points", b.g_kp_points),
        ];
        for (name, v) in counts {
            if v == 0 {
                return fail(format!("budget `{name}` must be positive"));
            }
        }
        if b.stats_samples < 2 || b.stats_pairs < 2 || b.n_outer < 2 || b.m_samples < 2 || b.m_samples_kd < 2 {
            return fail("sample budgets must be at least 2".into());
        }
        if b.m_samples_kd > EXACT_ASSIGNMENT_MAX {
            return fail(format!("m_samples_kd must not exceed {EXACT_ASSIGNMENT_MAX}"));
        }
        if b.vdi_nodes < 400 {
            return fail("vdi_nodes must be at least 400".into());
        }
        let c = &self.constants;
        if [c.thm1, c.thm2, c.thm5, c.cor1].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return fail("constants must be finite and positive".into());
        }
        if self.estimation_k_cap == 0 {
            return fail("estimation_k_cap must be positive".into());
        }
        if !(self.max_runtime_seconds > 0.0) {
            return fail("max_runtime_seconds must be positive".into());
        }
        for name in &self.checks {
            if CheckId::from_name(name).is_none() {
                return fail(format!(
                    "unknown check `{name}`; registered checks: {}",
                    CheckId::ALL.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ")
                ));
            }
        }
        for s in &self.sources {
            if let SourceSpec::OrthogonalSupport { support, weights, .. } = s {
                if *support == 0 || weights.as_ref().is_some_and(|w| w.len() != *support) {
                    return fail("orthogonal-support weights must match a positive support".into());
                }
            }
        }
        Ok(())
    }

    pub fn check_ids(&self) -> Vec<CheckId> {
        self.checks.iter().filter_map(|c| CheckId::from_name(c)).collect()
    }

    /// Grid values of `k` at which estimators run.
    pub fn estimation_ks(&self) -> Vec<usize> {
        self.grid.k.iter().copied().filter(|&k| k <= self.estimation_k_cap).collect()
    }
}
