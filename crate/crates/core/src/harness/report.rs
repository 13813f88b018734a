//! Report files: `report.json` (everything), `report.csv` (one line per row)
//! and `seed_lineage.csv` (check → seed path).

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::checks::VerificationRow;
use super::verify::VerifyReport;
use crate::error::Result;

const FIXED_PARAMS: [&str; 4] = ["n", "k", "t", "epsilon"];

/// Plain decimal rendering; non-finite values as `inf`, `-inf`, `nan`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn opt_param(row: &VerificationRow, name: &str) -> String {
    row.params.get(name).map(|v| fmt_f64(*v)).unwrap_or_default()
}

pub fn write_rows_csv(rows: &[VerificationRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "check", "kind", "source", "n", "k", "t", "epsilon", "params", "lhs", "lhs_se", "rhs", "rhs_log", "rhs_se",
        "margin", "verdict", "seed_paths",
    ])?;
    for r in rows {
        let extra: Vec<String> = r
            .params
            .iter()
            .filter(|(k, _)| !FIXED_PARAMS.contains(&k.as_str()))
            .map(|(k, v)| format!("{k}={}", fmt_f64(*v)))
            .collect();
        let kind = serde_json::to_value(r.kind)?;
        w.write_record([
            r.check.clone(),
            kind.as_str().unwrap_or_default().to_string(),
            r.source.clone(),
            opt_param(r, "n"),
            opt_param(r, "k"),
            opt_param(r, "t"),
            opt_param(r, "epsilon"),
            extra.join(";"),
            fmt_f64(r.lhs),
            fmt_f64(r.lhs_se),
            fmt_f64(r.rhs),
            fmt_f64(r.rhs_log),
            fmt_f64(r.rhs_se),
            fmt_f64(r.margin),
            r.verdict.as_str().to_string(),
            r.seed_paths.join(" "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes the three verify outputs into `dir` and returns their paths.
pub fn write_verify(report: &VerifyReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let json = dir.join("report.json");
    let csv_path = dir.join("report.csv");
    let lineage = dir.join("seed_lineage.csv");
    write_json(report, &json)?;
    write_rows_csv(&report.rows, &csv_path)?;
    let mut w = csv::Writer::from_path(&lineage)?;
    w.write_record(["check", "seed_path"])?;
    for (check, paths) in &report.seed_lineage {
        for p in paths {
            w.write_record([check, p])?;
        }
    }
    w.flush()?;
    Ok(vec![json, csv_path, lineage])
}
