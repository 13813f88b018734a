//! `plotdata`: `(x, y, y_err)` series cut from a sweep table.

use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveSpec {
    pub x: String,
    pub y: String,
    /// Use the `<y>_log` column.
    pub log: bool,
    /// `column=value` filters applied before emitting.
    pub filters: Vec<(String, String)>,
}

impl CurveSpec {
    pub fn new(x: &str, y: &str) -> Self {
        CurveSpec {
            x: x.into(),
            y: y.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// The sweep column the `y` values came from.
    pub y_column: String,
    pub points: Vec<(f64, f64, f64)>,
}

fn parse(v: &str) -> Option<f64> {
    match v {
        "" => None,
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => v.parse().ok(),
    }
}

/// Extracts one series. A linear column holding non-finite values is replaced
/// by its `_log` companion when one exists.
pub fn extract(headers: &[String], rows: &[Vec<String>], spec: &CurveSpec) -> Result<Series> {
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::UnknownColumn {
            column: name.to_string(),
            available: headers.join(", "),
        })
    };
    let xi = col(&spec.x)?;
    col(&spec.y)?;
    let mut filters = Vec::new();
    for (k, v) in &spec.filters {
        filters.push((col(k)?, v.clone()));
    }
    let kept: Vec<&Vec<String>> = rows.iter().filter(|r| filters.iter().all(|(i, v)| &r[*i] == v)).collect();
    let log_name = format!("{}_log", spec.y);
    let mut use_log = spec.log;
    if !use_log {
        let yi = col(&spec.y)?;
        let overflow = kept.iter().any(|r| parse(&r[yi]).is_some_and(|v| !v.is_finite()));
        if overflow && headers.contains(&log_name) {
            warn!("`{}` overflows; emitting `{log_name}`", spec.y);
            use_log = true;
        }
    }
    let y_name = if use_log { log_name } else { spec.y.clone() };
    let yi = col(&y_name)?;
    let se_i = headers.iter().position(|h| *h == format!("{}_se", spec.y));
    let lin_i = col(&spec.y)?;
    let mut points = Vec::new();
    for r in kept {
        let (Some(x), Some(y)) = (parse(&r[xi]), parse(&r[yi])) else { continue };
        let se = se_i.and_then(|i| parse(&r[i])).unwrap_or(0.0);
        let err = if use_log {
            // delta method through ln
            parse(&r[lin_i]).filter(|v| v.is_finite() && *v > 0.0).map(|v| se / v).unwrap_or(0.0)
        } else {
            se
        };
        points.push((x, y, err));
    }
    Ok(Series { y_column: y_name, points })
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((headers, rows))
}

pub fn write_series(series: &Series, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "y_err"])?;
    for (x, y, e) in &series.points {
        w.write_record([x, y, e].map(|v| super::report::fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sweep CSV and writes the requested series to `out`.
pub fn emit_plotdata(sweep_csv: &Path, spec: &CurveSpec, out: &Path) -> Result<Series> {
    let (headers, rows) = read_table(sweep_csv)?;
    let series = extract(&headers, &rows, spec)?;
    write_series(&series, out)?;
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> (Vec<String>, Vec<Vec<String>>) {
        let h = ["n", "k", "thm4", "thm4_log", "expected_w2", "expected_w2_se"].map(String::from).to_vec();
        let rows = vec![
            ["64", "1", "2.5", "0.916", "0.1", "0.01"].map(String::from).to_vec(),
            ["256", "1", "inf", "900", "0.05", "0.01"].map(String::from).to_vec(),
            ["256", "2", "3", "1.0986", "", ""].map(String::from).to_vec(),
        ];
        (h, rows)
    }

    #[test]
    fn three_columns_with_errors() {
        let (h, r) = table();
        let mut spec = CurveSpec::new("n", "expected_w2");
        spec.filters.push(("k".into(), "1".into()));
        let s = extract(&h, &r, &spec).unwrap();
        assert_eq!(s.y_column, "expected_w2");
        assert_eq!(s.points, vec![(64.0, 0.1, 0.01), (256.0, 0.05, 0.01)]);
    }

    #[test]
    fn unknown_column_lists_available() {
        let (h, r) = table();
        let err = extract(&h, &r, &CurveSpec::new("n", "thm9")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("thm9") && msg.contains("expected_w2_se"), "{msg}");
    }

    #[test]
    fn overflow_switches_to_log_column() {
        let (h, r) = table();
        let s = extract(&h, &r, &CurveSpec::new("n", "thm4")).unwrap();
        assert_eq!(s.y_column, "thm4_log");
        assert_eq!(s.points[1].1, 900.0);
        let mut spec = CurveSpec::new("n", "thm4");
        spec.log = true;
        assert_eq!(extract(&h, &r, &spec).unwrap().y_column, "thm4_log");
    }
}
