//! Plain-text CSV rendering and parsing.
//!
//! Every numeric field is written as `{:.16e}` (17 significant digits), which
//! round-trips `f64` exactly; lines end with a bare `\n`. Rendering is pure
//! string building so callers can assemble all outputs before touching the
//! filesystem.

use crate::error::{Error, Result};
use crate::simulate::FieldPath;
use crate::study::{MseRow, RawRow, StudyReport, SummaryRow, VarianceRow};

/// Canonical numeric formatting for CSV output: 17 significant digits,
/// scientific notation, exact `f64` round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn coordinate_header(dim: usize) -> String {
    (1..=dim)
        .map(|i| format!("t_{i}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders a sampled path as `t_1,...,t_d,value` rows in grid order.
pub fn render_path_csv(path: &FieldPath) -> String {
    let dim = path.grid().dim();
    let mut out = String::with_capacity(32 * path.values().len());
    out.push_str(&coordinate_header(dim));
    out.push_str(",value\n");
    for (point, value) in path.grid().points().iter().zip(path.values()) {
        for x in point {
            out.push_str(&fmt_f64(*x));
            out.push(',');
        }
        out.push_str(&fmt_f64(*value));
        out.push('\n');
    }
    out
}

/// A parsed `t_1,...,t_d,value` file.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedPath {
    pub dim: usize,
    pub coordinates: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

fn parse_field(raw: &str, line: usize, what: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| {
        Error::invalid(format!("line {line}: cannot parse {what} from \"{raw}\""))
    })?;
    if !value.is_finite() {
        return Err(Error::invalid(format!(
            "line {line}: {what} must be finite, got \"{raw}\""
        )));
    }
    Ok(value)
}

/// Parses a path CSV produced by [`render_path_csv`] (or hand-written in the
/// same shape). Requires the exact `t_1,...,t_d,value` header, at least one
/// row, and finite numbers throughout.
pub fn parse_path_csv(text: &str) -> Result<ParsedPath> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid("empty path file"))?;
    let columns: Vec<&str> = header.trim_end().split(',').collect();
    if columns.len() < 2 || columns[columns.len() - 1] != "value" {
        return Err(Error::invalid(format!(
            "malformed path header \"{header}\": expected t_1,...,t_d,value"
        )));
    }
    let dim = columns.len() - 1;
    let expected = coordinate_header(dim) + ",value";
    if header.trim_end() != expected {
        return Err(Error::invalid(format!(
            "malformed path header \"{header}\": expected \"{expected}\""
        )));
    }
    let mut coordinates = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::invalid(format!(
                "line {}: expected {} fields, found {}",
                i + 1,
                dim + 1,
                fields.len()
            )));
        }
        let mut point = Vec::with_capacity(dim);
        for (a, f) in fields[..dim].iter().enumerate() {
            point.push(parse_field(f, i + 1, &format!("coordinate t_{}", a + 1))?);
        }
        coordinates.push(point);
        values.push(parse_field(fields[dim], i + 1, "value")?);
    }
    if values.is_empty() {
        return Err(Error::invalid("path file has a header but no rows"));
    }
    Ok(ParsedPath {
        dim,
        coordinates,
        values,
    })
}

/// `replication,method,level,sym_diff` rows.
pub fn render_raw_csv(rows: &[RawRow]) -> String {
    let mut out = String::from("replication,method,level,sym_diff\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.replication,
            r.method,
            fmt_f64(r.level),
            fmt_f64(r.sym_diff)
        ));
    }
    out
}

/// `method,level,mean,q1,median,q3,min,max` rows.
pub fn render_summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("method,level,mean,q1,median,q3,min,max\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.method,
            fmt_f64(r.level),
            fmt_f64(r.mean),
            fmt_f64(r.q1),
            fmt_f64(r.median),
            fmt_f64(r.q3),
            fmt_f64(r.min),
            fmt_f64(r.max)
        ));
    }
    out
}

/// `method,replication,var_hat` rows.
pub fn render_variance_csv(rows: &[VarianceRow]) -> String {
    let mut out = String::from("method,replication,var_hat\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.method,
            r.replication,
            fmt_f64(r.var_hat)
        ));
    }
    out
}

/// `method,t_1,...,t_d,mse` rows.
pub fn render_mse_csv(rows: &[MseRow], dim: usize) -> String {
    let mut out = String::from("method,");
    out.push_str(&coordinate_header(dim));
    out.push_str(",mse\n");
    for r in rows {
        out.push_str(&format!("{},", r.method));
        for x in &r.location {
            out.push_str(&fmt_f64(*x));
            out.push(',');
        }
        out.push_str(&fmt_f64(r.mse));
        out.push('\n');
    }
    out
}

/// All four study tables rendered at once, in a fixed order:
/// raw, summary, variance, mse.
pub fn render_study_csvs(report: &StudyReport) -> [(&'static str, String); 4] {
    let dim = report.config.window.dim();
    [
        ("raw.csv", render_raw_csv(&report.raw)),
        ("summary.csv", render_summary_csv(&report.summary)),
        ("variance.csv", render_variance_csv(&report.variance)),
        ("mse.csv", render_mse_csv(&report.mse_curve, dim)),
    ]
}
