use std::io::{Read, Write};
use std::path::Path;

use super::{sort_rows, BenchmarkReport, HarnessError, ReportRow};
use crate::estimators::Method;

pub const REPORT_HEADER: &str = "method,n_traj,alpha,asd,mean_estimate,ci_low,ci_high,rmse,log_rmse";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes rows in (method, n_traj, alpha, asd) order. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_report_csv<W: Write>(mut out: W, rows: &[ReportRow]) -> std::io::Result<()> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    writeln!(out, "{REPORT_HEADER}")?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method.tag(),
            r.n_traj,
            r.alpha,
            r.asd,
            r.mean_estimate,
            opt(r.ci_low),
            opt(r.ci_high),
            r.rmse,
            r.log_rmse
        )?;
    }
    out.flush()
}

pub fn emit_csv(report: &BenchmarkReport, path: &Path) -> Result<(), HarnessError> {
    let io_err = |e: std::io::Error| HarnessError::Io { path: path.to_path_buf(), message: e.to_string() };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_report_csv(std::io::BufWriter::new(file), &report.rows).map_err(io_err)
}

fn parse_f64(field: &str, name: &str, line: usize) -> Result<f64, HarnessError> {
    field.parse::<f64>().map_err(|_| HarnessError::Parse(format!("line {line}: bad {name} `{field}`")))
}

fn parse_opt(field: &str, name: &str, line: usize) -> Result<Option<f64>, HarnessError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, name, line).map(Some)
    }
}

/// Parses a report written by [`write_report_csv`].
pub fn parse_report_csv<R: Read>(input: R) -> Result<Vec<ReportRow>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| HarnessError::Parse(e.to_string()))?;
    let found: Vec<&str> = header.iter().collect();
    if found.join(",") != REPORT_HEADER {
        return Err(HarnessError::Parse(format!("unexpected header `{}`", found.join(","))));
    }
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| HarnessError::Parse(e.to_string()))?;
        if rec.len() != 9 {
            return Err(HarnessError::Parse(format!("line {line}: expected 9 fields")));
        }
        let method: Method = rec[0].parse().map_err(|_| HarnessError::Parse(format!("line {line}: bad method `{}`", &rec[0])))?;
        let n_traj = rec[1].parse().map_err(|_| HarnessError::Parse(format!("line {line}: bad n_traj `{}`", &rec[1])))?;
        let row = ReportRow {
            method,
            n_traj,
            alpha: parse_f64(&rec[2], "alpha", line)?,
            asd: parse_f64(&rec[3], "asd", line)?,
            mean_estimate: parse_f64(&rec[4], "mean_estimate", line)?,
            ci_low: parse_opt(&rec[5], "ci_low", line)?,
            ci_high: parse_opt(&rec[6], "ci_high", line)?,
            rmse: parse_f64(&rec[7], "rmse", line)?,
            log_rmse: parse_f64(&rec[8], "log_rmse", line)?,
        };
        if row.ci_low.is_some() != row.ci_high.is_some() {
            return Err(HarnessError::Parse(format!("line {line}: only one CI bound present")));
        }
        rows.push(row);
    }
    Ok(rows)
}
