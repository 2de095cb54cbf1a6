//! Deterministic report serialization.  No timestamps, fixed row
//! order, and every row stamped with the config hash; identical
//! configs therefore produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Error;
use crate::metrics::{DiagnosticReport, ErrorReport};
use crate::tope::GapRow;

pub fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// One row per region, then one row per aggregate.
pub fn error_report_csv(report: &ErrorReport, config_hash: &str) -> String {
    let mut out = String::from("config_hash,kind,region_index,p,truncation,value\n");
    let p = report.p;
    let n = report.truncation;
    for row in &report.per_region {
        let _ = writeln!(
            out,
            "{config_hash},region,{},{p},{n},{}",
            row.index, row.value
        );
    }
    for (kind, value) in [
        ("lp_total", report.lp_total),
        ("strict_norm", report.strict_norm),
        ("local_metric", report.local_metric),
        ("local_metric_tail_bound", report.local_metric_tail_bound),
    ] {
        let _ = writeln!(out, "{config_hash},{kind},,{p},{n},{value}");
    }
    out
}

pub fn gap_table_csv(rows: &[GapRow], config_hash: &str) -> String {
    let mut out =
        String::from("config_hash,row,degree,strict_error,off_support_mass,fitted_constant\n");
    for row in rows {
        let degree = row.degree.map(|d| d.to_string()).unwrap_or_default();
        let constant = row
            .fitted_constant
            .map(|c| c.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{config_hash},{},{degree},{},{},{constant}",
            row.label, row.strict_error, row.off_support_mass
        );
    }
    out
}

pub fn diagnostic_csv(report: &DiagnosticReport, config_hash: &str) -> String {
    let mut out = String::from("config_hash,k,strict_err,lp_err,support_index\n");
    for step in &report.steps {
        let _ = writeln!(
            out,
            "{config_hash},{},{},{},{}",
            step.k, step.strict_err, step.lp_err, step.support_index
        );
    }
    out
}

pub fn to_pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RegionError;

    #[test]
    fn error_report_csv_layout() {
        let report = ErrorReport {
            p: 1.0,
            truncation: 2,
            per_region: vec![
                RegionError { index: 1, value: 0.5 },
                RegionError { index: 2, value: 0.25 },
            ],
            lp_total: 0.75,
            strict_norm: 0.5,
            local_metric: 0.2,
            local_metric_tail_bound: 0.25,
        };
        let csv = error_report_csv(&report, "cafe");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "cafe,region,1,1,2,0.5");
        assert_eq!(lines[3], "cafe,lp_total,,1,2,0.75");
        assert!(lines.iter().skip(1).all(|l| l.starts_with("cafe,")));
    }
}
