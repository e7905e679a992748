//! Report serialization: a CSV table with one row per subset plus the
//! overall row, a plain-text summary, and a per-query fluctuation series.
//!
//! ```text
//! #report,k_eval=6,mr_threshold=2
//! subset,queries,agents,min_fde_k,min_ade_k,mr_k,min_fde_1,min_ade_1,mr_1,fluctuation
//! moving-visible,1520,31,1.25,0.61,0.12,2.9,1.3,0.45,0.08
//! ...
//! overall,5210,48,...
//! ```
//!
//! Undefined values are written as `NA`.

use std::fmt::Write as _;

use super::{MetricValues, MetricsReport, QueryMetrics};
use crate::error::{Error, Result};

pub const REPORT_COLUMNS: [&str; 10] =
    ["subset", "queries", "agents", "min_fde_k", "min_ade_k", "mr_k", "min_fde_1", "min_ade_1", "mr_1", "fluctuation"];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn values(v: &MetricValues) -> [Option<f64>; 3] {
    [v.min_fde, v.min_ade, v.miss_rate]
}

/// One parsed row of a report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub queries: usize,
    pub agents: usize,
    /// The seven metric columns in header order.
    pub values: [Option<f64>; 7],
}

impl ReportRow {
    pub fn column(&self, name: &str) -> Option<f64> {
        let i = REPORT_COLUMNS.iter().position(|c| *c == name)?;
        i.checked_sub(3).and_then(|j| self.values[j])
    }
}

pub fn report_rows(report: &MetricsReport) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = report
        .subsets
        .iter()
        .map(|s| {
            let [a, b, c] = values(&s.k);
            let [d, e, f] = values(&s.one);
            ReportRow { label: s.subset.to_string(), queries: s.queries, agents: s.agents, values: [a, b, c, d, e, f, s.fluctuation] }
        })
        .collect();
    let [a, b, c] = values(&report.overall_k);
    let [d, e, f] = values(&report.overall_one);
    rows.push(ReportRow {
        label: "overall".into(),
        queries: report.queries,
        agents: report.agents,
        values: [a, b, c, d, e, f, report.overall_fluctuation],
    });
    rows
}

pub fn render_report_csv(report: &MetricsReport) -> String {
    let mut out = format!("#report,k_eval={},mr_threshold={}\n{}\n", report.k_eval, report.mr_threshold, REPORT_COLUMNS.join(","));
    for row in report_rows(report) {
        let _ = write!(out, "{},{},{}", row.label, row.queries, row.agents);
        for v in row.values {
            let _ = write!(out, ",{}", cell(v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let err = |line: usize, message: String| Error::Parse { line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.starts_with("#report") => {}
        _ => return Err(err(1, "missing #report header".into())),
    }
    match lines.next() {
        Some((_, l)) if l == REPORT_COLUMNS.join(",") => {}
        Some((i, _)) => return Err(err(i + 1, "unexpected column header".into())),
        None => return Err(err(2, "missing column header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != REPORT_COLUMNS.len() {
            return Err(err(i + 1, format!("expected {} fields, found {}", REPORT_COLUMNS.len(), f.len())));
        }
        let count = |j: usize| f[j].parse::<usize>().map_err(|_| err(i + 1, format!("bad count '{}'", f[j])));
        let mut values = [None; 7];
        for (j, v) in values.iter_mut().enumerate() {
            let s = f[3 + j];
            *v = if s == "NA" {
                None
            } else {
                Some(s.parse::<f64>().map_err(|_| err(i + 1, format!("bad value '{s}'")))?)
            };
        }
        rows.push(ReportRow { label: f[0].to_string(), queries: count(1)?, agents: count(2)?, values });
    }
    if rows.is_empty() {
        return Err(err(3, "report has no rows".into()));
    }
    Ok(rows)
}

pub fn render_report_text(title: &str, report: &MetricsReport) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "    NA".to_string(), |x| format!("{x:6.3}"));
    let mut out = format!("{title}\nK={} miss threshold {} m\n", report.k_eval, report.mr_threshold);
    let _ = writeln!(
        out,
        "{:<16} {:>7} {:>6}  {:>6} {:>6} {:>6}  {:>6} {:>6} {:>6}  {:>6}",
        "subset", "queries", "agents", "FDE@K", "ADE@K", "MR@K", "FDE@1", "ADE@1", "MR@1", "fluct"
    );
    for row in report_rows(report) {
        let v = row.values.map(fmt);
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>6}  {} {} {}  {} {} {}  {}",
            row.label, row.queries, row.agents, v[0], v[1], v[2], v[3], v[4], v[5], v[6]
        );
    }
    out
}

/// `scenario,frame,agent_id,subset,fluctuation` for every query that has
/// a previous-frame prediction.
pub fn render_fluctuation_csv(queries: &[(usize, QueryMetrics)]) -> String {
    let mut out = String::from("scenario,frame,agent_id,subset,fluctuation\n");
    for (s, q) in queries {
        if let Some(f) = q.fluctuation {
            let _ = writeln!(out, "{s},{},{},{},{f}", q.frame, q.agent_id, q.subset);
        }
    }
    out
}
