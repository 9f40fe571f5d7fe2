//! Plot-ready CSV and JSON written by `diag`.

use std::path::Path;

use serde::Serialize;

use crate::io::{write_json, TraceTable};
use crate::mcmc::diagnostics::{histogram, summarize, ParamSummary};
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct DiagSummary {
    pub rows: usize,
    pub acceptance: f64,
    pub params: Vec<ParamSummary>,
}

fn csv_at(dir: &Path, name: &str) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(dir.join(name))?)
}

/// `traceplot_<param>.csv` (iteration, value), `posterior_<param>.csv`
/// (bin_left, bin_right, count) and `summary.json` with ESS, acceptance and
/// quantiles.
pub fn emit_plot_data(dir: &Path, table: &TraceTable, bins: usize) -> Result<DiagSummary> {
    let mut params = Vec::with_capacity(table.names.len());
    for (j, name) in table.names.iter().enumerate() {
        let col = table.column(j);
        let mut w = csv_at(dir, &format!("traceplot_{name}.csv"))?;
        w.write_record(["iteration", "value"])?;
        for (i, v) in col.iter().enumerate() {
            w.write_record([i.to_string(), format!("{v}")])?;
        }
        w.flush()?;
        let mut w = csv_at(dir, &format!("posterior_{name}.csv"))?;
        w.write_record(["bin_left", "bin_right", "count"])?;
        for b in histogram(&col, bins) {
            w.write_record([format!("{}", b.left), format!("{}", b.right), b.count.to_string()])?;
        }
        w.flush()?;
        params.push(summarize(name, &col));
    }
    let accepted = table.rows.iter().filter(|r| r.accepted).count();
    let summary = DiagSummary {
        rows: table.rows.len(),
        acceptance: accepted as f64 / table.rows.len().max(1) as f64,
        params,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// `diag_ess.csv`, `diag_quantiles.csv`, `diag_acceptance.csv` (cumulative
/// rate per iteration) and `diag_histogram.csv` (all parameters stacked).
pub fn write_diag_tables(dir: &Path, table: &TraceTable, bins: usize) -> Result<()> {
    let summaries: Vec<ParamSummary> =
        table.names.iter().enumerate().map(|(j, n)| summarize(n, &table.column(j))).collect();

    let mut w = csv_at(dir, "diag_ess.csv")?;
    w.write_record(["param", "ess", "n"])?;
    for s in &summaries {
        w.write_record([s.name.clone(), format!("{}", s.ess), table.rows.len().to_string()])?;
    }
    w.flush()?;

    let mut w = csv_at(dir, "diag_quantiles.csv")?;
    w.write_record(["param", "mean", "sd", "q025", "q50", "q975"])?;
    for s in &summaries {
        w.write_record([s.name.clone(), format!("{}", s.mean), format!("{}", s.sd), format!("{}", s.q025), format!("{}", s.q50), format!("{}", s.q975)])?;
    }
    w.flush()?;

    let mut w = csv_at(dir, "diag_acceptance.csv")?;
    w.write_record(["iteration", "acceptance"])?;
    let mut accepted = 0usize;
    for (i, r) in table.rows.iter().enumerate() {
        accepted += r.accepted as usize;
        w.write_record([i.to_string(), format!("{}", accepted as f64 / (i + 1) as f64)])?;
    }
    w.flush()?;

    let mut w = csv_at(dir, "diag_histogram.csv")?;
    w.write_record(["param", "bin_left", "bin_right", "count"])?;
    for (j, name) in table.names.iter().enumerate() {
        for b in histogram(&table.column(j), bins) {
            w.write_record([name.clone(), format!("{}", b.left), format!("{}", b.right), b.count.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
