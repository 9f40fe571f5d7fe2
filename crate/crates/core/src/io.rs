//! File formats shared by the command-line stages.
//!
//! Series and traces are CSV, matrices and point estimates are JSON. Floats
//! are written with Rust's shortest round-trip formatting so reruns with the
//! same seed produce identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ekf::EkfRecord;
use crate::mcmc::{McmcTrace, TraceRow};
use crate::model::{Frame, LatentPath, ModelDef, ObservationSeries, ParamSpec};
use crate::optimize::Ranked;
use crate::smc::PfFrame;
use crate::{Error, Result};

pub const MISSING: &str = "NA";

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(csv::Reader::from_reader(f))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn parse_num(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("cannot parse {what} `{s}`")))
}

/// `time,stream,value` with `NA` for missing reports.
pub fn write_series(path: &Path, model: &ModelDef, series: &ObservationSeries) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["time", "stream", "value"])?;
    for f in series.frames() {
        let value = f.value.map_or_else(|| MISSING.to_string(), num);
        w.write_record([num(f.time), model.streams[f.stream].name.clone(), value])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path, model: &ModelDef) -> Result<ObservationSeries> {
    let mut r = reader(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Invalid(format!("{}: missing column `{name}`", path.display())))
    };
    let (ct, cs, cv) = (col("time")?, col("stream")?, col("value")?);
    let mut frames = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let name = rec[cs].trim();
        let stream =
            model.stream_index(name).ok_or_else(|| Error::Invalid(format!("unknown stream `{name}` in data")))?;
        let raw = rec[cv].trim();
        let value = if raw == MISSING || raw.is_empty() { None } else { Some(parse_num(raw, "value")?) };
        frames.push(Frame { time: parse_num(&rec[ct], "time")?, stream, value });
    }
    ObservationSeries::new(frames, model)
}

/// `time,<state names>` at simulation resolution.
pub fn write_latent(path: &Path, model: &ModelDef, path_data: &LatentPath) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["time".to_string()];
    header.extend(model.state_names().iter().cloned());
    w.write_record(&header)?;
    for (t, x) in path_data.times.iter().zip(&path_data.states) {
        let mut row = vec![num(*t)];
        row.extend(x.iter().map(|v| num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `time,stream,pred_mean,pred_var,innovation,loglik_inc`.
pub fn write_ekf_trace(path: &Path, model: &ModelDef, records: &[EkfRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["time", "stream", "pred_mean", "pred_var", "innovation", "loglik_inc"])?;
    for r in records {
        w.write_record([
            num(r.time),
            model.streams[r.stream].name.clone(),
            num(r.pred_mean),
            num(r.pred_var),
            num(r.innovation),
            num(r.loglik_inc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `time,weight_ess,loglik_inc`.
pub fn write_pf_diag(path: &Path, frames: &[PfFrame]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["time", "weight_ess", "loglik_inc"])?;
    for f in frames {
        w.write_record([num(f.time), num(f.weight_ess), num(f.loglik_inc)])?;
    }
    w.flush()?;
    Ok(())
}

/// `rank,index,<params natural>,loglik`, best first.
pub fn write_lhs_ranked(path: &Path, specs: &[ParamSpec], ranked: &[Ranked]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["rank".to_string(), "index".to_string()];
    header.extend(specs.iter().map(|s| s.name.clone()));
    header.push("loglik".into());
    w.write_record(&header)?;
    for (rank, r) in ranked.iter().enumerate() {
        let mut row = vec![(rank + 1).to_string(), r.index.to_string()];
        row.extend(specs.iter().zip(&r.theta.0).map(|(s, y)| num(s.inverse(*y))));
        row.push(num(r.loglik));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Natural-scale parameter vectors of `lhs_ranked.csv`, best first.
pub fn read_lhs_ranked(path: &Path, specs: &[ParamSpec]) -> Result<Vec<Vec<f64>>> {
    let mut r = reader(path)?;
    let headers = r.headers()?.clone();
    let cols: Vec<usize> = specs
        .iter()
        .map(|s| {
            headers.iter().position(|h| h == s.name).ok_or_else(|| Error::Invalid(format!("no column `{}`", s.name)))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(cols.iter().map(|&c| parse_num(&rec[c], "parameter")).collect::<Result<Vec<_>>>()?);
    }
    Ok(out)
}

/// Point estimate written by `simplex` / `ksimplex`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFile {
    pub names: Vec<String>,
    pub natural: Vec<f64>,
    pub transformed: Vec<f64>,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loglik: Option<f64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Natural-scale starting point: a `theta_map.json`, any object with a
/// `natural` array, an object keyed by parameter name, or a bare array.
pub fn read_theta(path: &Path, specs: &[ParamSpec]) -> Result<Vec<f64>> {
    let v: serde_json::Value = serde_json::from_reader(open(path)?)?;
    let arr = match &v {
        serde_json::Value::Array(_) => v.clone(),
        serde_json::Value::Object(o) if o.contains_key("natural") => o["natural"].clone(),
        serde_json::Value::Object(o) => serde_json::Value::Array(
            specs
                .iter()
                .map(|s| o.get(&s.name).cloned().ok_or_else(|| Error::Invalid(format!("no value for `{}`", s.name))))
                .collect::<Result<_>>()?,
        ),
        _ => return Err(Error::Invalid(format!("{}: not a parameter vector", path.display()))),
    };
    let out: Vec<f64> = serde_json::from_value(arr)?;
    if out.len() != specs.len() {
        return Err(Error::LengthMismatch { expected: specs.len(), got: out.len() });
    }
    Ok(out)
}

/// `d × d` nested array.
pub fn write_cov(path: &Path, sigma: &DMatrix<f64>) -> Result<()> {
    let rows: Vec<Vec<f64>> = sigma.row_iter().map(|r| r.iter().copied().collect()).collect();
    write_json(path, &rows)
}

pub fn read_cov(path: &Path) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_reader(open(path)?)?;
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Invalid(format!("{}: covariance must be a square nested array", path.display())));
    }
    Ok(DMatrix::from_row_iterator(d, d, rows.into_iter().flatten()))
}

/// `index,<params natural>,loglik,logprior,accepted,epsilon`.
pub fn write_trace(path: &Path, trace: &McmcTrace) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["index".to_string()];
    header.extend(trace.names.iter().cloned());
    header.extend(["loglik", "logprior", "accepted", "epsilon"].map(String::from));
    w.write_record(&header)?;
    for (i, r) in trace.rows.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(trace.specs.iter().zip(&r.theta).map(|(s, y)| num(s.inverse(*y))));
        row.extend([num(r.loglik), num(r.logprior), (r.accepted as u8).to_string(), num(r.epsilon)]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A `trace.csv` read back: parameter names, natural-scale rows and the
/// per-row bookkeeping. `rows[i].theta` holds the natural values as written,
/// not the transformed ones a live [`McmcTrace`] keeps.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub rows: Vec<TraceRow>,
}

impl TraceTable {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }
}

pub fn read_trace(path: &Path) -> Result<TraceTable> {
    let mut r = reader(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let tail = ["loglik", "logprior", "accepted", "epsilon"];
    if headers.len() < 6 || headers[0] != "index" || headers[headers.len() - 4..] != tail {
        return Err(Error::Invalid(format!("{}: not a trace file", path.display())));
    }
    let d = headers.len() - 5;
    let names = headers[1..1 + d].to_vec();
    let mut values = Vec::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let nat: Vec<f64> = (1..=d).map(|c| parse_num(&rec[c], "parameter")).collect::<Result<_>>()?;
        rows.push(TraceRow {
            theta: nat.clone(),
            loglik: parse_num(&rec[d + 1], "loglik")?,
            logprior: parse_num(&rec[d + 2], "logprior")?,
            accepted: rec[d + 3].trim() == "1",
            epsilon: parse_num(&rec[d + 4], "epsilon")?,
        });
        values.push(nat);
    }
    Ok(TraceTable { names, values, rows })
}
