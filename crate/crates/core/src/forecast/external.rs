//! Forecast record files: one `(window, member, step, variable)` cell per
//! record, as CSV (header required) or NDJSON, chosen by file extension.
//!
//! Steps are 1-based horizon positions; variables are 0-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::ensemble::EnsembleForecast;
use crate::error::{Error, Result};
use crate::io::{format_float, FileFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub window_id: usize,
    pub origin: usize,
    pub member_id: String,
    pub step: usize,
    pub variable: usize,
    pub value: f64,
}

struct WindowAcc {
    origin: usize,
    first_line: usize,
    cells: BTreeMap<(String, usize, usize), f64>,
}

fn read_records(path: &Path) -> Result<Vec<(usize, ForecastRecord)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match FileFormat::from_path(path)? {
        FileFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
            let mut out = Vec::new();
            for (i, rec) in rdr.deserialize::<ForecastRecord>().enumerate() {
                // header is line 1
                let line = i + 2;
                let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
                out.push((line, rec));
            }
            Ok(out)
        }
        FileFormat::Ndjson => {
            let mut out = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line_no = i + 1;
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: ForecastRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
                out.push((line_no, rec));
            }
            Ok(out)
        }
    }
}

/// Reads a record file and groups it into per-window ensembles, sorted by
/// window id. Members within a window are ordered by id.
///
/// Every window must hold each `(member, step, variable)` cell exactly once,
/// with steps `1..=L` and variables `0..c` shared by all windows.
pub fn read_forecast_records(path: impl AsRef<Path>) -> Result<Vec<EnsembleForecast>> {
    let path = path.as_ref();
    let records = read_records(path)?;
    if records.is_empty() {
        return Err(Error::parse(path, 1, "no forecast records"));
    }
    let mut windows: BTreeMap<usize, WindowAcc> = BTreeMap::new();
    let mut horizon = 0;
    let mut n_vars = 0;
    for (line, rec) in records {
        if rec.step == 0 {
            return Err(Error::parse(path, line, "step is 1-based, got 0"));
        }
        if !rec.value.is_finite() {
            return Err(Error::parse(path, line, "non-finite forecast value"));
        }
        horizon = horizon.max(rec.step);
        n_vars = n_vars.max(rec.variable + 1);
        let acc = windows.entry(rec.window_id).or_insert_with(|| WindowAcc {
            origin: rec.origin,
            first_line: line,
            cells: BTreeMap::new(),
        });
        if acc.origin != rec.origin {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "window {} has origin {} but an earlier record said {}",
                    rec.window_id, rec.origin, acc.origin
                ),
            ));
        }
        let key = (rec.member_id, rec.step, rec.variable);
        if acc.cells.insert(key.clone(), rec.value).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "duplicate cell window={} member={} step={} variable={}",
                    rec.window_id, key.0, key.1, key.2
                ),
            ));
        }
    }

    let mut out = Vec::with_capacity(windows.len());
    for (window_id, acc) in windows {
        let members: Vec<String> = acc
            .cells
            .keys()
            .map(|(m, _, _)| m.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut preds = Array3::zeros((members.len(), horizon, n_vars));
        for (m, member) in members.iter().enumerate() {
            for step in 1..=horizon {
                for var in 0..n_vars {
                    let v = acc
                        .cells
                        .get(&(member.clone(), step, var))
                        .ok_or_else(|| {
                            Error::parse(
                                path,
                                acc.first_line,
                                format!(
                                    "window {window_id}: missing cell member={member} step={step} variable={var}"
                                ),
                            )
                        })?;
                    preds[[m, step - 1, var]] = *v;
                }
            }
        }
        out.push(EnsembleForecast::new(window_id, acc.origin, members, preds)?);
    }
    Ok(out)
}

pub fn write_forecast_records(path: impl AsRef<Path>, forecasts: &[EnsembleForecast]) -> Result<()> {
    let path = path.as_ref();
    let format = FileFormat::from_path(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    if format == FileFormat::Csv {
        writeln!(w, "window_id,origin,member_id,step,variable,value").map_err(io_err)?;
    }
    for fc in forecasts {
        for (m, id) in fc.member_ids.iter().enumerate() {
            for step in 0..fc.horizon() {
                for var in 0..fc.n_vars() {
                    let value = format_float(fc.predictions[[m, step, var]]);
                    match format {
                        FileFormat::Csv => writeln!(
                            w,
                            "{},{},{},{},{},{}",
                            fc.window_id,
                            fc.origin,
                            csv_field(id),
                            step + 1,
                            var,
                            value
                        ),
                        FileFormat::Ndjson => writeln!(
                            w,
                            "{{\"window_id\":{},\"origin\":{},\"member_id\":{},\"step\":{},\"variable\":{},\"value\":{}}}",
                            fc.window_id,
                            fc.origin,
                            serde_json::to_string(id)?,
                            step + 1,
                            var,
                            value
                        ),
                    }
                    .map_err(io_err)?;
                }
            }
        }
    }
    w.flush().map_err(io_err)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
