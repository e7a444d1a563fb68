//! CSV/NDJSON/JSON artifacts: series, labels, scores, detections, reports,
//! run manifests and chronological splitting.
//!
//! Floats are written with 9 significant digits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::metrics::{MetricReport, ThetaCurve};
use crate::series::{LabelSequence, ScoreSeries, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Ndjson,
}

impl FileFormat {
    /// `.csv` or `.ndjson`/`.jsonl`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(FileFormat::Csv),
            Some("ndjson") | Some("jsonl") => Ok(FileFormat::Ndjson),
            _ => Err(Error::invalid(format!(
                "cannot infer format of {} (expected .csv, .ndjson or .jsonl)",
                path.display()
            ))),
        }
    }
}

/// Shortest decimal form of `v` rounded to 9 significant digits.
pub fn format_float(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".to_string() } else { v.to_string() };
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if !(1e-5..1e16).contains(&a) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        }
    }
}

/// Reads records after the header, returning `(line, fields)`.
/// Header cells and `(line, cells)` data rows.
type Rows = (Vec<String>, Vec<(usize, Vec<String>)>);

fn read_rows(path: &Path, min_cols: usize) -> Result<Rows> {
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < min_cols || header.iter().all(String::is_empty) {
        return Err(Error::parse(
            path,
            1,
            format!("expected a header with at least {min_cols} columns"),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(rows.len() + 2, |p| p.line() as usize);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 1, "file has no data rows"));
    }
    Ok((header, rows))
}

fn parse_timestamps(path: &Path, rows: &[(usize, Vec<String>)]) -> Result<i64> {
    let mut first = 0i64;
    for (r, (line, fields)) in rows.iter().enumerate() {
        let ts: i64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, *line, format!("bad timestamp '{}'", fields[0])))?;
        if r == 0 {
            first = ts;
        } else if ts != first + r as i64 {
            let prev = first + r as i64 - 1;
            let what = if ts == prev {
                "duplicated timestamp"
            } else if ts < prev {
                "non-monotone timestamp"
            } else {
                "timestamp gap"
            };
            return Err(Error::parse(path, *line, format!("{what} {ts} (row {})", r + 1)));
        }
    }
    Ok(first)
}

fn check_width(path: &Path, line: usize, fields: &[String], width: usize) -> Result<()> {
    if fields.len() != width {
        return Err(Error::parse(
            path,
            line,
            format!("expected {width} fields, found {}", fields.len()),
        ));
    }
    Ok(())
}

/// Reads `timestamp,var...`. With `index_base = 1` the first file timestamp
/// `1` maps to internal index `0`.
pub fn read_series_csv(path: impl AsRef<Path>, index_base: i64) -> Result<TimeSeries> {
    let path = path.as_ref();
    let (header, rows) = read_rows(path, 2)?;
    let width = header.len();
    let mut values = Array2::zeros((rows.len(), width - 1));
    for (r, (line, fields)) in rows.iter().enumerate() {
        check_width(path, *line, fields, width)?;
        for (c, cell) in fields[1..].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(path, *line, format!("bad value '{cell}' in column {}", c + 2)))?;
            if !v.is_finite() {
                return Err(Error::parse(path, *line, format!("non-finite value in column {}", c + 2)));
            }
            values[[r, c]] = v;
        }
    }
    let first = parse_timestamps(path, &rows)?;
    TimeSeries::with_metadata(first - index_base, values, Some(header[1..].to_vec()))
}

pub fn write_series_csv(path: impl AsRef<Path>, series: &TimeSeries, index_base: i64) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let names: Vec<String> = match series.variable_names() {
        Some(n) => n.to_vec(),
        None => (0..series.n_vars()).map(|i| format!("x{i}")).collect(),
    };
    let io_err = |e| Error::io(path, e);
    writeln!(w, "timestamp,{}", names.join(",")).map_err(io_err)?;
    for (r, row) in series.values().rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        writeln!(w, "{},{}", series.timestamp(r) + index_base, cells.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads `timestamp,label`, returning the first internal timestamp too.
pub fn read_labels_csv(path: impl AsRef<Path>, index_base: i64) -> Result<(i64, LabelSequence)> {
    let path = path.as_ref();
    let (_, rows) = read_rows(path, 2)?;
    let mut flags = Vec::with_capacity(rows.len());
    for (line, fields) in &rows {
        check_width(path, *line, fields, 2)?;
        match fields[1].as_str() {
            "0" => flags.push(0),
            "1" => flags.push(1),
            other => return Err(Error::parse(path, *line, format!("label must be 0 or 1, got '{other}'"))),
        }
    }
    let first = parse_timestamps(path, &rows)?;
    Ok((first - index_base, LabelSequence::new(flags)?))
}

pub fn write_labels_csv(
    path: impl AsRef<Path>,
    labels: &LabelSequence,
    first_timestamp: i64,
    index_base: i64,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "timestamp,label").map_err(io_err)?;
    for (i, f) in labels.flags().iter().enumerate() {
        writeln!(w, "{},{}", first_timestamp + i as i64 + index_base, f).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// First `floor(train_frac * T)` rows and the remainder, in order.
pub fn chronological_split(series: &TimeSeries, train_frac: f64) -> Result<(TimeSeries, TimeSeries)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!("train fraction must be in (0, 1), got {train_frac}")));
    }
    let n = split_point(series.len(), train_frac);
    if n == 0 || n == series.len() {
        return Err(Error::invalid(format!(
            "split of {} rows at {train_frac} leaves an empty part",
            series.len()
        )));
    }
    Ok((series.slice_rows(0, n)?, series.slice_rows(n, series.len())?))
}

/// `floor(train_frac * len)`, robust to binary rounding of the product.
pub fn split_point(len: usize, train_frac: f64) -> usize {
    let x = train_frac * len as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

fn opt_cell<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn parse_opt<T: std::str::FromStr>(path: &Path, line: usize, cell: &str, what: &str) -> Result<Option<T>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse()
        .map(Some)
        .map_err(|_| Error::parse(path, line, format!("bad {what} '{cell}'")))
}

/// `timestamp,score,lead_time`; missing cells are empty.
pub fn write_scores(path: impl AsRef<Path>, scores: &ScoreSeries, first_timestamp: i64) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "timestamp,score,lead_time").map_err(io_err)?;
    for (i, (s, l)) in scores.scores().iter().zip(scores.lead_times()).enumerate() {
        writeln!(
            w,
            "{},{},{}",
            first_timestamp + i as i64,
            s.map(format_float).unwrap_or_default(),
            opt_cell(*l)
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<(i64, ScoreSeries)> {
    let path = path.as_ref();
    let (_, rows) = read_rows(path, 3)?;
    let mut scores = Vec::with_capacity(rows.len());
    let mut leads = Vec::with_capacity(rows.len());
    for (line, fields) in &rows {
        check_width(path, *line, fields, 3)?;
        let s: Option<f64> = parse_opt(path, *line, &fields[1], "score")?;
        if s.is_some_and(|v| !v.is_finite()) {
            return Err(Error::parse(path, *line, "non-finite score"));
        }
        scores.push(s);
        leads.push(parse_opt(path, *line, &fields[2], "lead time")?);
    }
    let first = parse_timestamps(path, &rows)?;
    Ok((first, ScoreSeries::new(scores, leads)?))
}

/// Sidecar describing how a detection threshold was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMeta {
    pub threshold: f64,
    pub metric: String,
    pub objective: f64,
    pub grid: GridInfo,
    pub all_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub kind: String,
    pub requested: usize,
    pub candidates: usize,
}

/// `<detection>.meta.json` next to the detection file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// `timestamp,flag,lead_time` plus an optional JSON sidecar.
pub fn write_detection(
    path: impl AsRef<Path>,
    detection: &Detection,
    first_timestamp: i64,
    meta: Option<&DetectionMeta>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "timestamp,flag,lead_time").map_err(io_err)?;
    for (i, (f, l)) in detection.flags().iter().zip(detection.lead_times()).enumerate() {
        writeln!(w, "{},{},{}", first_timestamp + i as i64, f, opt_cell(*l)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    if let Some(meta) = meta {
        write_json(sidecar_path(path), meta)?;
    }
    Ok(())
}

/// Reads a detection file. The threshold comes from the sidecar when
/// present and is NaN otherwise.
pub fn read_detection(path: impl AsRef<Path>) -> Result<(i64, Detection)> {
    let path = path.as_ref();
    let (_, rows) = read_rows(path, 2)?;
    let mut flags = Vec::with_capacity(rows.len());
    let mut leads = Vec::with_capacity(rows.len());
    for (line, fields) in &rows {
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::parse(path, *line, format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        match fields[1].as_str() {
            "0" => flags.push(0),
            "1" => flags.push(1),
            other => return Err(Error::parse(path, *line, format!("flag must be 0 or 1, got '{other}'"))),
        }
        let lead = match fields.get(2) {
            Some(cell) => parse_opt(path, *line, cell, "lead time")?,
            None => None,
        };
        if lead.is_some() && fields[1] == "0" {
            return Err(Error::parse(path, *line, "lead time on an unflagged row"));
        }
        leads.push(lead);
    }
    let first = parse_timestamps(path, &rows)?;
    let side = sidecar_path(path);
    let threshold = if side.exists() {
        read_json::<DetectionMeta>(&side)?.threshold
    } else {
        f64::NAN
    };
    Ok((first, Detection::new(flags, threshold, leads)?))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

/// JSON report plus `theta_curve.csv` alongside it.
pub fn write_report(path: impl AsRef<Path>, report: &MetricReport) -> Result<()> {
    let path = path.as_ref();
    write_json(path, report)?;
    write_theta_curve(path.with_file_name("theta_curve.csv"), &report.theta_curve)
}

/// `theta,ptar,ptap,f1`.
pub fn write_theta_curve(path: impl AsRef<Path>, curve: &ThetaCurve) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "theta,ptar,ptap,f1").map_err(io_err)?;
    for p in &curve.points {
        writeln!(
            w,
            "{},{},{},{}",
            format_float(p.theta),
            format_float(p.ptar),
            format_float(p.ptap),
            format_float(p.f1)
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Plot data: `timestamp,score,lead_time,label,flag`.
pub fn write_timeline(
    path: impl AsRef<Path>,
    first_timestamp: i64,
    scores: &ScoreSeries,
    labels: &LabelSequence,
    detection: Option<&Detection>,
) -> Result<()> {
    let path = path.as_ref();
    if scores.len() != labels.len() || detection.is_some_and(|d| d.len() != labels.len()) {
        return Err(Error::invalid("timeline inputs differ in length"));
    }
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "timestamp,score,lead_time,label,flag").map_err(io_err)?;
    for i in 0..labels.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            first_timestamp + i as i64,
            scores.scores()[i].map(format_float).unwrap_or_default(),
            opt_cell(scores.lead_times()[i]),
            labels.flags()[i],
            opt_cell(detection.map(|d| d.flags()[i]))
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Writes `x,<columns...>` rows.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io_err = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io_err)?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        writeln!(w, "{}", cells.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Reproducibility record for one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    /// File name to sha256 digest.
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            seed,
            config,
            files: BTreeMap::new(),
        }
    }

    pub fn add_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.files.insert(name, sha256_file(path)?);
        Ok(())
    }
}

/// Unweighted mean of headline numbers over per-entity reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroReport {
    pub n_entities: usize,
    pub entities: Vec<String>,
    pub ptar: f64,
    pub ptap: f64,
    pub ptapr_f1: f64,
    pub f1_0: f64,
    pub f1_1: f64,
    pub auc: f64,
    pub early_precision: f64,
    pub early_recall: f64,
    pub early_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tapr_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tapr_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pak_f1_pa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pak_auc: Option<f64>,
}

pub fn macro_average(reports: &[(String, MetricReport)]) -> Result<MacroReport> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to average"));
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
    let mean_opt = |f: &dyn Fn(&MetricReport) -> Option<f64>| {
        reports
            .iter()
            .map(|(_, r)| f(r))
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / n)
    };
    Ok(MacroReport {
        n_entities: reports.len(),
        entities: reports.iter().map(|(name, _)| name.clone()).collect(),
        ptar: mean(&|r| r.ptar),
        ptap: mean(&|r| r.ptap),
        ptapr_f1: mean(&|r| r.ptapr_f1),
        f1_0: mean(&|r| r.f1_0),
        f1_1: mean(&|r| r.f1_1),
        auc: mean(&|r| r.auc),
        early_precision: mean(&|r| r.early_detection.precision),
        early_recall: mean(&|r| r.early_detection.recall),
        early_f1: mean(&|r| r.early_detection.f1),
        tapr_f1: mean_opt(&|r| r.tapr.as_ref().map(|t| t.score.f1)),
        tapr_auc: mean_opt(&|r| r.tapr.as_ref().map(|t| t.auc)),
        pak_f1_pa: mean_opt(&|r| r.pak.as_ref().map(|p| p.f1_pa)),
        pak_auc: mean_opt(&|r| r.pak.as_ref().map(|p| p.auc)),
    })
}
