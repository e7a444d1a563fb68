//! Deterministic synthetic benchmark: periodic + AR(1) variables with
//! injected anomalies, each preceded by a drifting, noisier precursor.
//!
//! Random numbers come from ChaCha8 seeded with `seed`. Draw order: train
//! innovations (row-major), test innovations (row-major), then one standard
//! normal per (row, variable) of each variance-burst anomaly in config order.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_json, write_labels_csv, write_series_csv, RunManifest};
use crate::segment::Segment;
use crate::series::{LabelSequence, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub offset: f64,
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub ar_coef: f64,
    pub noise_std: f64,
}

impl VariableSpec {
    /// Marginal standard deviation of the stationary signal.
    pub fn scale(&self) -> f64 {
        let ar_var = self.noise_std.powi(2) / (1.0 - self.ar_coef.powi(2));
        (self.amplitude.powi(2) / 2.0 + ar_var).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Triangular pulse peaking mid-segment.
    Spike,
    LevelShift,
    /// Additional white noise.
    VarianceBurst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub start: usize,
    pub length: usize,
    pub kind: AnomalyKind,
    /// In units of each variable's marginal standard deviation.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecursorSpec {
    /// Steps between the precursor start and the anomaly onset.
    pub lead: usize,
    pub length: usize,
    /// Final drift in units of marginal standard deviation (linear ramp).
    pub drift_magnitude: f64,
    /// Multiplier on the innovation standard deviation.
    pub noise_inflation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Test length.
    pub length: usize,
    pub train_length: usize,
    pub variables: Vec<VariableSpec>,
    pub anomalies: Vec<AnomalySpec>,
    pub precursor: PrecursorSpec,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let variables = vec![
            VariableSpec {
                offset: 0.0,
                amplitude: 2.0,
                period: 50.0,
                phase: 0.0,
                ar_coef: 0.5,
                noise_std: 0.3,
            },
            VariableSpec {
                offset: 10.0,
                amplitude: 1.0,
                period: 120.0,
                phase: 1.0,
                ar_coef: 0.8,
                noise_std: 0.5,
            },
            VariableSpec {
                offset: -5.0,
                amplitude: 5.0,
                period: 24.0,
                phase: 2.0,
                ar_coef: 0.3,
                noise_std: 1.0,
            },
        ];
        let kinds = [AnomalyKind::Spike, AnomalyKind::LevelShift, AnomalyKind::VarianceBurst];
        let starts = [600, 1400, 2200, 3000, 3800, 4500];
        let lengths = [10, 30, 20, 15, 25, 20];
        let anomalies = (0..6)
            .map(|i| AnomalySpec {
                start: starts[i],
                length: lengths[i],
                kind: kinds[i % 3],
                magnitude: 4.0,
            })
            .collect();
        Self {
            length: 5000,
            train_length: 3000,
            variables,
            anomalies,
            precursor: PrecursorSpec {
                lead: 20,
                length: 20,
                drift_magnitude: 2.0,
                noise_inflation: 2.0,
            },
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.train_length == 0 {
            return Err(Error::invalid("series lengths must be positive"));
        }
        if self.variables.is_empty() {
            return Err(Error::invalid("at least one variable is required"));
        }
        for (i, v) in self.variables.iter().enumerate() {
            let ok = v.period > 0.0
                && v.ar_coef.abs() < 1.0
                && v.noise_std >= 0.0
                && [v.offset, v.amplitude, v.phase].iter().all(|x| x.is_finite());
            if !ok {
                return Err(Error::invalid(format!(
                    "variable {i}: need period > 0, |ar_coef| < 1, noise_std >= 0"
                )));
            }
        }
        let p = &self.precursor;
        if p.length > p.lead {
            return Err(Error::invalid(format!(
                "precursor length {} exceeds its lead {}",
                p.length, p.lead
            )));
        }
        if p.noise_inflation.is_nan() || p.noise_inflation <= 0.0 || !p.drift_magnitude.is_finite() {
            return Err(Error::invalid("noise_inflation must be positive and drift finite"));
        }
        let mut prev_end: Option<usize> = None;
        for (i, a) in self.anomalies.iter().enumerate() {
            if a.length == 0 || a.start + a.length > self.length {
                return Err(Error::invalid(format!(
                    "anomaly {i} ({}..{}) must be non-empty and inside [0, {})",
                    a.start,
                    a.start + a.length,
                    self.length
                )));
            }
            if !a.magnitude.is_finite() {
                return Err(Error::invalid(format!("anomaly {i} has a non-finite magnitude")));
            }
            if p.length > 0 && a.start < p.lead {
                return Err(Error::invalid(format!(
                    "precursor of anomaly {i} would start before the series"
                )));
            }
            let region_start = if p.length > 0 { a.start - p.lead } else { a.start };
            if let Some(e) = prev_end {
                if region_start <= e {
                    return Err(Error::invalid(format!(
                        "anomaly {i} or its precursor overlaps the previous injection"
                    )));
                }
            }
            prev_end = Some(a.start + a.length - 1);
        }
        Ok(())
    }

    /// Precursor region of each anomaly, `[start - lead, start - lead + length - 1]`.
    pub fn precursor_segments(&self) -> Vec<Segment> {
        if self.precursor.length == 0 {
            return Vec::new();
        }
        self.anomalies
            .iter()
            .map(|a| {
                Segment::new(a.start - self.precursor.lead, self.precursor.length)
                    .expect("validated config")
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub train: TimeSeries,
    pub test: TimeSeries,
    pub labels: LabelSequence,
    pub precursors: Vec<Segment>,
}

fn base_series(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    len: usize,
    t0: usize,
    inflation: &dyn Fn(usize) -> f64,
) -> Array2<f64> {
    let c = cfg.variables.len();
    let mut out = Array2::zeros((len, c));
    let mut state = vec![0.0f64; c];
    for t in 0..len {
        for (v, spec) in cfg.variables.iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            state[v] = spec.ar_coef * state[v] + spec.noise_std * inflation(t) * z;
            let angle = 2.0 * PI * (t0 + t) as f64 / spec.period + spec.phase;
            out[[t, v]] = spec.offset + spec.amplitude * angle.sin() + state[v];
        }
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names: Vec<String> = (0..cfg.variables.len()).map(|v| format!("v{v}")).collect();
    let scales: Vec<f64> = cfg.variables.iter().map(VariableSpec::scale).collect();

    let train = base_series(cfg, &mut rng, cfg.train_length, 0, &|_| 1.0);

    let precursors = cfg.precursor_segments();
    let mut inflate = vec![1.0; cfg.length];
    for p in &precursors {
        inflate[p.start()..=p.end()].fill(cfg.precursor.noise_inflation);
    }
    let mut test = base_series(cfg, &mut rng, cfg.length, cfg.train_length, &|t| inflate[t]);

    for p in &precursors {
        let n = p.len() as f64;
        for (k, t) in p.indices().enumerate() {
            let ramp = cfg.precursor.drift_magnitude * (k + 1) as f64 / n;
            for (v, scale) in scales.iter().enumerate() {
                test[[t, v]] += ramp * scale;
            }
        }
    }

    let mut anomalies = Vec::with_capacity(cfg.anomalies.len());
    for a in &cfg.anomalies {
        let seg = Segment::new(a.start, a.length)?;
        let half = (a.length as f64 - 1.0) / 2.0;
        for (k, t) in seg.indices().enumerate() {
            for (v, scale) in scales.iter().enumerate() {
                let delta = match a.kind {
                    AnomalyKind::Spike => {
                        let shape = if half > 0.0 { 1.0 - (k as f64 - half).abs() / (half + 1.0) } else { 1.0 };
                        a.magnitude * scale * shape
                    }
                    AnomalyKind::LevelShift => a.magnitude * scale,
                    AnomalyKind::VarianceBurst => {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        a.magnitude * scale * z
                    }
                };
                test[[t, v]] += delta;
            }
        }
        anomalies.push(seg);
    }

    Ok(SynthData {
        train: TimeSeries::with_metadata(0, train, Some(names.clone()))?,
        test: TimeSeries::with_metadata(0, test, Some(names))?,
        labels: LabelSequence::from_segments(cfg.length, &anomalies)?,
        precursors,
    })
}

/// Writes `train.csv`, `test.csv`, `labels.csv`, `precursors.csv`,
/// `config.json` and `manifest.json` into `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, cfg: &SynthConfig, data: &SynthData) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = [
        dir.join("train.csv"),
        dir.join("test.csv"),
        dir.join("labels.csv"),
        dir.join("precursors.csv"),
        dir.join("config.json"),
    ];
    write_series_csv(&paths[0], &data.train, 0)?;
    write_series_csv(&paths[1], &data.test, 0)?;
    write_labels_csv(&paths[2], &data.labels, 0, 0)?;
    let mut text = String::from("start,length\n");
    for p in &data.precursors {
        text.push_str(&format!("{},{}\n", p.start(), p.len()));
    }
    std::fs::write(&paths[3], text).map_err(|e| Error::io(&paths[3], e))?;
    write_json(&paths[4], cfg)?;
    let mut manifest = RunManifest::new("synth", Some(cfg.seed), serde_json::to_value(cfg)?);
    for p in &paths {
        manifest.add_file(p)?;
    }
    write_json(dir.join("manifest.json"), &manifest)
}

/// Reads a `start,length` segment list.
pub fn read_segments_csv(path: impl AsRef<Path>) -> Result<Vec<Segment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match parts.as_slice() {
            [s, l] => s.parse().ok().zip(l.parse().ok()),
            _ => None,
        };
        let (s, l) = parsed.ok_or_else(|| Error::parse(path, i + 1, "expected start,length"))?;
        out.push(Segment::new(s, l).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}
