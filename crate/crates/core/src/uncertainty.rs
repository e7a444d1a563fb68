//! Ensemble disagreement as a precursor score.
//!
//! The raw score of a cell is the sample variance (divisor `M - 1`) of the
//! members' predictions. Scores are standardized per (horizon step, variable)
//! with the mean and population standard deviation (divisor `N`) observed on
//! validation windows, so one threshold applies across the whole horizon.

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::EnsembleForecast;
use crate::series::ScoreSeries;

pub const DEFAULT_EPS_SIGMA: f64 = 1e-8;

/// Per-(step, variable) variance across members, two-pass.
pub fn ensemble_variance(forecast: &EnsembleForecast) -> Result<Array2<f64>> {
    let m = forecast.n_members();
    if m < 2 {
        return Err(Error::EnsembleTooSmall(m));
    }
    let mean = forecast
        .predictions
        .mean_axis(Axis(0))
        .expect("at least two members");
    let mut acc = Array2::<f64>::zeros(mean.raw_dim());
    for member in forecast.predictions.outer_iter() {
        acc.zip_mut_with(&(&member - &mean), |a, d| *a += d * d);
    }
    Ok(acc / (m - 1) as f64)
}

/// Raw (and optionally normalized) scores for `W` windows, shaped
/// `W x horizon x vars`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyTensor {
    origins: Vec<usize>,
    values: Array3<f64>,
    normalized: Option<Array3<f64>>,
}

impl UncertaintyTensor {
    pub fn new(origins: Vec<usize>, values: Array3<f64>) -> Result<Self> {
        if origins.len() != values.len_of(Axis(0)) {
            return Err(Error::invalid(format!(
                "{} origins for {} windows",
                origins.len(),
                values.len_of(Axis(0))
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("uncertainty values must be finite and non-negative"));
        }
        Ok(Self {
            origins,
            values,
            normalized: None,
        })
    }

    /// Variance tensor of a sequence of ensemble forecasts sharing one shape.
    pub fn from_forecasts(forecasts: &[EnsembleForecast]) -> Result<Self> {
        let first = forecasts
            .first()
            .ok_or_else(|| Error::invalid("no forecast windows"))?;
        let shape = (first.horizon(), first.n_vars());
        let per_window = forecasts
            .par_iter()
            .map(|fc| {
                if (fc.horizon(), fc.n_vars()) != shape {
                    return Err(Error::invalid(format!(
                        "window {} has shape {:?}, expected {shape:?}",
                        fc.window_id,
                        (fc.horizon(), fc.n_vars())
                    )));
                }
                ensemble_variance(fc)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut values = Array3::zeros((forecasts.len(), shape.0, shape.1));
        for (w, v) in per_window.iter().enumerate() {
            values.index_axis_mut(Axis(0), w).assign(v);
        }
        Self::new(forecasts.iter().map(|f| f.origin).collect(), values)
    }

    pub fn n_windows(&self) -> usize {
        self.values.len_of(Axis(0))
    }

    pub fn horizon(&self) -> usize {
        self.values.len_of(Axis(1))
    }

    pub fn n_vars(&self) -> usize {
        self.values.len_of(Axis(2))
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn normalized(&self) -> Option<&Array3<f64>> {
        self.normalized.as_ref()
    }

    /// `W x horizon` scores after variable aggregation. Uses the normalized
    /// tensor when `use_normalized` is set (error if absent).
    pub fn window_scores(&self, mode: VariableAggregation, use_normalized: bool) -> Result<Array2<f64>> {
        let source = if use_normalized {
            self.normalized
                .as_ref()
                .ok_or_else(|| Error::invalid("tensor has not been normalized"))?
        } else {
            &self.values
        };
        let mut out = Array2::zeros((self.n_windows(), self.horizon()));
        for (w, cell) in source.outer_iter().enumerate() {
            out.row_mut(w).assign(&aggregate_variables(cell, mode));
        }
        Ok(out)
    }
}

/// Horizon-wise location and scale of validation scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonStats {
    /// `mu[i][v]`
    pub mu: Vec<Vec<f64>>,
    /// Population standard deviation, `sigma[i][v]`.
    pub sigma: Vec<Vec<f64>>,
    pub n_windows: usize,
}

pub fn horizon_stats(tensor: &UncertaintyTensor) -> Result<HorizonStats> {
    let n = tensor.n_windows();
    if n < 2 {
        return Err(Error::invalid(format!(
            "horizon statistics need at least 2 windows, got {n}"
        )));
    }
    let mu = tensor.values.mean_axis(Axis(0)).expect("non-empty");
    let mut ss = Array2::<f64>::zeros(mu.raw_dim());
    for w in tensor.values.outer_iter() {
        ss.zip_mut_with(&(&w - &mu), |a, d| *a += d * d);
    }
    let sigma = ss.mapv(|s| (s / n as f64).sqrt());
    let to_rows = |a: &Array2<f64>| a.outer_iter().map(|r| r.to_vec()).collect();
    Ok(HorizonStats {
        mu: to_rows(&mu),
        sigma: to_rows(&sigma),
        n_windows: n,
    })
}

/// z-scores each cell with `stats`; `sigma` is floored at `eps_sigma`.
pub fn normalize(
    tensor: &UncertaintyTensor,
    stats: &HorizonStats,
    eps_sigma: f64,
) -> Result<UncertaintyTensor> {
    if eps_sigma.is_nan() || eps_sigma <= 0.0 {
        return Err(Error::invalid(format!("eps_sigma must be positive, got {eps_sigma}")));
    }
    let shape_ok = stats.mu.len() == tensor.horizon()
        && stats.sigma.len() == tensor.horizon()
        && stats
            .mu
            .iter()
            .chain(&stats.sigma)
            .all(|row| row.len() == tensor.n_vars());
    if !shape_ok {
        return Err(Error::invalid(format!(
            "horizon statistics do not match tensor shape ({} steps x {} vars)",
            tensor.horizon(),
            tensor.n_vars()
        )));
    }
    let mut z = tensor.values.clone();
    for mut w in z.outer_iter_mut() {
        for ((i, v), cell) in w.indexed_iter_mut() {
            *cell = (*cell - stats.mu[i][v]) / stats.sigma[i][v].max(eps_sigma);
        }
    }
    Ok(UncertaintyTensor {
        origins: tensor.origins.clone(),
        values: tensor.values.clone(),
        normalized: Some(z),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableAggregation {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for VariableAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            _ => Err(Error::invalid(format!("unknown aggregation '{s}' (mean|max)"))),
        }
    }
}

/// Collapses the variable axis of a `horizon x vars` matrix.
pub fn aggregate_variables(scores: ArrayView2<'_, f64>, mode: VariableAggregation) -> Array1<f64> {
    scores.map_axis(Axis(1), |row| match mode {
        VariableAggregation::Mean => row.sum() / row.len() as f64,
        VariableAggregation::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// How overlapping windows resolve a shared timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Collation {
    /// Highest score wins.
    #[default]
    Max,
    /// Smallest horizon step (most recent origin) wins.
    Latest,
    /// Largest horizon step (longest lead) wins.
    Earliest,
}

impl std::str::FromStr for Collation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "latest" => Ok(Self::Latest),
            "earliest" => Ok(Self::Earliest),
            _ => Err(Error::invalid(format!(
                "unknown collation '{s}' (max|latest|earliest)"
            ))),
        }
    }
}

/// Maps window scores onto the timeline: step `i` (1-based) of a window with
/// origin `o` scores timestamp `o + i`. Timestamps at or beyond `len` are
/// dropped; timestamps without candidates stay missing.
pub fn collate_timeline(
    per_window: ArrayView2<'_, f64>,
    origins: &[usize],
    len: usize,
    mode: Collation,
) -> Result<ScoreSeries> {
    if per_window.nrows() != origins.len() {
        return Err(Error::invalid(format!(
            "{} score rows for {} origins",
            per_window.nrows(),
            origins.len()
        )));
    }
    let mut best: Vec<Option<(f64, usize)>> = vec![None; len];
    for (row, &origin) in per_window.outer_iter().zip(origins) {
        for (i0, &score) in row.iter().enumerate() {
            let lead = i0 + 1;
            let tau = origin + lead;
            if tau >= len {
                break;
            }
            let replace = match best[tau] {
                None => true,
                Some((s, l)) => match mode {
                    Collation::Max => score > s || (score == s && lead < l),
                    Collation::Latest => lead < l,
                    Collation::Earliest => lead > l,
                },
            };
            if replace {
                best[tau] = Some((score, lead));
            }
        }
    }
    ScoreSeries::new(
        best.iter().map(|b| b.map(|(s, _)| s)).collect(),
        best.iter().map(|b| b.map(|(_, l)| l)).collect(),
    )
}
