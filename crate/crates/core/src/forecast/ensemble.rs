use std::collections::BTreeSet;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{fit, FittedForecaster, ForecasterSpec};
use super::window::WindowPair;
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Predictions of `M` members for one window, shaped `M x horizon x vars`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleForecast {
    pub window_id: usize,
    pub origin: usize,
    pub member_ids: Vec<String>,
    pub predictions: Array3<f64>,
}

impl EnsembleForecast {
    pub fn new(
        window_id: usize,
        origin: usize,
        member_ids: Vec<String>,
        predictions: Array3<f64>,
    ) -> Result<Self> {
        if member_ids.len() != predictions.len_of(Axis(0)) {
            return Err(Error::invalid(format!(
                "window {window_id}: {} member ids for {} prediction slices",
                member_ids.len(),
                predictions.len_of(Axis(0))
            )));
        }
        let unique: BTreeSet<&String> = member_ids.iter().collect();
        if unique.len() != member_ids.len() {
            return Err(Error::invalid(format!(
                "window {window_id}: duplicate member ids in {member_ids:?}"
            )));
        }
        if predictions.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("window {window_id} predictions")));
        }
        Ok(Self {
            window_id,
            origin,
            member_ids,
            predictions,
        })
    }

    pub fn n_members(&self) -> usize {
        self.predictions.len_of(Axis(0))
    }

    pub fn horizon(&self) -> usize {
        self.predictions.len_of(Axis(1))
    }

    pub fn n_vars(&self) -> usize {
        self.predictions.len_of(Axis(2))
    }

    pub fn member(&self, id: &str) -> Option<ArrayView2<'_, f64>> {
        let m = self.member_ids.iter().position(|x| x == id)?;
        Some(self.predictions.index_axis(Axis(0), m))
    }

    /// Sub-ensemble restricted to `ids`, in the order given.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let mut idx = Vec::with_capacity(ids.len());
        for id in ids {
            let m = self.member_ids.iter().position(|x| x == id).ok_or_else(|| {
                Error::invalid(format!("window {}: unknown member '{id}'", self.window_id))
            })?;
            idx.push(m);
        }
        Self::new(
            self.window_id,
            self.origin,
            ids.to_vec(),
            self.predictions.select(Axis(0), &idx),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastScore {
    pub member_id: String,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Mse,
    Mae,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Criterion::Mse),
            "mae" => Ok(Criterion::Mae),
            _ => Err(Error::invalid(format!("unknown criterion '{s}' (mse|mae)"))),
        }
    }
}

/// Per-member MSE and MAE over every (window, step, variable) cell.
///
/// `targets[w]` holds the observed rows for `forecasts[w]`. Members are
/// reported in the order of the first window's member list.
pub fn evaluate_members(
    forecasts: &[EnsembleForecast],
    targets: &[ArrayView2<'_, f64>],
) -> Result<Vec<ForecastScore>> {
    let first = forecasts
        .first()
        .ok_or_else(|| Error::invalid("no validation windows to score members on"))?;
    if forecasts.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} forecast windows but {} targets",
            forecasts.len(),
            targets.len()
        )));
    }
    let ids = first.member_ids.clone();
    let mut sq = vec![0.0; ids.len()];
    let mut abs = vec![0.0; ids.len()];
    let mut cells = 0usize;
    for (fc, target) in forecasts.iter().zip(targets) {
        if fc.member_ids != ids {
            return Err(Error::invalid(format!(
                "window {} has a different member set",
                fc.window_id
            )));
        }
        if target.dim() != (fc.horizon(), fc.n_vars()) {
            return Err(Error::invalid(format!(
                "window {}: target shape {:?} does not match forecast {:?}",
                fc.window_id,
                target.dim(),
                (fc.horizon(), fc.n_vars())
            )));
        }
        for (m, pred) in fc.predictions.outer_iter().enumerate() {
            for (p, t) in pred.iter().zip(target.iter()) {
                let e = p - t;
                sq[m] += e * e;
                abs[m] += e.abs();
            }
        }
        cells += target.len();
    }
    let n = cells as f64;
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(m, member_id)| ForecastScore {
            member_id,
            mse: sq[m] / n,
            mae: abs[m] / n,
        })
        .collect())
}

/// The `k` best members by `criterion`; ties go to the smaller id.
pub fn select_top_k(scores: &[ForecastScore], k: usize, criterion: Criterion) -> Result<Vec<String>> {
    if k < 2 || k > scores.len() {
        return Err(Error::invalid(format!(
            "top-k must be within 2..={}, got {k}",
            scores.len()
        )));
    }
    let unique: BTreeSet<&str> = scores.iter().map(|s| s.member_id.as_str()).collect();
    if unique.len() != scores.len() {
        return Err(Error::invalid("duplicate member ids in scoreboard"));
    }
    let key = |s: &ForecastScore| match criterion {
        Criterion::Mse => s.mse,
        Criterion::Mae => s.mae,
    };
    let mut ranked: Vec<&ForecastScore> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        key(a)
            .total_cmp(&key(b))
            .then_with(|| a.member_id.cmp(&b.member_id))
    });
    Ok(ranked.into_iter().take(k).map(|s| s.member_id.clone()).collect())
}

/// A set of fitted members that forecast windows together.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<FittedForecaster>,
}

impl Ensemble {
    pub fn fit(specs: &[ForecasterSpec], train: &TimeSeries, standardize: bool) -> Result<Self> {
        let ids: BTreeSet<String> = specs.iter().map(ForecasterSpec::id).collect();
        if ids.len() != specs.len() {
            return Err(Error::invalid("ensemble members must be distinct"));
        }
        let members = specs
            .par_iter()
            .map(|spec| fit(*spec, train, standardize))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }

    pub fn member_ids(&self) -> Vec<String> {
        self.members.iter().map(FittedForecaster::id).collect()
    }

    pub fn members(&self) -> &[FittedForecaster] {
        &self.members
    }

    pub fn retain(&mut self, ids: &[String]) -> Result<()> {
        let mut kept = Vec::with_capacity(ids.len());
        for id in ids {
            let m = self
                .members
                .iter()
                .find(|m| &m.id() == id)
                .ok_or_else(|| Error::invalid(format!("unknown member '{id}'")))?;
            kept.push(m.clone());
        }
        self.members = kept;
        Ok(())
    }

    /// Forecasts every window. Output order follows `windows`, independent
    /// of the worker count.
    pub fn forecast(&self, windows: &[WindowPair], horizon: usize) -> Result<Vec<EnsembleForecast>> {
        let ids = self.member_ids();
        windows
            .par_iter()
            .map(|w| {
                let preds = self
                    .members
                    .iter()
                    .map(|m| m.predict(w.input.view(), horizon))
                    .collect::<Result<Vec<Array2<f64>>>>()?;
                let n_vars = w.input.ncols();
                let mut stacked = Array3::zeros((preds.len(), horizon, n_vars));
                for (m, p) in preds.iter().enumerate() {
                    stacked.index_axis_mut(Axis(0), m).assign(p);
                }
                EnsembleForecast::new(w.window_id, w.origin, ids.clone(), stacked)
            })
            .collect()
    }
}
