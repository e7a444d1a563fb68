//! End-to-end stages shared by the command-line tool and tests:
//! fit members, select the top-K on a validation tail, score test windows,
//! pick a threshold and evaluate.

use serde::{Deserialize, Serialize};

use crate::detect::{apply_threshold, best_f1_threshold, default_grid, Detection, DetectMetric, ThresholdSearch};
use crate::error::{Error, Result};
use crate::forecast::{
    evaluate_members, make_windows, select_top_k, Criterion, Ensemble, EnsembleForecast, ForecastScore,
    ForecasterSpec, WindowConfig,
};
use crate::io::chronological_split;
use crate::metrics::{even_grid, MetricParams};
use crate::series::{LabelSequence, ScoreSeries, TimeSeries};
use crate::uncertainty::{
    collate_timeline, horizon_stats, normalize, Collation, HorizonStats, UncertaintyTensor, VariableAggregation,
    DEFAULT_EPS_SIGMA,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub window: WindowConfig,
    pub members: Vec<ForecasterSpec>,
    pub top_k: usize,
    pub criterion: Criterion,
    /// Share of the training series used for fitting; the rest validates.
    pub train_frac: f64,
    pub standardize: bool,
    pub normalize: bool,
    pub eps_sigma: f64,
    pub aggregation: VariableAggregation,
    pub collation: Collation,
    pub grid_n: usize,
    pub detect_metric: DetectMetric,
    pub theta_points: usize,
    /// `None` uses the horizon length.
    pub delta: Option<usize>,
    pub metrics: MetricParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            members: ForecasterSpec::default_members(),
            top_k: 5,
            criterion: Criterion::Mse,
            train_frac: 0.7,
            standardize: false,
            normalize: true,
            eps_sigma: DEFAULT_EPS_SIGMA,
            aggregation: VariableAggregation::Mean,
            collation: Collation::Max,
            grid_n: crate::detect::DEFAULT_GRID_N,
            detect_metric: DetectMetric::default(),
            theta_points: 101,
            delta: None,
            metrics: MetricParams::default(),
        }
    }
}

impl PipelineConfig {
    /// Metric parameters with δ resolved.
    pub fn metric_params(&self) -> MetricParams {
        MetricParams {
            delta: self.delta.unwrap_or(self.window.horizon_len),
            ..self.metrics
        }
    }

    pub fn theta_grid(&self) -> Vec<f64> {
        even_grid(self.theta_points)
    }
}

/// Members fitted on the head of the training series, ranked on its tail.
#[derive(Debug, Clone)]
pub struct FittedEnsemble {
    pub ensemble: Ensemble,
    pub scores: Vec<ForecastScore>,
    pub selected: Vec<String>,
    /// Validation forecasts of the selected members.
    pub validation: Vec<EnsembleForecast>,
}

/// Splits `train` chronologically at `cfg.train_frac`, then fits and ranks.
pub fn fit_and_select(train: &TimeSeries, cfg: &PipelineConfig) -> Result<FittedEnsemble> {
    let (fit_part, valid_part) = chronological_split(train, cfg.train_frac)?;
    fit_and_select_on(&fit_part, &valid_part, cfg)
}

/// Fits every member on `fit_part` and keeps the top-K on `valid_part`.
pub fn fit_and_select_on(fit_part: &TimeSeries, valid_part: &TimeSeries, cfg: &PipelineConfig) -> Result<FittedEnsemble> {
    cfg.window.validate()?;
    if fit_part.n_vars() != valid_part.n_vars() {
        return Err(Error::invalid(format!(
            "training has {} variables, validation {}",
            fit_part.n_vars(),
            valid_part.n_vars()
        )));
    }
    let mut ensemble = Ensemble::fit(&cfg.members, fit_part, cfg.standardize)?;
    let windows = make_windows(valid_part, &cfg.window, true)?;
    let forecasts = ensemble.forecast(&windows, cfg.window.horizon_len)?;
    let targets: Vec<_> = windows
        .iter()
        .map(|w| w.target.as_ref().expect("windows built with targets").view())
        .collect();
    let scores = evaluate_members(&forecasts, &targets)?;
    let selected = select_top_k(&scores, cfg.top_k, cfg.criterion)?;
    ensemble.retain(&selected)?;
    let validation = forecasts
        .iter()
        .map(|f| f.select(&selected))
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedEnsemble {
        ensemble,
        scores,
        selected,
        validation,
    })
}

/// Forecasts every inference window of `test` (no targets needed).
pub fn forecast_test(ensemble: &Ensemble, test: &TimeSeries, window: &WindowConfig) -> Result<Vec<EnsembleForecast>> {
    let windows = make_windows(test, window, false)?;
    ensemble.forecast(&windows, window.horizon_len)
}

#[derive(Debug, Clone)]
pub struct Scoring {
    pub stats: HorizonStats,
    pub tensor: UncertaintyTensor,
    pub scores: ScoreSeries,
}

/// Variance, normalization with validation statistics, aggregation and
/// collation onto a timeline of `len` steps.
pub fn score_forecasts(
    validation: &[EnsembleForecast],
    test: &[EnsembleForecast],
    len: usize,
    cfg: &PipelineConfig,
) -> Result<Scoring> {
    let stats = horizon_stats(&UncertaintyTensor::from_forecasts(validation)?)?;
    score_with_stats(stats, test, len, cfg)
}

/// Like [`score_forecasts`] with precomputed validation statistics.
pub fn score_with_stats(
    stats: HorizonStats,
    test: &[EnsembleForecast],
    len: usize,
    cfg: &PipelineConfig,
) -> Result<Scoring> {
    let raw = UncertaintyTensor::from_forecasts(test)?;
    let tensor = if cfg.normalize {
        normalize(&raw, &stats, cfg.eps_sigma)?
    } else {
        raw
    };
    let per_window = tensor.window_scores(cfg.aggregation, cfg.normalize)?;
    let scores = collate_timeline(per_window.view(), tensor.origins(), len, cfg.collation)?;
    Ok(Scoring { stats, tensor, scores })
}

/// Threshold search over the quantile grid with the configured objective.
pub fn detect(scores: &ScoreSeries, labels: &LabelSequence, cfg: &PipelineConfig) -> Result<(Detection, ThresholdSearch)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let grid = default_grid(scores, cfg.grid_n)?;
    let params = cfg.metric_params();
    let thetas = cfg.theta_grid();
    let search = best_f1_threshold(scores, labels, &grid, |d, l| {
        cfg.detect_metric.score(d, l, &params, &thetas)
    })?;
    Ok((apply_threshold(scores, search.threshold)?, search))
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub fitted: FittedEnsemble,
    pub test_forecasts: Vec<EnsembleForecast>,
    pub scoring: Scoring,
    pub detection: Detection,
    pub search: ThresholdSearch,
}

pub fn run(train: &TimeSeries, test: &TimeSeries, labels: &LabelSequence, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let fitted = fit_and_select(train, cfg)?;
    let test_forecasts = forecast_test(&fitted.ensemble, test, &cfg.window)?;
    let scoring = score_forecasts(&fitted.validation, &test_forecasts, test.len(), cfg)?;
    let (detection, search) = detect(&scoring.scores, labels, cfg)?;
    Ok(PipelineRun {
        fitted,
        test_forecasts,
        scoring,
        detection,
        search,
    })
}
