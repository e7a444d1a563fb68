//! Lightweight statistical forecasters used as ensemble members.
//!
//! Every member forecasts each variable independently. One-step models
//! (autoregression, moving average, smoothing) are iterated to cover the
//! horizon; persistence and seasonal-naive repeat observed values.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForecasterSpec {
    Persistence,
    SeasonalNaive { period: usize },
    MovingAverage { width: usize },
    ArOls { order: usize },
    ExpSmoothing { alpha: f64 },
    HoltLinear { alpha: f64, beta: f64 },
}

fn smoothing_ok(v: f64) -> bool {
    v > 0.0 && v <= 1.0
}

impl ForecasterSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ForecasterSpec::Persistence => true,
            ForecasterSpec::SeasonalNaive { period } => period >= 1,
            ForecasterSpec::MovingAverage { width } => width >= 1,
            ForecasterSpec::ArOls { order } => order >= 1,
            ForecasterSpec::ExpSmoothing { alpha } => smoothing_ok(alpha),
            ForecasterSpec::HoltLinear { alpha, beta } => smoothing_ok(alpha) && smoothing_ok(beta),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid forecaster hyperparameters: {self}")))
        }
    }

    /// Rows of input context needed by `predict`.
    pub fn min_input(&self) -> usize {
        match *self {
            ForecasterSpec::SeasonalNaive { period } => period,
            ForecasterSpec::MovingAverage { width } => width,
            ForecasterSpec::ArOls { order } => order,
            ForecasterSpec::HoltLinear { .. } => 2,
            _ => 1,
        }
    }

    /// Rows of training data needed by `fit`.
    pub fn min_train(&self) -> usize {
        match *self {
            // order + 1 regression parameters need at least as many equations
            ForecasterSpec::ArOls { order } => 2 * order + 1,
            _ => self.min_input(),
        }
    }

    /// Stable member identifier, e.g. `ar_ols(5)`.
    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Twelve heterogeneous members used when no member list is given.
    pub fn default_members() -> Vec<ForecasterSpec> {
        use ForecasterSpec::*;
        vec![
            Persistence,
            SeasonalNaive { period: 50 },
            MovingAverage { width: 3 },
            MovingAverage { width: 10 },
            ArOls { order: 1 },
            ArOls { order: 3 },
            ArOls { order: 8 },
            ArOls { order: 16 },
            ExpSmoothing { alpha: 0.3 },
            ExpSmoothing { alpha: 0.7 },
            HoltLinear { alpha: 0.5, beta: 0.1 },
            HoltLinear { alpha: 0.8, beta: 0.3 },
        ]
    }
}

impl fmt::Display for ForecasterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ForecasterSpec::Persistence => write!(f, "persistence"),
            ForecasterSpec::SeasonalNaive { period } => write!(f, "seasonal_naive({period})"),
            ForecasterSpec::MovingAverage { width } => write!(f, "moving_average({width})"),
            ForecasterSpec::ArOls { order } => write!(f, "ar_ols({order})"),
            ForecasterSpec::ExpSmoothing { alpha } => write!(f, "exp_smoothing({alpha})"),
            ForecasterSpec::HoltLinear { alpha, beta } => write!(f, "holt_linear({alpha},{beta})"),
        }
    }
}

/// Parses the `Display` form, e.g. `ar_ols(5)` or `holt_linear(0.5,0.1)`.
impl FromStr for ForecasterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) if s.ends_with(')') => (&s[..open], &s[open + 1..s.len() - 1]),
            Some(_) => return Err(Error::invalid(format!("malformed forecaster '{s}'"))),
            None => (s, ""),
        };
        let args: Vec<&str> = args
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .collect();
        let bad = || Error::invalid(format!("malformed forecaster '{s}'"));
        let int = |i: usize| -> Result<usize> {
            args.get(i).ok_or_else(bad)?.parse().map_err(|_| bad())
        };
        let real = |i: usize| -> Result<f64> {
            args.get(i).ok_or_else(bad)?.parse().map_err(|_| bad())
        };
        let expect = |n: usize| if args.len() == n { Ok(()) } else { Err(bad()) };
        let spec = match name {
            "persistence" => {
                expect(0)?;
                ForecasterSpec::Persistence
            }
            "seasonal_naive" => {
                expect(1)?;
                ForecasterSpec::SeasonalNaive { period: int(0)? }
            }
            "moving_average" => {
                expect(1)?;
                ForecasterSpec::MovingAverage { width: int(0)? }
            }
            "ar_ols" => {
                expect(1)?;
                ForecasterSpec::ArOls { order: int(0)? }
            }
            "exp_smoothing" => {
                expect(1)?;
                ForecasterSpec::ExpSmoothing { alpha: real(0)? }
            }
            "holt_linear" => {
                expect(2)?;
                ForecasterSpec::HoltLinear {
                    alpha: real(0)?,
                    beta: real(1)?,
                }
            }
            _ => return Err(Error::invalid(format!("unknown forecaster '{name}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Learned autoregression for one variable: `x_t = intercept + sum coef[j] * x_{t-1-j}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArCoefficients {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

/// Variables whose least-squares system was singular and now use persistence.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FitReport {
    pub persistence_fallback: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Scaling {
    mean: f64,
    std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedForecaster {
    spec: ForecasterSpec,
    n_vars: usize,
    ar: Vec<Option<ArCoefficients>>,
    scaling: Option<Vec<Scaling>>,
    report: FitReport,
}

/// Fits `spec` on `train`, one variable at a time.
///
/// With `standardize`, each variable is z-scored with training statistics
/// before fitting and predictions are mapped back to the raw scale.
pub fn fit(spec: ForecasterSpec, train: &TimeSeries, standardize: bool) -> Result<FittedForecaster> {
    spec.validate()?;
    if train.len() < spec.min_train() {
        return Err(Error::InsufficientLength {
            required: spec.min_train(),
            actual: train.len(),
        });
    }
    let values = train.values();
    let scaling = standardize.then(|| {
        values
            .columns()
            .into_iter()
            .map(|col| {
                let n = col.len() as f64;
                let mean = col.sum() / n;
                let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                Scaling {
                    mean,
                    std: if std > 0.0 { std } else { 1.0 },
                }
            })
            .collect::<Vec<_>>()
    });

    let mut report = FitReport::default();
    let mut ar = vec![None; train.n_vars()];
    if let ForecasterSpec::ArOls { order } = spec {
        for (v, col) in values.columns().into_iter().enumerate() {
            let col: Vec<f64> = match &scaling {
                Some(sc) => col.iter().map(|x| (x - sc[v].mean) / sc[v].std).collect(),
                None => col.to_vec(),
            };
            match fit_ar(&col, order) {
                Some(c) => ar[v] = Some(c),
                None => {
                    log::warn!("{spec}: singular system for variable {v}, using persistence");
                    report.persistence_fallback.push(v);
                }
            }
        }
    }
    Ok(FittedForecaster {
        spec,
        n_vars: train.n_vars(),
        ar,
        scaling,
        report,
    })
}

/// Ordinary least squares through the normal equations.
fn fit_ar(x: &[f64], order: usize) -> Option<ArCoefficients> {
    let rows = x.len() - order;
    let p = order + 1;
    let design = DMatrix::from_fn(rows, p, |r, c| if c == 0 { 1.0 } else { x[order + r - c] });
    let y = DVector::from_iterator(rows, x[order..].iter().copied());
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * y;
    let max_diag = gram.diagonal().max();
    let chol = Cholesky::new(gram)?;
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if min_pivot.is_nan() || min_pivot <= 1e-10 * max_diag {
        return None;
    }
    let beta = chol.solve(&rhs);
    if beta.iter().any(|b| !b.is_finite()) {
        return None;
    }
    Some(ArCoefficients {
        intercept: beta[0],
        coef: beta.iter().skip(1).copied().collect(),
    })
}

impl FittedForecaster {
    pub fn spec(&self) -> ForecasterSpec {
        self.spec
    }

    pub fn id(&self) -> String {
        self.spec.id()
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    pub fn ar_coefficients(&self, var: usize) -> Option<&ArCoefficients> {
        self.ar.get(var).and_then(Option::as_ref)
    }

    /// Forecasts `horizon` rows following `input`.
    pub fn predict(&self, input: ArrayView2<'_, f64>, horizon: usize) -> Result<Array2<f64>> {
        if input.ncols() != self.n_vars {
            return Err(Error::invalid(format!(
                "input has {} variables, model was fitted on {}",
                input.ncols(),
                self.n_vars
            )));
        }
        if input.nrows() < self.spec.min_input() {
            return Err(Error::InsufficientLength {
                required: self.spec.min_input(),
                actual: input.nrows(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} received non-finite input", self.spec)));
        }
        let mut out = Array2::zeros((horizon, self.n_vars));
        let mut scratch = Vec::with_capacity(input.nrows() + horizon);
        for v in 0..self.n_vars {
            scratch.clear();
            let sc = self.scaling.as_ref().map(|s| s[v]);
            match sc {
                Some(sc) => scratch.extend(input.column(v).iter().map(|x| (x - sc.mean) / sc.std)),
                None => scratch.extend(input.column(v).iter()),
            }
            self.forecast_var(v, &mut scratch, horizon);
            let n = scratch.len() - horizon;
            for h in 0..horizon {
                let y = scratch[n + h];
                out[[h, v]] = match sc {
                    Some(sc) => y * sc.std + sc.mean,
                    None => y,
                };
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} produced a non-finite forecast", self.spec)));
        }
        Ok(out)
    }

    /// Appends `horizon` forecasts to `hist`.
    fn forecast_var(&self, var: usize, hist: &mut Vec<f64>, horizon: usize) {
        let n = hist.len();
        match self.spec {
            ForecasterSpec::Persistence => {
                let last = hist[n - 1];
                hist.extend(std::iter::repeat_n(last, horizon));
            }
            ForecasterSpec::SeasonalNaive { period } => {
                for h in 0..horizon {
                    hist.push(hist[n - period + h % period]);
                }
            }
            ForecasterSpec::MovingAverage { width } => {
                for _ in 0..horizon {
                    let len = hist.len();
                    let mean = hist[len - width..].iter().sum::<f64>() / width as f64;
                    hist.push(mean);
                }
            }
            ForecasterSpec::ArOls { order } => match &self.ar[var] {
                Some(ar) => {
                    for _ in 0..horizon {
                        let len = hist.len();
                        let next = ar.intercept
                            + ar
                                .coef
                                .iter()
                                .enumerate()
                                .map(|(j, c)| c * hist[len - 1 - j])
                                .sum::<f64>();
                        hist.push(next);
                    }
                    debug_assert_eq!(ar.coef.len(), order);
                }
                None => {
                    let last = hist[n - 1];
                    hist.extend(std::iter::repeat_n(last, horizon));
                }
            },
            ForecasterSpec::ExpSmoothing { alpha } => {
                let level = exp_smooth_level(ArrayView1::from(&hist[..]), alpha);
                hist.extend(std::iter::repeat_n(level, horizon));
            }
            ForecasterSpec::HoltLinear { alpha, beta } => {
                let mut level = hist[0];
                let mut trend = hist[1] - hist[0];
                for &x in &hist[1..] {
                    let prev = level;
                    level = alpha * x + (1.0 - alpha) * (level + trend);
                    trend = beta * (level - prev) + (1.0 - beta) * trend;
                }
                for h in 1..=horizon {
                    hist.push(level + h as f64 * trend);
                }
            }
        }
    }
}

fn exp_smooth_level(x: ArrayView1<'_, f64>, alpha: f64) -> f64 {
    x.iter()
        .skip(1)
        .fold(x[0], |level, &v| alpha * v + (1.0 - alpha) * level)
}
