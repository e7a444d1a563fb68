//! Thresholding of score series and the prediction/precursor split used at
//! evaluation time.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{pointwise_prf, MetricParams, PtaprEvaluation, TaprEvaluation};
use crate::segment::{flags_from_segments, segments_from_flags, Segment, SegmentSet};
use crate::series::{LabelSequence, ScoreSeries};

pub const DEFAULT_GRID_N: usize = 256;

/// Binary alarms over the test timeline with the lead of each alarm.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    flags: Vec<u8>,
    threshold: f64,
    lead_times: Vec<Option<usize>>,
}

impl Detection {
    /// `threshold` may be NaN when unknown (e.g. detections read from a bare file).
    pub fn new(flags: Vec<u8>, threshold: f64, lead_times: Vec<Option<usize>>) -> Result<Self> {
        if flags.len() != lead_times.len() {
            return Err(Error::invalid(format!(
                "{} flags but {} lead times",
                flags.len(),
                lead_times.len()
            )));
        }
        if let Some(i) = flags.iter().position(|&f| f > 1) {
            return Err(Error::invalid(format!("flag at row {i} is not 0 or 1")));
        }
        if let Some(i) = (0..flags.len()).find(|&i| flags[i] == 0 && lead_times[i].is_some()) {
            return Err(Error::invalid(format!("unflagged row {i} carries a lead time")));
        }
        Ok(Self {
            flags,
            threshold,
            lead_times,
        })
    }

    pub fn flags(&self) -> &[u8] {
        &self.flags
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn lead_times(&self) -> &[Option<usize>] {
        &self.lead_times
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn n_flagged(&self) -> usize {
        self.flags.iter().filter(|&&f| f == 1).count()
    }
}

/// Flags every timestamp whose score is defined and at least `tau`.
pub fn apply_threshold(scores: &ScoreSeries, tau: f64) -> Result<Detection> {
    if !tau.is_finite() {
        return Err(Error::invalid(format!("threshold must be finite, got {tau}")));
    }
    let mut flags = vec![0u8; scores.len()];
    let mut leads = vec![None; scores.len()];
    for (i, s) in scores.scores().iter().enumerate() {
        if matches!(s, Some(v) if *v >= tau) {
            flags[i] = 1;
            leads[i] = scores.lead_times()[i];
        }
    }
    Detection::new(flags, tau, leads)
}

/// `n` quantiles of the defined scores at levels `j / (n - 1)` (nearest
/// rank), sorted and deduplicated. A single level uses the median.
pub fn default_grid(scores: &ScoreSeries, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    let mut values: Vec<f64> = scores.defined().collect();
    if values.is_empty() {
        return Err(Error::invalid("score series has no defined values"));
    }
    values.sort_by(f64::total_cmp);
    let last = values.len() - 1;
    let mut grid: Vec<f64> = (0..n)
        .map(|j| {
            let q = if n == 1 { 0.5 } else { j as f64 / (n - 1) as f64 };
            values[(q * last as f64).round() as usize]
        })
        .collect();
    grid.dedup();
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSearch {
    pub threshold: f64,
    pub f1: f64,
    /// Set when no candidate produced a defined score.
    pub all_undefined: bool,
    /// `(threshold, score)` for every candidate in grid order.
    pub evaluated: Vec<(f64, Option<f64>)>,
}

/// Grid threshold maximising `eval`; ties go to the larger threshold.
///
/// `eval` returns `None` when the score is undefined for a detection.
/// Candidates are scored in parallel; the reduction is order-independent.
pub fn best_f1_threshold<F>(
    scores: &ScoreSeries,
    labels: &LabelSequence,
    grid: &[f64],
    eval: F,
) -> Result<ThresholdSearch>
where
    F: Fn(&Detection, &LabelSequence) -> Result<Option<f64>> + Sync,
{
    if grid.is_empty() {
        return Err(Error::invalid("threshold grid must not be empty"));
    }
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let evaluated = grid
        .par_iter()
        .map(|&tau| Ok((tau, eval(&apply_threshold(scores, tau)?, labels)?)))
        .collect::<Result<Vec<_>>>()?;
    let best = evaluated
        .iter()
        .filter_map(|&(tau, f)| f.map(|f| (tau, f)))
        .fold(None::<(f64, f64)>, |acc, (tau, f)| match acc {
            Some((bt, bf)) if bf > f || (bf == f && bt >= tau) => Some((bt, bf)),
            _ => Some((tau, f)),
        });
    Ok(match best {
        Some((threshold, f1)) => ThresholdSearch {
            threshold,
            f1,
            all_undefined: false,
            evaluated,
        },
        None => {
            log::warn!("every threshold candidate produced an undefined score");
            ThresholdSearch {
                threshold: grid.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                f1: 0.0,
                all_undefined: true,
                evaluated,
            }
        }
    })
}

/// Splits each flagged run at the onset of the first anomaly it overlaps:
/// points before the onset form the precursor, the rest the prediction.
/// Runs starting inside an anomaly, or touching none, have no precursor.
pub fn split_precursor_prediction(
    flags: &[u8],
    anomalies: &[Segment],
    delta: usize,
) -> Result<SegmentSet> {
    let mut predictions = Vec::new();
    let mut precursors = Vec::new();
    for run in segments_from_flags(flags) {
        let inside = anomalies.iter().any(|a| a.contains(run.start()));
        let onset = anomalies
            .iter()
            .map(Segment::start)
            .find(|&t| t > run.start() && t <= run.end());
        match onset {
            Some(t) if !inside => {
                precursors.push(Some(Segment::from_bounds(run.start(), t - 1)?));
                predictions.push(Segment::from_bounds(t, run.end())?);
            }
            _ => {
                precursors.push(None);
                predictions.push(run);
            }
        }
    }
    SegmentSet::new(anomalies.to_vec(), predictions, precursors, delta, flags.len())
}

/// Objective used to pick the detection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectMetric {
    /// PTaPR F1 at a fixed θ (`None` uses the θ of the metric parameters).
    PtaprF1 { theta: Option<f64> },
    /// Area under PTaPR F1 over θ.
    PtaprAuc,
    TaprF1 { theta: Option<f64> },
    PointwiseF1,
}

impl Default for DetectMetric {
    fn default() -> Self {
        DetectMetric::PtaprF1 { theta: None }
    }
}

impl FromStr for DetectMetric {
    type Err = Error;

    /// `ptapr-f1`, `ptapr-f1@0.3`, `ptapr-auc`, `tapr-f1[@θ]`, `pointwise-f1`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, theta) = match s.split_once('@') {
            Some((n, t)) if t != "theta" => {
                let v: f64 = t
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad θ in metric '{s}'")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("θ in metric '{s}' outside [0, 1]")));
                }
                (n, Some(v))
            }
            Some((n, _)) => (n, None),
            None => (s, None),
        };
        match (name, theta) {
            ("ptapr-f1", t) => Ok(DetectMetric::PtaprF1 { theta: t }),
            ("tapr-f1", t) => Ok(DetectMetric::TaprF1 { theta: t }),
            ("ptapr-auc", None) => Ok(DetectMetric::PtaprAuc),
            ("pointwise-f1", None) => Ok(DetectMetric::PointwiseF1),
            _ => Err(Error::invalid(format!("unknown detection metric '{s}'"))),
        }
    }
}

impl std::fmt::Display for DetectMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DetectMetric::PtaprF1 { theta: Some(t) } => write!(f, "ptapr-f1@{t}"),
            DetectMetric::PtaprF1 { theta: None } => write!(f, "ptapr-f1"),
            DetectMetric::TaprF1 { theta: Some(t) } => write!(f, "tapr-f1@{t}"),
            DetectMetric::TaprF1 { theta: None } => write!(f, "tapr-f1"),
            DetectMetric::PtaprAuc => write!(f, "ptapr-auc"),
            DetectMetric::PointwiseF1 => write!(f, "pointwise-f1"),
        }
    }
}

impl DetectMetric {
    /// Scores a detection against ground truth; `None` when undefined
    /// (no anomalies in the labels).
    pub fn score(
        &self,
        detection: &Detection,
        labels: &LabelSequence,
        params: &MetricParams,
        thetas: &[f64],
    ) -> Result<Option<f64>> {
        let anomalies = labels.segments();
        if anomalies.is_empty() {
            return Ok(None);
        }
        if let DetectMetric::PointwiseF1 = self {
            return Ok(Some(pointwise_prf(detection.flags(), labels.flags())?.f1));
        }
        let set = split_precursor_prediction(detection.flags(), &anomalies, params.delta)?;
        let value = match *self {
            DetectMetric::PtaprF1 { theta } => {
                PtaprEvaluation::new(&set, params)?.f1(theta.unwrap_or(params.theta))?
            }
            DetectMetric::PtaprAuc => PtaprEvaluation::new(&set, params)?.sweep(thetas)?.auc,
            DetectMetric::TaprF1 { theta } => {
                TaprEvaluation::new(&set, params)?
                    .score(theta.unwrap_or(params.theta))?
                    .f1
            }
            DetectMetric::PointwiseF1 => unreachable!(),
        };
        Ok(Some(value))
    }
}

/// Labels covering exactly the flagged points of a segment set.
pub fn flagged_points(set: &SegmentSet) -> Vec<u8> {
    let mut segs = set.predictions().to_vec();
    segs.extend(set.precursors().iter().flatten().copied());
    flags_from_segments(&segs, set.series_len())
}
