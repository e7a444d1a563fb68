//! Time-series aware precision/recall without the early reward.
//!
//! Every flagged run (prediction plus its precursor) is one prediction; the
//! overlap drops the precursor term: `O'(a, r) = |a ∩ r| + S(a', r)`.

use serde::Serialize;

use super::ptapr::{ambiguous_score, ptapr_f1, ThetaCurve, ThetaPoint};
use super::{unit_grid_with_endpoints, MetricParams};
use crate::error::{Error, Result};
use crate::segment::SegmentSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaprScore {
    pub tar: f64,
    pub tap: f64,
    pub f1: f64,
    pub tar_detection: f64,
    pub tar_portion: f64,
    pub tap_detection: f64,
    pub tap_portion: f64,
}

/// θ-independent ratios of the reward-free metric.
#[derive(Debug, Clone, PartialEq)]
pub struct TaprEvaluation {
    weight: f64,
    recall_ratios: Vec<f64>,
    precision_ratios: Vec<f64>,
}

impl TaprEvaluation {
    pub fn new(set: &SegmentSet, params: &MetricParams) -> Result<Self> {
        params.validate()?;
        let runs = set.flagged_runs();
        let anomalies = set.anomalies();
        let ambiguous = set.ambiguous();
        let mut a_sum = vec![0.0; anomalies.len()];
        let mut r_sum = vec![0.0; runs.len()];
        for (ai, a) in anomalies.iter().enumerate() {
            for (rj, r) in runs.iter().enumerate() {
                let o = a.overlap_len(r) as f64
                    + ambiguous_score(ambiguous[ai].as_ref(), r, set.delta());
                a_sum[ai] += o;
                r_sum[rj] += o;
            }
        }
        Ok(Self {
            weight: params.tapr_alpha,
            recall_ratios: a_sum
                .iter()
                .zip(anomalies)
                .map(|(o, a)| o / a.len() as f64)
                .collect(),
            precision_ratios: r_sum
                .iter()
                .zip(&runs)
                .map(|(o, r)| o / r.len() as f64)
                .collect(),
        })
    }

    pub fn score(&self, theta: f64) -> Result<TaprScore> {
        if self.recall_ratios.is_empty() {
            return Err(Error::NoGroundTruth);
        }
        let (tar_d, tar_p) = detection_and_portion(&self.recall_ratios, theta);
        let (tap_d, tap_p) = detection_and_portion(&self.precision_ratios, theta);
        let tar = self.weight * tar_d + (1.0 - self.weight) * tar_p;
        let tap = self.weight * tap_d + (1.0 - self.weight) * tap_p;
        Ok(TaprScore {
            tar,
            tap,
            f1: ptapr_f1(tar, tap),
            tar_detection: tar_d,
            tar_portion: tar_p,
            tap_detection: tap_d,
            tap_portion: tap_p,
        })
    }

    pub fn sweep(&self, thetas: &[f64]) -> Result<ThetaCurve> {
        let grid = unit_grid_with_endpoints(thetas)?;
        let points = grid
            .iter()
            .map(|&theta| {
                let s = self.score(theta)?;
                Ok(ThetaPoint {
                    theta,
                    ptar: s.tar,
                    ptap: s.tap,
                    f1: s.f1,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ThetaCurve::from_points(points))
    }
}

fn detection_and_portion(ratios: &[f64], theta: f64) -> (f64, f64) {
    if ratios.is_empty() {
        return (0.0, 0.0);
    }
    let n = ratios.len() as f64;
    let detected = ratios.iter().filter(|&&r| r > 0.0 && r >= theta).count() as f64;
    let portion: f64 = ratios.iter().map(|r| r.min(1.0)).sum();
    (detected / n, portion / n)
}

pub fn tapr(set: &SegmentSet, params: &MetricParams) -> Result<TaprScore> {
    TaprEvaluation::new(set, params)?.score(params.theta)
}

pub fn tapr_theta_sweep(set: &SegmentSet, params: &MetricParams, thetas: &[f64]) -> Result<ThetaCurve> {
    TaprEvaluation::new(set, params)?.sweep(thetas)
}
