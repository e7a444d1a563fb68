//! Segment-aware evaluation: precursor-aware precision/recall (PTaPR), its
//! reward-free TaPR counterpart, point adjustment (PA%K) and point-wise
//! precision/recall.

mod pak;
mod ptapr;
mod report;
mod tapr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pak::{default_k_grid, pa_k_suite, point_adjust, pointwise_prf, PaKPoint, PaKSuite, Prf};
pub use ptapr::{
    ambiguous_score, ambiguous_weight, early_reward, overlap_score, ptap, ptapr_f1,
    ptapr_theta_sweep, ptar, AnomalyDiagnostic, Components, PredictionDiagnostic,
    PtaprEvaluation, ThetaCurve, ThetaPoint,
};
pub use report::{evaluate, EarlyDetection, MetricReport, MetricSelection, TaprSummary};
pub use tapr::{tapr, tapr_theta_sweep, TaprEvaluation, TaprScore};

/// Which precursor point determines the lead used by the early reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyPoint {
    /// First alert of the precursor (longest lead).
    #[default]
    Earliest,
    /// The precursor point whose lead earns the largest reward.
    MaxReward,
}

/// Weights and tolerances for every metric in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    /// Minimum overlap ratio for a segment to count as detected.
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Length of the ambiguous window after each anomaly.
    pub delta: usize,
    /// Lead time (in steps) that earns the full early reward.
    pub epsilon: usize,
    /// Sharpness of the early reward.
    pub k: f64,
    /// Detection-vs-portion weight of TaPR.
    pub tapr_alpha: f64,
    pub early_point: EarlyPoint,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            theta: 0.5,
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            gamma: 1.0 / 3.0,
            delta: 24,
            epsilon: 7,
            k: 0.001,
            tapr_alpha: 0.5,
            early_point: EarlyPoint::Earliest,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.alpha, self.beta, self.gamma];
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::invalid(format!(
                "alpha, beta, gamma must be non-negative, got {weights:?}"
            )));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "alpha + beta + gamma must equal 1, got {}",
                weights.iter().sum::<f64>()
            )));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid(format!("theta must be in [0, 1], got {}", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.tapr_alpha) {
            return Err(Error::invalid(format!(
                "tapr_alpha must be in [0, 1], got {}",
                self.tapr_alpha
            )));
        }
        if self.epsilon == 0 {
            return Err(Error::invalid("epsilon must be at least 1"));
        }
        if !self.k.is_finite() || self.k <= 0.0 {
            return Err(Error::invalid(format!("k must be positive, got {}", self.k)));
        }
        Ok(())
    }

    /// Weighted sum `alpha * d + beta * p + gamma * e`.
    pub fn combine(&self, c: &Components) -> f64 {
        self.alpha * c.detection + self.beta * c.portion + self.gamma * c.early
    }
}

/// `101` evenly spaced overlap thresholds `0, 0.01, ..., 1`.
pub fn default_theta_grid() -> Vec<f64> {
    even_grid(101)
}

/// `n >= 2` evenly spaced points covering `[0, 1]`.
pub fn even_grid(n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Trapezoidal area of `ys` over sorted `xs`.
pub fn trapezoid_auc(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Sorts, deduplicates and adds the endpoints 0 and 1.
pub(crate) fn unit_grid_with_endpoints(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("grid must not be empty"));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("grid value {v} outside [0, 1]")));
    }
    let mut grid: Vec<f64> = values.to_vec();
    grid.push(0.0);
    grid.push(1.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}
