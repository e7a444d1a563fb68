//! Precursor-aware time-series precision and recall.
//!
//! Overlap between an anomaly `a` and a prediction `p` (with precursor `p'`):
//!
//! ```text
//! O(a, p, p') = |a ∩ p'| + |a ∩ p| + S(a', p)
//! S(a', p)    = Σ_{i ∈ a' ∩ p} 1 / (1 + exp(-6 + 12 (i - start(a')) / (δ - 1)))
//! E(a, p')    = exp(-k (t_a - i - ε)^2),  i ∈ p', i < t_a
//! ```
//!
//! Recall and precision are `α·d + β·p + γ·e` over anomalies and predictions
//! respectively. A segment counts as detected when its overlap ratio is
//! positive and at least θ.

use serde::{Deserialize, Serialize};

use super::{unit_grid_with_endpoints, trapezoid_auc, EarlyPoint, MetricParams};
use crate::error::{Error, Result};
use crate::segment::{Segment, SegmentSet};

/// Sigmoid weight of the ambiguous instance `offset` steps after the anomaly.
///
/// With `delta <= 1` the lone position gets the first-position weight.
pub fn ambiguous_weight(offset: usize, delta: usize) -> f64 {
    let x = if delta <= 1 {
        -6.0
    } else {
        -6.0 + 12.0 * offset as f64 / (delta - 1) as f64
    };
    1.0 / (1.0 + x.exp())
}

/// Credit for predicted points that fall in the ambiguous window `a_prime`.
pub fn ambiguous_score(a_prime: Option<&Segment>, p: &Segment, delta: usize) -> f64 {
    let Some(ap) = a_prime else {
        return 0.0;
    };
    match ap.intersection(p) {
        Some(ix) => ix
            .indices()
            .map(|i| ambiguous_weight(i - ap.start(), delta))
            .sum(),
        None => 0.0,
    }
}

pub fn overlap_score(
    a: &Segment,
    p: &Segment,
    p_prime: Option<&Segment>,
    a_prime: Option<&Segment>,
    delta: usize,
) -> f64 {
    let early = p_prime.map_or(0, |pp| a.overlap_len(pp));
    (early + a.overlap_len(p)) as f64 + ambiguous_score(a_prime, p, delta)
}

/// Reward for warning ahead of the onset of `a`. Zero without a precursor
/// point strictly before the onset.
pub fn early_reward(
    a: &Segment,
    p_prime: Option<&Segment>,
    epsilon: usize,
    k: f64,
    point: EarlyPoint,
) -> f64 {
    let Some(pp) = p_prime else {
        return 0.0;
    };
    let onset = a.start();
    if pp.start() >= onset {
        return 0.0;
    }
    let reward = |i: usize| {
        let gap = (onset - i) as f64 - epsilon as f64;
        (-k * gap * gap).exp()
    };
    match point {
        EarlyPoint::Earliest => reward(pp.start()),
        EarlyPoint::MaxReward => (pp.start()..onset.min(pp.end() + 1))
            .map(reward)
            .fold(0.0, f64::max),
    }
}

/// Detection, portion and early sub-scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Components {
    pub detection: f64,
    pub portion: f64,
    pub early: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyDiagnostic {
    pub segment: Segment,
    pub ambiguous: Option<Segment>,
    /// Sum of overlap scores over all predictions.
    pub overlap: f64,
    pub ratio: f64,
    pub early_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionDiagnostic {
    pub segment: Segment,
    pub precursor: Option<Segment>,
    /// Sum of overlap scores over all anomalies.
    pub overlap: f64,
    pub ratio: f64,
    pub early_reward: f64,
}

/// Threshold-independent part of the metric; evaluate any θ cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct PtaprEvaluation {
    params: MetricParams,
    anomalies: Vec<AnomalyDiagnostic>,
    predictions: Vec<PredictionDiagnostic>,
}

impl PtaprEvaluation {
    pub fn new(set: &SegmentSet, params: &MetricParams) -> Result<Self> {
        params.validate()?;
        let a_set = set.anomalies();
        let p_set = set.predictions();
        let pre = set.precursors();
        let amb = set.ambiguous();
        let delta = set.delta();

        let mut a_overlap = vec![0.0; a_set.len()];
        let mut a_reward = vec![0.0f64; a_set.len()];
        let mut p_overlap = vec![0.0; p_set.len()];
        let mut p_reward = vec![0.0f64; p_set.len()];
        for (ai, a) in a_set.iter().enumerate() {
            for (pj, p) in p_set.iter().enumerate() {
                let pp = pre[pj].as_ref();
                let o = overlap_score(a, p, pp, amb[ai].as_ref(), delta);
                a_overlap[ai] += o;
                p_overlap[pj] += o;
                let linked = a.overlap_len(p) + pp.map_or(0, |pp| a.overlap_len(pp)) > 0;
                if linked {
                    let e = early_reward(a, pp, params.epsilon, params.k, params.early_point);
                    a_reward[ai] = a_reward[ai].max(e);
                    p_reward[pj] = p_reward[pj].max(e);
                }
            }
        }
        let anomalies = a_set
            .iter()
            .enumerate()
            .map(|(i, a)| AnomalyDiagnostic {
                segment: *a,
                ambiguous: amb[i],
                overlap: a_overlap[i],
                ratio: a_overlap[i] / a.len() as f64,
                early_reward: a_reward[i],
            })
            .collect();
        let predictions = p_set
            .iter()
            .enumerate()
            .map(|(j, p)| PredictionDiagnostic {
                segment: *p,
                precursor: pre[j],
                overlap: p_overlap[j],
                ratio: p_overlap[j] / p.len() as f64,
                early_reward: p_reward[j],
            })
            .collect();
        Ok(Self {
            params: *params,
            anomalies,
            predictions,
        })
    }

    pub fn params(&self) -> &MetricParams {
        &self.params
    }

    pub fn anomalies(&self) -> &[AnomalyDiagnostic] {
        &self.anomalies
    }

    pub fn predictions(&self) -> &[PredictionDiagnostic] {
        &self.predictions
    }

    pub fn has_predictions(&self) -> bool {
        !self.predictions.is_empty()
    }

    /// Recall and its components at overlap threshold `theta`.
    pub fn recall(&self, theta: f64) -> Result<(f64, Components)> {
        if self.anomalies.is_empty() {
            return Err(Error::NoGroundTruth);
        }
        let c = components(
            self.anomalies.iter().map(|a| (a.ratio, a.early_reward)),
            theta,
        );
        Ok((self.params.combine(&c), c))
    }

    /// Precision and its components; zero when there are no predictions.
    pub fn precision(&self, theta: f64) -> (f64, Components) {
        if self.predictions.is_empty() {
            return (0.0, Components::default());
        }
        let c = components(
            self.predictions.iter().map(|p| (p.ratio, p.early_reward)),
            theta,
        );
        (self.params.combine(&c), c)
    }

    pub fn f1(&self, theta: f64) -> Result<f64> {
        let (r, _) = self.recall(theta)?;
        let (p, _) = self.precision(theta);
        Ok(ptapr_f1(r, p))
    }

    pub fn sweep(&self, thetas: &[f64]) -> Result<ThetaCurve> {
        let grid = unit_grid_with_endpoints(thetas)?;
        let mut points = Vec::with_capacity(grid.len());
        for &theta in &grid {
            let (r, _) = self.recall(theta)?;
            let (p, _) = self.precision(theta);
            points.push(ThetaPoint {
                theta,
                ptar: r,
                ptap: p,
                f1: ptapr_f1(r, p),
            });
        }
        Ok(ThetaCurve::from_points(points))
    }
}

fn components(items: impl ExactSizeIterator<Item = (f64, f64)>, theta: f64) -> Components {
    let n = items.len() as f64;
    let mut c = Components::default();
    for (ratio, reward) in items {
        if ratio > 0.0 && ratio >= theta {
            c.detection += 1.0;
        }
        c.portion += ratio.min(1.0);
        c.early += reward;
    }
    c.detection /= n;
    c.portion /= n;
    c.early /= n;
    c
}

/// Recall at `params.theta`. Errors when the set has no anomalies.
pub fn ptar(set: &SegmentSet, params: &MetricParams) -> Result<(f64, Components)> {
    PtaprEvaluation::new(set, params)?.recall(params.theta)
}

/// Precision at `params.theta`; zero when the set has no predictions.
pub fn ptap(set: &SegmentSet, params: &MetricParams) -> Result<(f64, Components)> {
    Ok(PtaprEvaluation::new(set, params)?.precision(params.theta))
}

/// Harmonic mean; zero when both inputs are zero.
pub fn ptapr_f1(recall: f64, precision: f64) -> f64 {
    if recall + precision <= 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub theta: f64,
    pub ptar: f64,
    pub ptap: f64,
    pub f1: f64,
}

/// F1 as a function of θ with its trapezoidal area and endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaCurve {
    pub points: Vec<ThetaPoint>,
    pub f1_0: f64,
    pub f1_1: f64,
    pub auc: f64,
}

impl ThetaCurve {
    /// `points` must be sorted by θ and span `[0, 1]`.
    pub(crate) fn from_points(points: Vec<ThetaPoint>) -> Self {
        let xs: Vec<f64> = points.iter().map(|p| p.theta).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.f1).collect();
        Self {
            f1_0: ys[0],
            f1_1: ys[ys.len() - 1],
            auc: trapezoid_auc(&xs, &ys),
            points,
        }
    }
}

pub fn ptapr_theta_sweep(set: &SegmentSet, params: &MetricParams, thetas: &[f64]) -> Result<ThetaCurve> {
    PtaprEvaluation::new(set, params)?.sweep(thetas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(start: usize, len: usize) -> Segment {
        Segment::new(start, len).unwrap()
    }

    fn equal_weights() -> MetricParams {
        MetricParams::default()
    }

    #[test]
    fn sigmoid_endpoints_and_midpoint() {
        let first = ambiguous_weight(0, 13);
        let last = ambiguous_weight(12, 13);
        assert!((first - 1.0 / (1.0 + (-6.0f64).exp())).abs() < 1e-12);
        assert!((last - 1.0 / (1.0 + 6.0f64.exp())).abs() < 1e-12);
        assert!((first - 0.9975).abs() < 1e-4);
        assert!((last - 0.0025).abs() < 1e-4);
        for delta in [3usize, 5, 7, 25] {
            assert_eq!(ambiguous_weight((delta - 1) / 2, delta), 0.5);
        }
    }

    #[test]
    fn degenerate_delta_uses_first_weight() {
        let w = 1.0 / (1.0 + (-6.0f64).exp());
        assert_eq!(ambiguous_weight(0, 1), w);
        assert_eq!(ambiguous_weight(0, 0), w);
        let a_prime = seg(5, 1);
        assert_eq!(ambiguous_score(Some(&a_prime), &seg(0, 10), 1), w);
    }

    #[test]
    fn empty_ambiguous_intersection_scores_zero() {
        assert_eq!(ambiguous_score(Some(&seg(10, 4)), &seg(0, 5), 4), 0.0);
        assert_eq!(ambiguous_score(None, &seg(0, 5), 4), 0.0);
    }

    #[test]
    fn overlap_disjoint_is_zero() {
        let o = overlap_score(&seg(0, 3), &seg(10, 2), Some(&seg(8, 2)), Some(&seg(3, 2)), 2);
        assert_eq!(o, 0.0);
    }

    #[test]
    fn overlap_counts_early_and_inner_points() {
        // two points of a in p, one in p', p outside the ambiguous window
        let a = seg(50, 5);
        let p = seg(51, 2);
        let pp = seg(8, 43);
        let o = overlap_score(&a, &p, Some(&pp), Some(&seg(55, 13)), 13);
        assert_eq!(o, 3.0);
    }

    #[test]
    fn overlap_with_trailing_flags() {
        // p covers the anomaly fully and runs three steps into a' (δ = 3)
        let a = seg(10, 5);
        let a_prime = seg(15, 3);
        let p = seg(10, 8);
        let want = 5.0 + ambiguous_weight(0, 3) + ambiguous_weight(1, 3) + ambiguous_weight(2, 3);
        let got = overlap_score(&a, &p, None, Some(&a_prime), 3);
        assert!((got - want).abs() < 1e-12);
        assert!((got - 6.5).abs() < 1e-12, "symmetric weights sum to 1.5: {got}");
    }

    #[test]
    fn early_reward_cases() {
        let a = seg(20, 5);
        assert_eq!(early_reward(&a, None, 7, 0.001, EarlyPoint::Earliest), 0.0);
        // lead exactly epsilon
        let pp = seg(13, 7);
        assert!((early_reward(&a, Some(&pp), 7, 0.3, EarlyPoint::Earliest) - 1.0).abs() < 1e-12);
        // precursor not before onset
        assert_eq!(early_reward(&a, Some(&seg(20, 2)), 7, 0.3, EarlyPoint::Earliest), 0.0);
    }

    #[test]
    fn early_reward_ten_steps_off_peak() {
        let a = seg(40, 3);
        let want = (-0.1f64).exp();
        // lead 17 = ε + 10
        let late = early_reward(&a, Some(&seg(23, 17)), 7, 0.001, EarlyPoint::Earliest);
        assert!((late - want).abs() < 1e-12);
        assert!((late - 0.905).abs() < 1e-3);
        // lead 3 with ε = 13 is ten steps short of the peak
        let short = early_reward(&a, Some(&seg(37, 3)), 13, 0.001, EarlyPoint::Earliest);
        assert!((short - want).abs() < 1e-12);
    }

    #[test]
    fn max_reward_point_picks_best_lead() {
        let a = seg(30, 2);
        let pp = seg(10, 20); // leads 20 down to 1
        let earliest = early_reward(&a, Some(&pp), 7, 0.1, EarlyPoint::Earliest);
        let best = early_reward(&a, Some(&pp), 7, 0.1, EarlyPoint::MaxReward);
        assert!((earliest - (-0.1f64 * 169.0).exp()).abs() < 1e-12);
        assert_eq!(best, 1.0);
    }

    /// Two anomalies and two predictions laid out so that the first anomaly
    /// has overlap 3 over length 5 with a reward near 0.29 and the second
    /// has overlap ≈ 5.888 from trailing flags.
    fn worked_example() -> (SegmentSet, MetricParams) {
        let set = SegmentSet::new(
            vec![seg(50, 5), seg(100, 5)],
            vec![seg(51, 2), seg(111, 3)],
            vec![Some(seg(8, 43)), Some(seg(100, 11))],
            13,
            200,
        )
        .unwrap();
        let params = MetricParams {
            delta: 13,
            ..equal_weights()
        };
        (set, params)
    }

    #[test]
    fn worked_example_recall_components() {
        let (set, params) = worked_example();
        let eval = PtaprEvaluation::new(&set, &params).unwrap();
        let a = eval.anomalies();
        assert_eq!(a[0].overlap, 3.0);
        let s = ambiguous_weight(6, 13) + ambiguous_weight(7, 13) + ambiguous_weight(8, 13);
        assert!((a[1].overlap - (5.0 + s)).abs() < 1e-12);
        assert!((a[1].overlap - 5.88).abs() < 0.01);
        let reward = (-0.001f64 * 35.0 * 35.0).exp();
        assert!((a[0].early_reward - reward).abs() < 1e-12);
        assert_eq!(a[1].early_reward, 0.0);

        let (r, c) = eval.recall(0.5).unwrap();
        assert_eq!(c.detection, 1.0);
        assert!((c.portion - 0.8).abs() < 1e-12);
        assert!((c.early - reward / 2.0).abs() < 1e-12);
        assert!((r - (1.0 + 0.8 + reward / 2.0) / 3.0).abs() < 1e-12);

        let (p, c) = eval.precision(0.5);
        assert_eq!(c.detection, 1.0);
        assert_eq!(c.portion, 1.0);
        assert!((c.early - reward / 2.0).abs() < 1e-12);
        assert!((r - 0.6483).abs() < 0.005 && (p - 0.715).abs() < 0.005);
    }

    #[test]
    fn perfect_detection_without_precursor() {
        let set = SegmentSet::without_precursors(vec![seg(5, 4)], vec![seg(5, 4)], 3, 20).unwrap();
        let (r, c) = ptar(&set, &equal_weights()).unwrap();
        assert_eq!((c.detection, c.portion, c.early), (1.0, 1.0, 0.0));
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
        let (p, _) = ptap(&set, &equal_weights()).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_predictions() {
        let set = SegmentSet::without_precursors(vec![seg(5, 4)], vec![], 3, 20).unwrap();
        for theta in [0.0, 0.5, 1.0] {
            let params = MetricParams {
                theta,
                ..equal_weights()
            };
            assert_eq!(ptar(&set, &params).unwrap().0, 0.0);
            assert_eq!(ptap(&set, &params).unwrap().0, 0.0);
        }
    }

    #[test]
    fn no_anomalies_is_an_error() {
        let set = SegmentSet::without_precursors(vec![], vec![seg(1, 2)], 3, 20).unwrap();
        assert!(matches!(ptar(&set, &equal_weights()), Err(Error::NoGroundTruth)));
        assert_eq!(ptap(&set, &equal_weights()).unwrap().0, 0.0);
    }

    #[test]
    fn predictions_inside_anomalies() {
        let set = SegmentSet::without_precursors(
            vec![seg(0, 10), seg(20, 10)],
            vec![seg(2, 3), seg(22, 8)],
            2,
            40,
        )
        .unwrap();
        let params = MetricParams {
            alpha: 0.2,
            beta: 0.5,
            gamma: 0.3,
            theta: 1.0,
            ..Default::default()
        };
        let (p, _) = ptap(&set, &params).unwrap();
        assert!((p - 0.7).abs() < 1e-12);
    }

    #[test]
    fn stray_prediction_scores_zero() {
        let set = SegmentSet::without_precursors(vec![seg(10, 5)], vec![seg(30, 3)], 4, 40).unwrap();
        for theta in [0.0, 0.3] {
            let params = MetricParams {
                theta,
                ..equal_weights()
            };
            let (_, c) = ptap(&set, &params).unwrap();
            assert_eq!(c.detection, 0.0);
            assert_eq!(c.portion, 0.0);
        }
    }

    #[test]
    fn harmonic_mean() {
        assert!((ptapr_f1(0.4, 0.4) - 0.4).abs() < 1e-15);
        assert_eq!(ptapr_f1(0.0, 1.0), 0.0);
        assert_eq!(ptapr_f1(0.0, 0.0), 0.0);
        assert!((ptapr_f1(0.65, 0.72) - 0.6832).abs() < 1e-4);
    }

    #[test]
    fn constant_curve_area() {
        // every ratio is 1, so F1 does not depend on θ
        let set = SegmentSet::without_precursors(vec![seg(5, 4)], vec![seg(5, 4)], 3, 20).unwrap();
        let curve = ptapr_theta_sweep(&set, &equal_weights(), &[0.0, 0.25, 1.0]).unwrap();
        assert!((curve.auc - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(curve.f1_0, curve.f1_1);
    }

    #[test]
    fn sweep_adds_missing_endpoints() {
        let set = SegmentSet::without_precursors(vec![seg(5, 4)], vec![seg(5, 2)], 3, 20).unwrap();
        let curve = ptapr_theta_sweep(&set, &equal_weights(), &[0.5]).unwrap();
        let thetas: Vec<f64> = curve.points.iter().map(|p| p.theta).collect();
        assert_eq!(thetas, vec![0.0, 0.5, 1.0]);
        assert!(curve.f1_0 >= curve.f1_1);
    }

    #[test]
    fn rewards_ignore_unlinked_predictions() {
        // precursor before the anomaly but neither p nor p' touch it
        let set = SegmentSet::new(vec![seg(30, 5)], vec![seg(20, 2)], vec![Some(seg(15, 5))], 3, 40)
            .unwrap();
        let eval = PtaprEvaluation::new(&set, &equal_weights()).unwrap();
        assert_eq!(eval.anomalies()[0].early_reward, 0.0);
        assert_eq!(eval.predictions()[0].early_reward, 0.0);
    }
}
