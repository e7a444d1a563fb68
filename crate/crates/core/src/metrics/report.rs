use serde::{Deserialize, Serialize};

use super::pak::{default_k_grid, pa_k_suite, PaKSuite};
use super::ptapr::{ptapr_f1, AnomalyDiagnostic, Components, PredictionDiagnostic, PtaprEvaluation, ThetaCurve};
use super::tapr::{TaprEvaluation, TaprScore};
use super::MetricParams;
use crate::error::{Error, Result};
use crate::segment::{flags_from_segments, SegmentSet};

/// Metric families to include in a report. PTaPR is always computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSelection {
    pub tapr: bool,
    pub pak: bool,
}

impl Default for MetricSelection {
    fn default() -> Self {
        Self { tapr: true, pak: true }
    }
}

impl std::str::FromStr for MetricSelection {
    type Err = Error;

    /// Comma-separated list drawn from `ptapr`, `tapr`, `pak`.
    fn from_str(s: &str) -> Result<Self> {
        let mut sel = Self {
            tapr: false,
            pak: false,
        };
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name {
                "ptapr" => {}
                "tapr" => sel.tapr = true,
                "pak" => sel.pak = true,
                other => return Err(Error::invalid(format!("unknown metric family '{other}'"))),
            }
        }
        Ok(sel)
    }
}

/// Early-detection precision, recall and F1: the reward components alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EarlyDetection {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaprSummary {
    pub score: TaprScore,
    pub f1_0: f64,
    pub f1_1: f64,
    pub auc: f64,
    pub curve: ThetaCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub params: MetricParams,
    pub ptar: f64,
    pub ptap: f64,
    pub ptapr_f1: f64,
    pub recall_components: Components,
    pub precision_components: Components,
    pub f1_0: f64,
    pub f1_1: f64,
    pub auc: f64,
    pub early_detection: EarlyDetection,
    pub no_predictions: bool,
    pub anomalies: Vec<AnomalyDiagnostic>,
    pub predictions: Vec<PredictionDiagnostic>,
    pub theta_curve: ThetaCurve,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tapr: Option<TaprSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pak: Option<PaKSuite>,
}

/// Full report at `params.theta` plus θ curves over `thetas`.
pub fn evaluate(
    set: &SegmentSet,
    params: &MetricParams,
    thetas: &[f64],
    selection: MetricSelection,
) -> Result<MetricReport> {
    let eval = PtaprEvaluation::new(set, params)?;
    let (ptar, rc) = eval.recall(params.theta)?;
    let (ptap, pc) = eval.precision(params.theta);
    let curve = eval.sweep(thetas)?;

    let tapr = if selection.tapr {
        let t = TaprEvaluation::new(set, params)?;
        let curve = t.sweep(thetas)?;
        Some(TaprSummary {
            score: t.score(params.theta)?,
            f1_0: curve.f1_0,
            f1_1: curve.f1_1,
            auc: curve.auc,
            curve,
        })
    } else {
        None
    };

    let pak = if selection.pak {
        let labels = flags_from_segments(set.anomalies(), set.series_len());
        let mut flagged = set.predictions().to_vec();
        flagged.extend(set.precursors().iter().flatten().copied());
        let flags = flags_from_segments(&flagged, set.series_len());
        Some(pa_k_suite(&flags, &labels, &default_k_grid())?)
    } else {
        None
    };

    Ok(MetricReport {
        params: *params,
        ptar,
        ptap,
        ptapr_f1: ptapr_f1(ptar, ptap),
        recall_components: rc,
        precision_components: pc,
        f1_0: curve.f1_0,
        f1_1: curve.f1_1,
        auc: curve.auc,
        early_detection: EarlyDetection {
            precision: pc.early,
            recall: rc.early,
            f1: ptapr_f1(rc.early, pc.early),
        },
        no_predictions: !eval.has_predictions(),
        anomalies: eval.anomalies().to_vec(),
        predictions: eval.predictions().to_vec(),
        theta_curve: curve,
        tapr,
        pak,
    })
}
