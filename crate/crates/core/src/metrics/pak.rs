use serde::Serialize;

use super::trapezoid_auc;
use crate::error::{Error, Result};
use crate::segment::segments_from_flags;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn check_lengths(flags: &[u8], labels: &[u8]) -> Result<()> {
    if flags.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} flags but {} labels",
            flags.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Point-wise precision, recall and F1. Undefined ratios are reported as 0.
pub fn pointwise_prf(flags: &[u8], labels: &[u8]) -> Result<Prf> {
    check_lengths(flags, labels)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&f, &l) in flags.iter().zip(labels) {
        match (f != 0, l != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

/// Marks a whole true anomaly segment as detected once at least `k_percent`
/// of its points are flagged (any flagged point when `k_percent` is 0).
pub fn point_adjust(flags: &[u8], labels: &[u8], k_percent: f64) -> Result<Vec<u8>> {
    check_lengths(flags, labels)?;
    if !(0.0..=100.0).contains(&k_percent) {
        return Err(Error::invalid(format!("K must be in [0, 100], got {k_percent}")));
    }
    let mut out = flags.to_vec();
    for seg in segments_from_flags(labels) {
        let hit = seg.indices().filter(|&i| flags[i] != 0).count();
        let adjust = if k_percent == 0.0 {
            hit > 0
        } else {
            hit as f64 * 100.0 >= k_percent * seg.len() as f64
        };
        if adjust {
            out[seg.start()..=seg.end()].fill(1);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaKPoint {
    pub k: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaKSuite {
    /// F1 after classic point adjustment (K = 0).
    pub f1_pa: f64,
    /// F1 without adjustment.
    pub f1: f64,
    /// Trapezoidal area of F1 over K in [0, 100], rescaled to [0, 1].
    pub auc: f64,
    pub curve: Vec<PaKPoint>,
}

pub fn pa_k_suite(flags: &[u8], labels: &[u8], k_grid: &[f64]) -> Result<PaKSuite> {
    let mut ks: Vec<f64> = k_grid.to_vec();
    ks.extend([0.0, 100.0]);
    if let Some(k) = ks.iter().find(|k| !(0.0..=100.0).contains(*k)) {
        return Err(Error::invalid(format!("K grid value {k} outside [0, 100]")));
    }
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    let curve = ks
        .iter()
        .map(|&k| {
            let prf = pointwise_prf(&point_adjust(flags, labels, k)?, labels)?;
            Ok(PaKPoint {
                k,
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = curve.iter().map(|p| p.k / 100.0).collect();
    let ys: Vec<f64> = curve.iter().map(|p| p.f1).collect();
    Ok(PaKSuite {
        f1_pa: curve[0].f1,
        f1: pointwise_prf(flags, labels)?.f1,
        auc: trapezoid_auc(&xs, &ys),
        curve,
    })
}

/// `0, 1, ..., 100`.
pub fn default_k_grid() -> Vec<f64> {
    (0..=100).map(f64::from).collect()
}
