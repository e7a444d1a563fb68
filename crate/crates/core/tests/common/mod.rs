//! Reference implementations built on plain index sets, plus random
//! micro-fixtures. Shared by the integration test targets.

#![allow(dead_code)]

use std::collections::BTreeSet;

use poakit::metrics::{EarlyPoint, MetricParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Idx = BTreeSet<usize>;

/// Maximal runs of set flags as index sets.
pub fn runs(flags: &[u8]) -> Vec<Idx> {
    let mut out: Vec<Idx> = Vec::new();
    let mut prev_set = false;
    for (t, &f) in flags.iter().enumerate() {
        if f != 0 {
            if !prev_set {
                out.push(Idx::new());
            }
            out.last_mut().unwrap().insert(t);
        }
        prev_set = f != 0;
    }
    out
}

fn first(s: &Idx) -> usize {
    *s.iter().next().unwrap()
}

fn last(s: &Idx) -> usize {
    *s.iter().next_back().unwrap()
}

fn common(a: &Idx, b: &Idx) -> usize {
    a.intersection(b).count()
}

pub struct RefSplit {
    pub predictions: Vec<Idx>,
    pub precursors: Vec<Idx>,
}

/// Each run is split at the first anomaly onset strictly after its start,
/// unless the run starts inside an anomaly.
pub fn split(flags: &[u8], anomalies: &[Idx]) -> RefSplit {
    let mut predictions = Vec::new();
    let mut precursors = Vec::new();
    for run in runs(flags) {
        let s = first(&run);
        let starts_inside = anomalies.iter().any(|a| a.contains(&s));
        let onset = anomalies
            .iter()
            .map(first)
            .filter(|&t| t > s && run.contains(&t))
            .min();
        match onset {
            Some(t) if !starts_inside => {
                precursors.push(run.iter().copied().filter(|&i| i < t).collect());
                predictions.push(run.iter().copied().filter(|&i| i >= t).collect());
            }
            _ => {
                precursors.push(Idx::new());
                predictions.push(run);
            }
        }
    }
    RefSplit {
        predictions,
        precursors,
    }
}

/// Positions trailing each anomaly, capped by `delta`, the series end and
/// the next anomaly.
pub fn ambiguous(anomalies: &[Idx], delta: usize, len: usize) -> Vec<Vec<usize>> {
    anomalies
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let next = anomalies.get(i + 1).map_or(usize::MAX, first);
            (last(a) + 1..last(a) + 1 + delta)
                .take_while(|&t| t < len && t < next)
                .collect()
        })
        .collect()
}

pub fn sigmoid_weight(offset: usize, delta: usize) -> f64 {
    let x = if delta <= 1 {
        -6.0
    } else {
        -6.0 + 12.0 * offset as f64 / (delta - 1) as f64
    };
    1.0 / (1.0 + x.exp())
}

fn ambiguous_credit(window: &[usize], p: &Idx, delta: usize) -> f64 {
    window
        .iter()
        .enumerate()
        .filter(|(_, t)| p.contains(t))
        .map(|(o, _)| sigmoid_weight(o, delta))
        .sum()
}

fn reward(a: &Idx, pre: &Idx, params: &MetricParams) -> f64 {
    let onset = first(a);
    let value = |i: usize| {
        let g = (onset - i) as f64 - params.epsilon as f64;
        (-params.k * g * g).exp()
    };
    let early: Vec<usize> = pre.iter().copied().filter(|&i| i < onset).collect();
    if early.is_empty() || first(pre) >= onset {
        return 0.0;
    }
    match params.early_point {
        EarlyPoint::Earliest => value(early[0]),
        EarlyPoint::MaxReward => early.into_iter().map(value).fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RefScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub early_recall: f64,
}

fn f1(r: f64, p: f64) -> f64 {
    if r + p > 0.0 {
        2.0 * r * p / (r + p)
    } else {
        0.0
    }
}

fn fold(ratios: &[f64], rewards: &[f64], params: &MetricParams, theta: f64) -> f64 {
    let n = ratios.len() as f64;
    let d = ratios.iter().filter(|&&r| r > 0.0 && r >= theta).count() as f64 / n;
    let p = ratios.iter().map(|r| r.min(1.0)).sum::<f64>() / n;
    let e = rewards.iter().sum::<f64>() / n;
    params.alpha * d + params.beta * p + params.gamma * e
}

/// Precursor-aware recall, precision and F1 from raw flags and labels.
pub fn ptapr(flags: &[u8], labels: &[u8], params: &MetricParams, theta: f64) -> RefScore {
    let anomalies = runs(labels);
    let sp = split(flags, &anomalies);
    let amb = ambiguous(&anomalies, params.delta, labels.len());
    let (na, np) = (anomalies.len(), sp.predictions.len());
    let mut a_ratio = vec![0.0; na];
    let mut a_reward = vec![0.0f64; na];
    let mut p_ratio = vec![0.0; np];
    let mut p_reward = vec![0.0f64; np];
    for (i, a) in anomalies.iter().enumerate() {
        for j in 0..np {
            let (p, pre) = (&sp.predictions[j], &sp.precursors[j]);
            let o = (common(a, pre) + common(a, p)) as f64 + ambiguous_credit(&amb[i], p, params.delta);
            a_ratio[i] += o / a.len() as f64;
            p_ratio[j] += o / p.len() as f64;
            if common(a, p) + common(a, pre) > 0 {
                let e = reward(a, pre, params);
                a_reward[i] = a_reward[i].max(e);
                p_reward[j] = p_reward[j].max(e);
            }
        }
    }
    let recall = fold(&a_ratio, &a_reward, params, theta);
    let precision = if np == 0 {
        0.0
    } else {
        fold(&p_ratio, &p_reward, params, theta)
    };
    RefScore {
        recall,
        precision,
        f1: f1(recall, precision),
        early_recall: a_reward.iter().sum::<f64>() / na as f64,
    }
}

/// Reward-free recall, precision and F1 over whole flagged runs.
pub fn tapr(flags: &[u8], labels: &[u8], params: &MetricParams, theta: f64) -> (f64, f64, f64) {
    let anomalies = runs(labels);
    let rs = runs(flags);
    let amb = ambiguous(&anomalies, params.delta, labels.len());
    let mut a_ratio = vec![0.0; anomalies.len()];
    let mut r_ratio = vec![0.0; rs.len()];
    for (i, a) in anomalies.iter().enumerate() {
        for (j, r) in rs.iter().enumerate() {
            let o = common(a, r) as f64 + ambiguous_credit(&amb[i], r, params.delta);
            a_ratio[i] += o / a.len() as f64;
            r_ratio[j] += o / r.len() as f64;
        }
    }
    let side = |ratios: &[f64]| {
        if ratios.is_empty() {
            return 0.0;
        }
        let n = ratios.len() as f64;
        let d = ratios.iter().filter(|&&r| r > 0.0 && r >= theta).count() as f64 / n;
        let p = ratios.iter().map(|r| r.min(1.0)).sum::<f64>() / n;
        params.tapr_alpha * d + (1.0 - params.tapr_alpha) * p
    };
    let (r, p) = (side(&a_ratio), side(&r_ratio));
    (r, p, f1(r, p))
}

/// Point-wise F1 after adjusting every anomaly with at least `k` percent
/// of its points flagged (any point when `k` is 0).
pub fn pak_f1(flags: &[u8], labels: &[u8], k: f64) -> f64 {
    let mut predicted: Idx = (0..flags.len()).filter(|&t| flags[t] != 0).collect();
    for a in runs(labels) {
        let hits = a.iter().filter(|t| predicted.contains(t)).count();
        let frac = hits as f64 / a.len() as f64;
        let adjust = if k == 0.0 { hits > 0 } else { frac * 100.0 >= k - 1e-12 };
        if adjust {
            predicted.extend(a.iter().copied());
        }
    }
    let truth: Idx = (0..labels.len()).filter(|&t| labels[t] != 0).collect();
    let tp = common(&predicted, &truth) as f64;
    let precision = if predicted.is_empty() { 0.0 } else { tp / predicted.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { tp / truth.len() as f64 };
    f1(recall, precision)
}

/// Random micro-fixture: series of at most 30 steps with 1 to 3 anomalies
/// and at most 4 flagged runs, plus randomized metric parameters.
pub struct Fixture {
    pub labels: Vec<u8>,
    pub flags: Vec<u8>,
    pub params: MetricParams,
}

fn paint(rng: &mut ChaCha8Rng, len: usize, max_runs: usize, min_runs: usize) -> Vec<u8> {
    let mut flags = vec![0u8; len];
    let n = rng.random_range(min_runs..=max_runs);
    for _ in 0..n {
        let start = rng.random_range(0..len);
        let run = rng.random_range(1..=(len - start).min(8));
        flags[start..start + run].fill(1);
    }
    flags
}

pub fn fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let len = rng.random_range(6..=30);
    let labels = paint(rng, len, 3, 1);
    let flags = paint(rng, len, 4, 0);
    let w: [f64; 3] = [rng.random(), rng.random(), rng.random::<f64>() + 0.05];
    let total: f64 = w.iter().sum();
    let mut params = MetricParams {
        theta: if rng.random_bool(0.2) { 0.0 } else { rng.random() },
        alpha: w[0] / total,
        beta: w[1] / total,
        gamma: 0.0,
        delta: rng.random_range(0..=8),
        epsilon: rng.random_range(1..=12),
        k: 10f64.powf(rng.random_range(-4.0..-0.3)),
        tapr_alpha: rng.random(),
        early_point: if rng.random_bool(0.5) {
            EarlyPoint::Earliest
        } else {
            EarlyPoint::MaxReward
        },
    };
    params.gamma = 1.0 - params.alpha - params.beta;
    Fixture { labels, flags, params }
}

/// Random labels and flags at the scale of a real test split: 5000 steps,
/// 3 to 12 anomalies and 5 to 60 flagged runs, default parameters.
pub fn long_fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let len = 5000;
    let mut labels = vec![0u8; len];
    for _ in 0..rng.random_range(3..=12) {
        let start = rng.random_range(0..len - 60);
        labels[start..start + rng.random_range(5..=50)].fill(1);
    }
    let mut flags = vec![0u8; len];
    for _ in 0..rng.random_range(5..=60) {
        let start = rng.random_range(0..len - 60);
        flags[start..start + rng.random_range(1..=50)].fill(1);
    }
    Fixture {
        labels,
        flags,
        params: MetricParams::default(),
    }
}
