//! Segment algebra over 0-based inclusive index ranges.
//!
//! A [`Segment`] covers `start ..= start + len - 1`. A [`SegmentSet`] bundles
//! the ground-truth anomalies, the detector's prediction segments with their
//! precursor segments, and the ambiguous windows trailing each anomaly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    start: usize,
    len: usize,
}

impl Segment {
    pub fn new(start: usize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid(format!("segment at {start} has zero length")));
        }
        Ok(Self { start, len })
    }

    /// Segment covering `start ..= end`.
    pub fn from_bounds(start: usize, end: usize) -> Result<Self> {
        if end < start {
            return Err(Error::invalid(format!("segment end {end} before start {start}")));
        }
        Ok(Self {
            start,
            len: end - start + 1,
        })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Last covered index (inclusive).
    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }

    pub fn contains(&self, idx: usize) -> bool {
        idx >= self.start && idx <= self.end()
    }

    pub fn intersection(&self, other: &Segment) -> Option<Segment> {
        let lo = self.start.max(other.start);
        let hi = self.end().min(other.end());
        (lo <= hi).then(|| Segment {
            start: lo,
            len: hi - lo + 1,
        })
    }

    pub fn overlap_len(&self, other: &Segment) -> usize {
        self.intersection(other).map_or(0, |s| s.len)
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end()
    }

    pub fn shifted(&self, offset: usize) -> Segment {
        Segment {
            start: self.start + offset,
            len: self.len,
        }
    }
}

/// Maximal runs of 1s, sorted by start.
pub fn segments_from_flags(flags: &[u8]) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f != 0, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                out.push(Segment { start: s, len: i - s });
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        out.push(Segment {
            start: s,
            len: flags.len() - s,
        });
    }
    out
}

/// Inverse of [`segments_from_flags`]; indices past `len` are ignored.
pub fn flags_from_segments(segments: &[Segment], len: usize) -> Vec<u8> {
    let mut flags = vec![0u8; len];
    for seg in segments {
        for i in seg.indices().take_while(|&i| i < len) {
            flags[i] = 1;
        }
    }
    flags
}

fn check_sorted_disjoint(segments: &[Segment], what: &str) -> Result<()> {
    for pair in segments.windows(2) {
        if pair[1].start <= pair[0].end() {
            return Err(Error::invalid(format!(
                "{what} segments must be sorted and disjoint: {:?} then {:?}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Ambiguous window trailing each anomaly.
///
/// The window starts right after the anomaly and is at most `delta` long,
/// truncated at the end of the series and at the start of the next anomaly.
/// Truncation to zero length yields `None`.
pub fn ambiguous_extensions(
    anomalies: &[Segment],
    delta: usize,
    series_len: usize,
) -> Vec<Option<Segment>> {
    anomalies
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let first = a.end() + 1;
            let mut len = delta.min(series_len.saturating_sub(first));
            if let Some(next) = anomalies.get(i + 1) {
                len = len.min(next.start.saturating_sub(first));
            }
            (len > 0).then_some(Segment { start: first, len })
        })
        .collect()
}

/// Anomalies, predictions with their precursors, and ambiguous windows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentSet {
    anomalies: Vec<Segment>,
    predictions: Vec<Segment>,
    precursors: Vec<Option<Segment>>,
    ambiguous: Vec<Option<Segment>>,
    delta: usize,
    series_len: usize,
}

impl SegmentSet {
    /// Validates the layout and derives the ambiguous windows from `delta`.
    ///
    /// Every present precursor must end exactly one step before its
    /// prediction starts and must not reach back into the previous
    /// prediction.
    pub fn new(
        anomalies: Vec<Segment>,
        predictions: Vec<Segment>,
        precursors: Vec<Option<Segment>>,
        delta: usize,
        series_len: usize,
    ) -> Result<Self> {
        check_sorted_disjoint(&anomalies, "anomaly")?;
        check_sorted_disjoint(&predictions, "prediction")?;
        if precursors.len() != predictions.len() {
            return Err(Error::invalid(format!(
                "{} precursors for {} predictions",
                precursors.len(),
                predictions.len()
            )));
        }
        for (j, (p, pre)) in predictions.iter().zip(&precursors).enumerate() {
            if let Some(pre) = pre {
                if pre.end() + 1 != p.start {
                    return Err(Error::invalid(format!(
                        "precursor {pre:?} does not end right before prediction {p:?}"
                    )));
                }
                if j > 0 && pre.start <= predictions[j - 1].end() {
                    return Err(Error::invalid(format!(
                        "precursor {pre:?} overlaps the previous prediction"
                    )));
                }
            }
        }
        let last = anomalies
            .iter()
            .chain(&predictions)
            .map(Segment::end)
            .max();
        if let Some(last) = last {
            if last >= series_len {
                return Err(Error::invalid(format!(
                    "segment ends at {last}, beyond series length {series_len}"
                )));
            }
        }
        let ambiguous = ambiguous_extensions(&anomalies, delta, series_len);
        Ok(Self {
            anomalies,
            predictions,
            precursors,
            ambiguous,
            delta,
            series_len,
        })
    }

    /// Convenience for sets without precursors.
    pub fn without_precursors(
        anomalies: Vec<Segment>,
        predictions: Vec<Segment>,
        delta: usize,
        series_len: usize,
    ) -> Result<Self> {
        let precursors = vec![None; predictions.len()];
        Self::new(anomalies, predictions, precursors, delta, series_len)
    }

    pub fn anomalies(&self) -> &[Segment] {
        &self.anomalies
    }

    pub fn predictions(&self) -> &[Segment] {
        &self.predictions
    }

    pub fn precursors(&self) -> &[Option<Segment>] {
        &self.precursors
    }

    pub fn ambiguous(&self) -> &[Option<Segment>] {
        &self.ambiguous
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn series_len(&self) -> usize {
        self.series_len
    }

    /// Each prediction merged with its precursor into one flagged run.
    pub fn flagged_runs(&self) -> Vec<Segment> {
        self.predictions
            .iter()
            .zip(&self.precursors)
            .map(|(p, pre)| match pre {
                Some(pre) => Segment {
                    start: pre.start,
                    len: p.len + pre.len,
                },
                None => *p,
            })
            .collect()
    }

    /// Translates every segment (and the series end) by `offset`.
    pub fn shifted(&self, offset: usize) -> Result<Self> {
        Self::new(
            self.anomalies.iter().map(|s| s.shifted(offset)).collect(),
            self.predictions.iter().map(|s| s.shifted(offset)).collect(),
            self.precursors
                .iter()
                .map(|s| s.map(|s| s.shifted(offset)))
                .collect(),
            self.delta,
            self.series_len + offset,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn seg(start: usize, len: usize) -> Segment {
        Segment::new(start, len).unwrap()
    }

    #[test]
    fn no_flags_no_segments() {
        assert!(segments_from_flags(&[0, 0, 0]).is_empty());
        assert!(segments_from_flags(&[]).is_empty());
    }

    #[test]
    fn maximal_runs() {
        assert_eq!(segments_from_flags(&[1, 1, 0, 1]), vec![seg(0, 2), seg(3, 1)]);
    }

    #[test]
    fn zero_length_rejected() {
        assert!(Segment::new(3, 0).is_err());
        assert!(Segment::from_bounds(5, 4).is_err());
    }

    #[test]
    fn ambiguous_full_window() {
        let out = ambiguous_extensions(&[seg(5, 3)], 4, 20);
        assert_eq!(out, vec![Some(seg(8, 4))]);
    }

    #[test]
    fn ambiguous_clipped_at_series_end() {
        let out = ambiguous_extensions(&[seg(5, 3)], 4, 10);
        assert_eq!(out, vec![Some(seg(8, 2))]);
    }

    #[test]
    fn ambiguous_clipped_at_next_anomaly() {
        let out = ambiguous_extensions(&[seg(0, 3), seg(5, 2)], 4, 20);
        assert_eq!(out[0], Some(seg(3, 2)));
        assert_eq!(out[1], Some(seg(7, 4)));
    }

    #[test]
    fn ambiguous_empty_when_adjacent_or_at_end() {
        let out = ambiguous_extensions(&[seg(0, 3), seg(3, 2)], 4, 5);
        assert_eq!(out, vec![None, None]);
        assert_eq!(ambiguous_extensions(&[seg(0, 3)], 0, 10), vec![None]);
    }

    #[test]
    fn precursor_must_abut_prediction() {
        let err = SegmentSet::new(vec![], vec![seg(10, 2)], vec![Some(seg(5, 3))], 2, 20);
        assert!(err.is_err());
        let ok = SegmentSet::new(vec![], vec![seg(10, 2)], vec![Some(seg(5, 5))], 2, 20);
        assert!(ok.is_ok());
    }

    #[test]
    fn unsorted_segments_rejected() {
        let err = SegmentSet::without_precursors(vec![seg(5, 2), seg(0, 2)], vec![], 1, 10);
        assert!(err.is_err());
        let err = SegmentSet::without_precursors(vec![seg(0, 3), seg(2, 2)], vec![], 1, 10);
        assert!(err.is_err());
    }

    #[test]
    fn flagged_runs_merge_precursors() {
        let set = SegmentSet::new(vec![seg(10, 5)], vec![seg(10, 3)], vec![Some(seg(8, 2))], 3, 20)
            .unwrap();
        assert_eq!(set.flagged_runs(), vec![seg(8, 5)]);
    }

    fn index_set(segments: &[Segment]) -> BTreeSet<usize> {
        segments.iter().flat_map(|s| s.indices()).collect()
    }

    proptest! {
        #[test]
        fn runs_cover_exactly_the_flagged_indices(flags in prop::collection::vec(0u8..2, 0..50)) {
            let segs = segments_from_flags(&flags);
            let expected: BTreeSet<usize> =
                flags.iter().enumerate().filter(|(_, &f)| f == 1).map(|(i, _)| i).collect();
            prop_assert_eq!(index_set(&segs), expected);
            for pair in segs.windows(2) {
                // maximal: at least one unflagged index between runs
                prop_assert!(pair[1].start() > pair[0].end() + 1);
            }
        }

        #[test]
        fn flags_round_trip(flags in prop::collection::vec(0u8..2, 0..60)) {
            let segs = segments_from_flags(&flags);
            prop_assert_eq!(flags_from_segments(&segs, flags.len()), flags);
        }

        #[test]
        fn ambiguous_windows_stay_clear_of_anomalies(
            flags in prop::collection::vec(0u8..2, 1..60),
            delta in 0usize..10,
        ) {
            let anomalies = segments_from_flags(&flags);
            let amb = ambiguous_extensions(&anomalies, delta, flags.len());
            let anomalous = index_set(&anomalies);
            for (a, ext) in anomalies.iter().zip(&amb) {
                if let Some(ext) = ext {
                    prop_assert!(ext.len() <= delta);
                    prop_assert_eq!(ext.start(), a.end() + 1);
                    prop_assert!(ext.end() < flags.len());
                    for i in ext.indices() {
                        prop_assert!(!anomalous.contains(&i));
                    }
                }
                // reference model: walk forward from the anomaly end
                let mut expected = 0;
                let mut i = a.end() + 1;
                while expected < delta && i < flags.len() && !anomalous.contains(&i) {
                    expected += 1;
                    i += 1;
                }
                prop_assert_eq!(ext.map_or(0, |s| s.len()), expected);
            }
        }
    }
}
