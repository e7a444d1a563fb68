//! Multivariate series, binary labels and per-timestamp score carriers.
//!
//! Timestamps are abstract unit steps. A series stores only its first
//! timestamp; row `r` has timestamp `first_timestamp + r`. Everything else in
//! the crate works with 0-based row positions.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::segment::{segments_from_flags, Segment};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    first_timestamp: i64,
    values: Array2<f64>,
    variable_names: Option<Vec<String>>,
}

impl TimeSeries {
    /// Builds a series from a `T x c` matrix. Rejects empty input and
    /// non-finite cells.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        Self::with_metadata(0, values, None)
    }

    pub fn with_metadata(
        first_timestamp: i64,
        values: Array2<f64>,
        variable_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::invalid("time series must have at least one row"));
        }
        if values.ncols() == 0 {
            return Err(Error::invalid("time series must have at least one variable"));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "row {} variable {}",
                idx / values.ncols(),
                idx % values.ncols()
            )));
        }
        if let Some(names) = &variable_names {
            if names.len() != values.ncols() {
                return Err(Error::invalid(format!(
                    "{} variable names for {} columns",
                    names.len(),
                    values.ncols()
                )));
            }
        }
        Ok(Self {
            first_timestamp,
            values,
            variable_names,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn first_timestamp(&self) -> i64 {
        self.first_timestamp
    }

    pub fn timestamp(&self, row: usize) -> i64 {
        self.first_timestamp + row as i64
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn variable_names(&self) -> Option<&[String]> {
        self.variable_names.as_deref()
    }

    /// Rows `start..end` as a new series that keeps its original timestamps.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::invalid(format!(
                "row range {start}..{end} invalid for series of length {}",
                self.len()
            )));
        }
        Ok(Self {
            first_timestamp: self.timestamp(start),
            values: self.values.slice(s![start..end, ..]).to_owned(),
            variable_names: self.variable_names.clone(),
        })
    }
}

/// Ground-truth anomaly flags, one per timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    flags: Vec<u8>,
}

impl LabelSequence {
    pub fn new(flags: Vec<u8>) -> Result<Self> {
        if let Some(pos) = flags.iter().position(|&f| f > 1) {
            return Err(Error::invalid(format!(
                "label at position {pos} is {}, expected 0 or 1",
                flags[pos]
            )));
        }
        Ok(Self { flags })
    }

    pub fn from_segments(len: usize, segments: &[Segment]) -> Result<Self> {
        let mut flags = vec![0u8; len];
        for seg in segments {
            if seg.end() >= len {
                return Err(Error::invalid(format!(
                    "segment {seg:?} exceeds label length {len}"
                )));
            }
            flags[seg.start()..=seg.end()].fill(1);
        }
        Ok(Self { flags })
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn flags(&self) -> &[u8] {
        &self.flags
    }

    pub fn segments(&self) -> Vec<Segment> {
        segments_from_flags(&self.flags)
    }
}

/// Per-timestamp scores with the horizon lead that produced each one.
///
/// `None` marks a timestamp no forecast window reached.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    scores: Vec<Option<f64>>,
    lead_times: Vec<Option<usize>>,
}

impl ScoreSeries {
    pub fn new(scores: Vec<Option<f64>>, lead_times: Vec<Option<usize>>) -> Result<Self> {
        if scores.len() != lead_times.len() {
            return Err(Error::invalid(format!(
                "{} scores but {} lead times",
                scores.len(),
                lead_times.len()
            )));
        }
        for (t, (s, l)) in scores.iter().zip(&lead_times).enumerate() {
            match (s, l) {
                (Some(v), _) if !v.is_finite() => {
                    return Err(Error::NonFinite(format!("score at timestamp {t}")))
                }
                (None, Some(_)) => {
                    return Err(Error::invalid(format!(
                        "timestamp {t} has a lead time but no score"
                    )))
                }
                _ => {}
            }
        }
        Ok(Self { scores, lead_times })
    }

    /// Scores without lead information (every defined score gets lead 0).
    pub fn from_scores(scores: Vec<Option<f64>>) -> Result<Self> {
        let leads = scores.iter().map(|s| s.map(|_| 0)).collect();
        Self::new(scores, leads)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[Option<f64>] {
        &self.scores
    }

    pub fn lead_times(&self) -> &[Option<usize>] {
        &self.lead_times
    }

    pub fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().filter_map(|s| *s)
    }
}
