//! Precursor-of-anomaly detection from forecasting-ensemble disagreement,
//! with segment-aware evaluation metrics (PTaPR, TaPR, PA%K).
//!
//! Stages: [`forecast`] builds windows and fits members, [`uncertainty`]
//! turns member disagreement into a per-timestamp score, [`detect`] picks a
//! threshold, and [`metrics`] evaluates the alarms against ground truth.

pub mod detect;
pub mod error;
pub mod forecast;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod segment;
pub mod series;
pub mod synth;
pub mod uncertainty;

pub use error::{Error, ErrorKind, Result};
pub use segment::{Segment, SegmentSet};
pub use series::{LabelSequence, ScoreSeries, TimeSeries};
