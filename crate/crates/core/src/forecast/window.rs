use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Sliding-window geometry: `input_len` rows in, `horizon_len` rows out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub input_len: usize,
    pub horizon_len: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            input_len: 100,
            horizon_len: 24,
            stride: 1,
        }
    }
}

impl WindowConfig {
    pub fn new(input_len: usize, horizon_len: usize, stride: usize) -> Result<Self> {
        let cfg = Self {
            input_len,
            horizon_len,
            stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.horizon_len == 0 || self.stride == 0 {
            return Err(Error::invalid(format!(
                "window lengths and stride must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Minimum series length for at least one window.
    pub fn min_len(&self, with_targets: bool) -> usize {
        if with_targets {
            self.input_len + self.horizon_len
        } else {
            self.input_len
        }
    }

    /// Window origins (index of the last input row) for a series of length `len`.
    pub fn origins(&self, len: usize, with_targets: bool) -> Result<Vec<usize>> {
        self.validate()?;
        let required = self.min_len(with_targets);
        if len < required {
            return Err(Error::InsufficientLength {
                required,
                actual: len,
            });
        }
        let last = if with_targets {
            len - 1 - self.horizon_len
        } else {
            len - 1
        };
        Ok((self.input_len - 1..=last).step_by(self.stride).collect())
    }
}

/// One input window and, when available, the rows that follow it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub window_id: usize,
    /// Row index of the last input row.
    pub origin: usize,
    pub input: Array2<f64>,
    /// Rows `origin + 1 ..= origin + horizon_len`.
    pub target: Option<Array2<f64>>,
}

pub fn make_windows(
    series: &TimeSeries,
    cfg: &WindowConfig,
    with_targets: bool,
) -> Result<Vec<WindowPair>> {
    let origins = cfg.origins(series.len(), with_targets)?;
    let values = series.values();
    Ok(origins
        .into_iter()
        .enumerate()
        .map(|(window_id, origin)| {
            let first = origin + 1 - cfg.input_len;
            WindowPair {
                window_id,
                origin,
                input: values.slice(s![first..=origin, ..]).to_owned(),
                target: with_targets.then(|| {
                    values
                        .slice(s![origin + 1..=origin + cfg.horizon_len, ..])
                        .to_owned()
                }),
            }
        })
        .collect())
}
