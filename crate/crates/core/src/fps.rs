//! Frame-rate estimation for streams without usable metadata.

use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_FPS_SAMPLES: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FpsSource {
    Metadata,
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FpsEstimate {
    pub fps: f64,
    pub sample_count: usize,
    pub source: FpsSource,
}

impl FpsEstimate {
    /// Take a declared container rate verbatim.
    pub fn from_metadata(fps: f64) -> Result<Self, FpsError> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(FpsError::InvalidRate(fps));
        }
        Ok(Self { fps, sample_count: 0, source: FpsSource::Metadata })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FpsError {
    #[error("need at least two timestamps, got {0}")]
    InsufficientSamples(usize),
    #[error("timestamps must be finite and strictly increasing (position {0})")]
    InvalidTimestamps(usize),
    #[error("frame rate must be positive and finite, got {0}")]
    InvalidRate(f64),
}

/// Endpoint estimate `(k - 1) / (t_k - t_1)` over the first
/// `k = min(n_required, len)` arrival times.
///
/// Only the first and last sample enter the ratio, so jitter on interior
/// frames has no effect and endpoint jitter `j` bounds the error by roughly
/// `2 j fps² / (k - 1)`.
pub fn estimate_fps(arrival_times_s: &[f64], n_required: usize) -> Result<FpsEstimate, FpsError> {
    let k = n_required.max(2).min(arrival_times_s.len());
    if k < 2 {
        return Err(FpsError::InsufficientSamples(arrival_times_s.len()));
    }
    let window = &arrival_times_s[..k];
    if let Some(bad) = window.iter().position(|t| !t.is_finite()) {
        return Err(FpsError::InvalidTimestamps(bad));
    }
    if let Some(bad) = window.windows(2).position(|w| w[1] <= w[0]) {
        return Err(FpsError::InvalidTimestamps(bad + 1));
    }
    let span = window[k - 1] - window[0];
    Ok(FpsEstimate {
        fps: (k - 1) as f64 / span,
        sample_count: k,
        source: FpsSource::Measured,
    })
}
