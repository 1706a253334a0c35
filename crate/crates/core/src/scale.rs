//! Metric scale recovery from car-length evidence.
//!
//! Each evidence pair is the two points where a car's bounding box crosses
//! its centroid line. Lifted with relative depth they are `d` model units
//! apart; assuming the car (with box padding) is `l` meters long, the scale
//! `s` in meters per model unit minimizes `‖L - s·D‖₂`, which has the closed
//! form `s = Dᵀ L / ‖D‖²`.

use serde::Serialize;
use thiserror::Error;

use crate::depth::{model_distance, CameraIntrinsics, DepthSampler};
use crate::tracking::{box_line_intersections, fit_centroid_line, Point2, Track};

pub const DEFAULT_MIN_PAIRS: usize = 20;
pub const DEFAULT_CAR_LENGTH_M: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidencePair {
    pub p_a: Point2,
    pub p_b: Point2,
    pub d_model: f64,
    pub l_true: f64,
    pub track_id: u64,
    pub frame_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleCalibration {
    /// Meters per depth-model unit.
    pub s_hat: f64,
    pub pair_count: usize,
    pub residual_rms: f64,
    pub epoch: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScaleError {
    #[error("need at least {required} evidence pairs, have {available}")]
    InsufficientEvidence { required: usize, available: usize },
    #[error("evidence pair {index} has non-positive length (d_model={d_model}, l_true={l_true})")]
    InvalidPair { index: usize, d_model: f64, l_true: f64 },
}

/// Closed-form least-squares scale `Σ dᵢ lᵢ / Σ dᵢ²`.
pub fn least_squares_scale(d_model: &[f64], l_true: &[f64]) -> f64 {
    debug_assert_eq!(d_model.len(), l_true.len());
    let dot: f64 = d_model.iter().zip(l_true).map(|(d, l)| d * l).sum();
    let norm: f64 = d_model.iter().map(|d| d * d).sum();
    dot / norm
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Drop pairs whose model length lies outside `[median / 3, 3 · median]`;
/// truncated boxes at occlusions produce wild lengths.
pub fn reject_outliers(pairs: &[EvidencePair]) -> Vec<&EvidencePair> {
    if pairs.is_empty() {
        return Vec::new();
    }
    let mut lengths: Vec<f64> = pairs.iter().map(|p| p.d_model).collect();
    let m = median(&mut lengths);
    pairs
        .iter()
        .filter(|p| p.d_model >= m / 3.0 && p.d_model <= 3.0 * m)
        .collect()
}

/// Estimate the scale from `pairs` after outlier rejection.
pub fn estimate_scale(
    pairs: &[EvidencePair],
    min_pairs: usize,
    epoch: u64,
) -> Result<ScaleCalibration, ScaleError> {
    if let Some((index, p)) = pairs
        .iter()
        .enumerate()
        .find(|(_, p)| !(p.d_model > 0.0 && p.d_model.is_finite() && p.l_true > 0.0 && p.l_true.is_finite()))
    {
        return Err(ScaleError::InvalidPair { index, d_model: p.d_model, l_true: p.l_true });
    }
    let insufficient = |available| ScaleError::InsufficientEvidence {
        required: min_pairs.max(1),
        available,
    };
    if pairs.len() < min_pairs.max(1) {
        return Err(insufficient(pairs.len()));
    }
    let kept = reject_outliers(pairs);
    if kept.len() < min_pairs.max(1) {
        return Err(insufficient(kept.len()));
    }
    let d: Vec<f64> = kept.iter().map(|p| p.d_model).collect();
    let l: Vec<f64> = kept.iter().map(|p| p.l_true).collect();
    let s_hat = least_squares_scale(&d, &l);
    let residual_rms =
        (d.iter().zip(&l).map(|(d, l)| (l - s_hat * d).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
    Ok(ScaleCalibration { s_hat, pair_count: kept.len(), residual_rms, epoch })
}

/// Evidence pairs from every observation of a finished track.
///
/// Observations whose box misses the centroid line, or whose intersection
/// points cannot be lifted, are skipped. A track without a usable centroid
/// line yields nothing.
pub fn collect_pairs(
    track: &Track,
    depth: &dyn DepthSampler,
    k: &CameraIntrinsics,
    car_length_m: f64,
) -> Vec<EvidencePair> {
    let Ok(line) = fit_centroid_line(track) else {
        return Vec::new();
    };
    track
        .observations
        .iter()
        .filter_map(|obs| {
            let (p_a, p_b) = box_line_intersections(&obs.bbox, &line).ok()?;
            let d_model = model_distance(p_a, p_b, depth, depth, k).ok()?;
            (d_model > 0.0).then_some(EvidencePair {
                p_a,
                p_b,
                d_model,
                l_true: car_length_m,
                track_id: track.id,
                frame_index: obs.frame_index,
            })
        })
        .collect()
}
