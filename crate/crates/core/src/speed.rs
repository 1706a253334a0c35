//! Per-vehicle speeds and per-direction rolling averages.

use serde::Serialize;
use thiserror::Error;

use crate::depth::{lift_point, CameraIntrinsics, DepthSampler, WorldPoint};
use crate::scale::ScaleCalibration;
use crate::tracking::{assign_direction, Direction, Track};

pub const DEFAULT_WINDOW_S: f64 = 60.0;
pub const DEFAULT_REPORT_INTERVAL_S: f64 = 1.0;
const MS_TO_KMH: f64 = 3.6;

#[derive(Debug, Error, PartialEq)]
pub enum SpeedError {
    #[error("track {track_id}: {reason}")]
    DegenerateTrack { track_id: u64, reason: String },
    #[error("invalid frame rate {0}")]
    InvalidFps(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleSpeed {
    pub track_id: u64,
    pub v_kmh: f64,
    pub t_last_seen: f64,
    pub direction: Direction,
    pub frames_used: usize,
    pub first_frame: u64,
    pub last_frame: u64,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedReport {
    pub t: f64,
    pub direction: Direction,
    pub v_star_kmh: Option<f64>,
    pub count: usize,
    pub window_s: f64,
    pub epoch: u64,
}

fn distance(a: &WorldPoint, b: &WorldPoint) -> f64 {
    let (p, q) = (a.to_cartesian(), b.to_cartesian());
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}

/// Average speed of one finished track: scaled path length through the
/// lifted centroids over the elapsed frame span. Centroids that cannot be
/// lifted are skipped; the span runs from the first to the last lifted one.
pub fn vehicle_speed(
    track: &Track,
    depth: &dyn DepthSampler,
    k: &CameraIntrinsics,
    scale: &ScaleCalibration,
    fps: f64,
    dir_deadband_px: f64,
) -> Result<VehicleSpeed, SpeedError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(SpeedError::InvalidFps(fps));
    }
    let lifted: Vec<(u64, WorldPoint)> = track
        .observations
        .iter()
        .filter_map(|o| lift_point(o.centroid[0], o.centroid[1], depth, k).ok().map(|p| (o.frame_index, p)))
        .collect();
    let degenerate = |reason: &str| SpeedError::DegenerateTrack { track_id: track.id, reason: reason.into() };
    let (Some(first), Some(last)) = (lifted.first(), lifted.last()) else {
        return Err(degenerate("no liftable centroid"));
    };
    if last.0 <= first.0 {
        return Err(degenerate("zero elapsed time"));
    }
    let path: f64 = lifted.windows(2).map(|w| distance(&w[0].1, &w[1].1)).sum();
    let elapsed_s = (last.0 - first.0) as f64 / fps;
    Ok(VehicleSpeed {
        track_id: track.id,
        v_kmh: scale.s_hat * path / elapsed_s * MS_TO_KMH,
        t_last_seen: track.last_frame() as f64 / fps,
        direction: assign_direction(track, dir_deadband_px),
        frames_used: lifted.len(),
        first_frame: first.0,
        last_frame: last.0,
        epoch: scale.epoch,
    })
}

/// Mean speed of `direction` vehicles last seen in `(t - window_s, t]`.
pub fn rolling_report(speeds: &[VehicleSpeed], t: f64, window_s: f64, direction: Direction, epoch: u64) -> SpeedReport {
    let members: Vec<f64> = speeds
        .iter()
        .filter(|s| s.direction == direction && s.t_last_seen > t - window_s && s.t_last_seen <= t)
        .map(|s| s.v_kmh)
        .collect();
    let v_star_kmh = (!members.is_empty()).then(|| members.iter().sum::<f64>() / members.len() as f64);
    SpeedReport { t, direction, v_star_kmh, count: members.len(), window_s, epoch }
}

/// Speeds of one calibration epoch, pruned as they age out of the window.
#[derive(Debug, Clone)]
pub struct SpeedWindow {
    window_s: f64,
    epoch: u64,
    speeds: Vec<VehicleSpeed>,
}

impl SpeedWindow {
    pub fn new(window_s: f64, epoch: u64) -> Self {
        Self { window_s, epoch, speeds: Vec::new() }
    }

    pub fn push(&mut self, speed: VehicleSpeed) {
        self.speeds.push(speed);
    }

    pub fn speeds(&self) -> &[VehicleSpeed] {
        &self.speeds
    }

    /// Reports for both directions at `t`, then forget vehicles that can no
    /// longer fall inside any later window.
    pub fn report(&mut self, t: f64) -> [SpeedReport; 2] {
        let out = [Direction::YIncreasing, Direction::YDecreasing]
            .map(|d| rolling_report(&self.speeds, t, self.window_s, d, self.epoch));
        let window = self.window_s;
        self.speeds.retain(|s| s.t_last_seen > t - window);
        out
    }
}
