//! Nearest-neighbour centroid tracking.
//!
//! Each frame's detections are matched to the active tracks by global greedy
//! assignment on centroid distance: all (track, detection) pairs are sorted by
//! ascending Euclidean distance and accepted while both sides are free and the
//! distance is below the threshold. Leftover detections open new tracks;
//! tracks left unmatched for `max_misses` consecutive frames retire.

mod geometry;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{box_line_intersections, fit_line, CentroidLine, Point2};

use crate::detection::{BoundingBox, Detection};

#[derive(Debug, Error, PartialEq)]
pub enum TrackingError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("centroids do not define a line")]
    DegenerateLine,
    #[error("line does not cross the box")]
    NoIntersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    YIncreasing,
    YDecreasing,
    Unknown,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::YIncreasing => "y_increasing",
            Direction::YDecreasing => "y_decreasing",
            Direction::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "y_increasing" => Some(Direction::YIncreasing),
            "y_decreasing" => Some(Direction::YDecreasing),
            "unknown" => Some(Direction::Unknown),
            _ => None,
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub centroid: Point2,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Track {
    pub id: u64,
    pub observations: Vec<Observation>,
    pub direction: Direction,
    pub active: bool,
    pub misses: u32,
}

impl Track {
    pub fn last_centroid(&self) -> Point2 {
        self.observations.last().expect("tracks are never empty").centroid
    }

    pub fn last_frame(&self) -> u64 {
        self.observations.last().expect("tracks are never empty").frame_index
    }

    pub fn centroids(&self) -> Vec<Point2> {
        self.observations.iter().map(|o| o.centroid).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub threshold_px: f64,
    pub max_misses: u32,
    pub min_frames: usize,
    pub dir_deadband_px: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { threshold_px: 50.0, max_misses: 5, min_frames: 5, dir_deadband_px: 5.0 }
    }
}

/// Maximum speed (m/s) a car can drive while still being matched frame to
/// frame: it may move at most one lane width per frame.
pub fn max_trackable_speed(lane_width_m: f64, fps: f64) -> Result<f64, TrackingError> {
    if !(lane_width_m > 0.0) || !(fps > 0.0) {
        return Err(TrackingError::InvalidParameter(format!(
            "lane width and fps must be positive (got {lane_width_m}, {fps})"
        )));
    }
    Ok(lane_width_m * fps)
}

fn distance(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// One-to-one assignment of `detections` to `tracks` by global greedy order
/// of centroid distance. Returns `(track_index, detection_index)` pairs; ties
/// break on the lower track, then detection, index.
pub fn greedy_match(tracks: &[Point2], detections: &[Point2], threshold_px: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, &t) in tracks.iter().enumerate() {
        for (di, &d) in detections.iter().enumerate() {
            let dist = distance(t, d);
            if dist < threshold_px {
                candidates.push((dist, ti, di));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; detections.len()];
    let mut out = Vec::new();
    for (_, ti, di) in candidates {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            out.push((ti, di));
        }
    }
    out
}

/// Direction from the sign of the vertical centroid displacement between the
/// first and last observation, with a dead band around zero.
pub fn assign_direction(track: &Track, deadband_px: f64) -> Direction {
    if track.observations.len() < 2 {
        return Direction::Unknown;
    }
    let dv = track.last_centroid()[1] - track.observations[0].centroid[1];
    if dv > deadband_px {
        Direction::YIncreasing
    } else if dv < -deadband_px {
        Direction::YDecreasing
    } else {
        Direction::Unknown
    }
}

pub fn fit_centroid_line(track: &Track) -> Result<CentroidLine, TrackingError> {
    fit_line(&track.centroids())
}

/// Tracker state for one calibration epoch.
#[derive(Debug)]
pub struct Tracker {
    config: TrackerConfig,
    active: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self { config, active: Vec::new(), next_id: 0, last_frame: None }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn active_tracks(&self) -> &[Track] {
        &self.active
    }

    /// Feed one frame's detections; returns the tracks retired by this frame.
    ///
    /// Frames must arrive in increasing order. Frames without detections still
    /// count as misses for every active track.
    pub fn update(&mut self, frame_index: u64, timestamp_s: f64, detections: &[Detection]) -> Vec<Track> {
        if let Some(last) = self.last_frame {
            assert!(frame_index > last, "frames must be fed in increasing order");
        }
        self.last_frame = Some(frame_index);

        let track_points: Vec<Point2> = self.active.iter().map(Track::last_centroid).collect();
        let det_points: Vec<Point2> = detections.iter().map(|d| d.bbox.centroid()).collect();
        let matches = greedy_match(&track_points, &det_points, self.config.threshold_px);

        let mut track_matched = vec![false; self.active.len()];
        let mut det_matched = vec![false; detections.len()];
        for &(ti, di) in &matches {
            track_matched[ti] = true;
            det_matched[di] = true;
            let track = &mut self.active[ti];
            track.observations.push(Observation {
                frame_index,
                timestamp_s,
                centroid: det_points[di],
                bbox: detections[di].bbox,
                confidence: detections[di].confidence,
            });
            track.misses = 0;
        }

        let mut retired = Vec::new();
        let mut kept = Vec::with_capacity(self.active.len());
        for (track, matched) in self.active.drain(..).zip(track_matched) {
            let mut track = track;
            if !matched {
                track.misses += 1;
                if track.misses >= self.config.max_misses {
                    track.active = false;
                    track.direction = assign_direction(&track, self.config.dir_deadband_px);
                    retired.push(track);
                    continue;
                }
            }
            kept.push(track);
        }
        self.active = kept;

        for (di, det) in detections.iter().enumerate() {
            if det_matched[di] {
                continue;
            }
            self.active.push(Track {
                id: self.next_id,
                observations: vec![Observation {
                    frame_index,
                    timestamp_s,
                    centroid: det_points[di],
                    bbox: det.bbox,
                    confidence: det.confidence,
                }],
                direction: Direction::Unknown,
                active: true,
                misses: 0,
            });
            self.next_id += 1;
        }
        retired
    }

    /// Retire every active track, e.g. at end of stream.
    pub fn finish(&mut self) -> Vec<Track> {
        let deadband = self.config.dir_deadband_px;
        self.active
            .drain(..)
            .map(|mut t| {
                t.active = false;
                t.direction = assign_direction(&t, deadband);
                t
            })
            .collect()
    }
}
