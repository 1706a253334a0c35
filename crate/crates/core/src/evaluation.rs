//! Benchmark statistics over ground-truth / prediction pairs.
//!
//! Errors are `abs = |v_pred - v_true|` and `rel = 100 · abs / v_true`.
//! Medians take the lower middle element, percentiles use nearest rank.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::CarTruth;
use crate::tracking::Direction;

pub const TOTAL_LABEL: &str = "TOTAL";
pub const DEFAULT_VIDEO: &str = "default";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction for unknown vehicle {video}/{car_id}")]
    UnknownVehicle { video: String, car_id: u64 },
    #[error("vehicle {video}/{car_id} has non-positive true speed {speed}")]
    InvalidTruth { video: String, car_id: u64, speed: f64 },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
}

fn default_video() -> String {
    DEFAULT_VIDEO.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRecord {
    #[serde(default = "default_video")]
    pub video: String,
    pub car_id: u64,
    pub speed_kmh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub video: String,
    pub car_id: u64,
    pub abs_err: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matched {
    pub records: Vec<ErrorRecord>,
    /// Ground-truth vehicles without a prediction.
    pub uncovered: Vec<(String, u64)>,
}

pub fn per_vehicle_errors(gt: &[SpeedRecord], pred: &[SpeedRecord]) -> Result<Matched, EvalError> {
    let truth: HashMap<(&str, u64), f64> = gt.iter().map(|r| ((r.video.as_str(), r.car_id), r.speed_kmh)).collect();
    let mut predicted: HashMap<(&str, u64), f64> = HashMap::new();
    for p in pred {
        let key = (p.video.as_str(), p.car_id);
        if !truth.contains_key(&key) {
            return Err(EvalError::UnknownVehicle { video: p.video.clone(), car_id: p.car_id });
        }
        predicted.insert(key, p.speed_kmh);
    }
    let mut records = Vec::new();
    let mut uncovered = Vec::new();
    let mut keys: Vec<&(&str, u64)> = truth.keys().collect();
    keys.sort();
    for key in keys {
        let v_true = truth[key];
        let Some(&v_pred) = predicted.get(key) else {
            uncovered.push((key.0.to_string(), key.1));
            continue;
        };
        if !(v_true > 0.0) {
            return Err(EvalError::InvalidTruth { video: key.0.to_string(), car_id: key.1, speed: v_true });
        }
        let abs_err = (v_pred - v_true).abs();
        records.push(ErrorRecord {
            video: key.0.to_string(),
            car_id: key.1,
            abs_err,
            rel_err: 100.0 * abs_err / v_true,
        });
    }
    Ok(Matched { records, uncovered })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub support: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub worst: f64,
}

/// Summary statistics of a non-empty sample.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(Summary {
        support: n,
        mean: sorted.iter().sum::<f64>() / n as f64,
        median: sorted[(n - 1) / 2],
        p95: sorted[nearest_rank(n, 95) - 1],
        worst: sorted[n - 1],
    })
}

/// 1-based nearest rank `ceil(percent · n / 100)`, at least 1.
pub fn nearest_rank(n: usize, percent: usize) -> usize {
    (percent * n).div_ceil(100).clamp(1, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoStats {
    pub video: String,
    pub abs: Summary,
    pub rel: Summary,
}

/// Per-video statistics plus a TOTAL row over the pooled records.
pub fn aggregate(records: &[ErrorRecord]) -> Result<(Vec<VideoStats>, VideoStats), EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut groups: BTreeMap<&str, Vec<&ErrorRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.video).or_default().push(r);
    }
    let stats = |video: &str, rs: &[&ErrorRecord]| VideoStats {
        video: video.to_string(),
        abs: summarize(&rs.iter().map(|r| r.abs_err).collect::<Vec<_>>()).expect("group is non-empty"),
        rel: summarize(&rs.iter().map(|r| r.rel_err).collect::<Vec<_>>()).expect("group is non-empty"),
    };
    let per_video = groups.iter().map(|(v, rs)| stats(v, rs)).collect();
    let all: Vec<&ErrorRecord> = records.iter().collect();
    Ok((per_video, stats(TOTAL_LABEL, &all)))
}

/// Cumulative count of absolute errors at or below each bin's upper edge.
pub fn cumulative_histogram(records: &[ErrorRecord], bin_width_kmh: f64) -> Vec<(f64, usize)> {
    assert!(bin_width_kmh > 0.0, "bin width must be positive");
    if records.is_empty() {
        return Vec::new();
    }
    let bin_of = |e: f64| ((e / bin_width_kmh).ceil() as usize).max(1);
    let bins = records.iter().map(|r| bin_of(r.abs_err)).max().unwrap_or(1);
    let mut counts = vec![0usize; bins + 1];
    for r in records {
        counts[bin_of(r.abs_err)] += 1;
    }
    let mut total = 0;
    (1..=bins)
        .map(|b| {
            total += counts[b];
            (b as f64 * bin_width_kmh, total)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: f64,
    pub direction: Direction,
    pub v_star_kmh: Option<f64>,
    pub count: usize,
    pub window_s: f64,
    pub epoch: u64,
}

/// Bridge windowed output to per-vehicle predictions: each ground-truth car
/// gets the first report of its direction at or after the moment it was last
/// seen, or the latest earlier one when none follows. Cars never seen, or
/// without any report value, get no prediction.
pub fn bridge_reports(gt: &[CarTruth], reports: &[ReportRow], fps: f64, video: &str) -> Vec<SpeedRecord> {
    let mut by_dir: HashMap<Direction, Vec<(f64, f64)>> = HashMap::new();
    for r in reports {
        if let Some(v) = r.v_star_kmh {
            by_dir.entry(r.direction).or_default().push((r.t, v));
        }
    }
    for series in by_dir.values_mut() {
        series.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    gt.iter()
        .filter_map(|car| {
            let t_last = car.last_frame? as f64 / fps;
            let series = by_dir.get(&car.direction)?;
            let i = series.partition_point(|(t, _)| *t < t_last);
            let (_, v) = series.get(i).or_else(|| i.checked_sub(1).and_then(|j| series.get(j)))?;
            Some(SpeedRecord { video: video.to_string(), car_id: car.car_id, speed_kmh: *v })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct TruthRow {
    #[serde(default = "default_video")]
    video: String,
    car_id: u64,
    speed_kmh: f64,
    #[serde(default)]
    direction: Option<Direction>,
    #[serde(default)]
    first_frame: Option<u64>,
    #[serde(default)]
    last_frame: Option<u64>,
}

/// Ground truth in the simulator's CSV layout, optionally with a `video`
/// column. Returns rows grouped per video.
pub fn read_truth(path: &Path) -> Result<Vec<(String, CarTruth)>, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<TruthRow>()
        .map(|row| {
            let row = row?;
            Ok((
                row.video,
                CarTruth {
                    car_id: row.car_id,
                    speed_kmh: row.speed_kmh,
                    direction: row.direction.unwrap_or(Direction::Unknown),
                    first_frame: row.first_frame,
                    last_frame: row.last_frame,
                },
            ))
        })
        .collect()
}

pub enum Predictions {
    PerVehicle(Vec<SpeedRecord>),
    Reports(Vec<ReportRow>),
}

/// Either per-vehicle rows (`car_id,speed_kmh[,video]`) or a report stream
/// as written by `farsec run`, told apart by the header. Files ending in
/// `.jsonl` are read as JSON-lines reports.
pub fn read_predictions(path: &Path) -> Result<Predictions, EvalError> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let text = std::fs::read_to_string(path)?;
        let rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Format(format!("line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        return Ok(Predictions::Reports(rows));
    }
    let mut r = csv::Reader::from_path(path)?;
    let is_report = r.headers()?.iter().any(|h| h == "v_star_kmh");
    if is_report {
        Ok(Predictions::Reports(r.deserialize().collect::<Result<_, _>>()?))
    } else {
        Ok(Predictions::PerVehicle(r.deserialize().collect::<Result<_, _>>()?))
    }
}

#[derive(Serialize)]
struct TableRow<'a> {
    video: &'a str,
    support: usize,
    mean: f64,
    median: f64,
    p95: f64,
    worst: f64,
}

fn write_table<'a>(path: &Path, rows: impl Iterator<Item = (&'a str, &'a Summary)>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for (video, s) in rows {
        w.serialize(TableRow {
            video,
            support: s.support,
            mean: s.mean,
            median: s.median,
            p95: s.p95,
            worst: s.worst,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Write `per_video.csv`, `total.csv`, their relative-error counterparts,
/// `cumulative.csv` and `uncovered.csv` into `dir`.
pub fn write_evaluation(dir: &Path, matched: &Matched, bin_width_kmh: f64) -> Result<(Vec<VideoStats>, VideoStats), EvalError> {
    std::fs::create_dir_all(dir)?;
    let (per_video, total) = aggregate(&matched.records)?;
    write_table(&dir.join("per_video.csv"), per_video.iter().map(|s| (s.video.as_str(), &s.abs)))?;
    write_table(&dir.join("total.csv"), std::iter::once((total.video.as_str(), &total.abs)))?;
    write_table(&dir.join("per_video_rel.csv"), per_video.iter().map(|s| (s.video.as_str(), &s.rel)))?;
    write_table(&dir.join("total_rel.csv"), std::iter::once((total.video.as_str(), &total.rel)))?;
    let mut w = csv::Writer::from_path(dir.join("cumulative.csv"))?;
    w.write_record(["abs_err_kmh", "cumulative_count"])?;
    for (upper, count) in cumulative_histogram(&matched.records, bin_width_kmh) {
        w.write_record([upper.to_string(), count.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("uncovered.csv"))?;
    w.write_record(["video", "car_id"])?;
    for (video, id) in &matched.uncovered {
        w.write_record([video.clone(), id.to_string()])?;
    }
    w.flush()?;
    Ok((per_video, total))
}
