//! Pipeline configuration: defaults, overlaid by a flat `key=value` file,
//! overlaid by command-line overrides.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::camera_move::MoveDetectorConfig;
use crate::kvfile::{self, KvError};
use crate::tracking::TrackerConfig;

pub const CONFIG_ENV: &str = "FARSEC_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorSpec {
    Trace(PathBuf),
    /// Supplied by the embedding program.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSpec {
    File(PathBuf),
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub move_window: usize,
    pub move_offset: f64,
    pub move_pixel_delta: f64,
    pub move_warmup: usize,
    pub min_confidence: f64,
    pub track_threshold_px: f64,
    pub track_max_misses: u32,
    pub track_min_frames: usize,
    pub track_dir_deadband: f64,
    pub lane_width_m: f64,
    pub expected_max_kmh: f64,
    pub fps_samples: usize,
    pub depth_calib_frames: usize,
    pub depth_stride: usize,
    pub fov_deg: f64,
    pub scale_min_pairs: usize,
    pub car_length_m: f64,
    pub report_interval_s: f64,
    pub window_s: f64,
    pub max_fps: f64,
    pub max_width: u32,
    pub max_height: u32,
    /// Box-blur kernel side; 0 disables.
    pub blur: u32,
    /// Salt-noise fraction; 0 disables.
    pub noise: f64,
    pub seed: u64,
    pub channel_capacity: usize,
    pub source: Option<String>,
    pub source_fps: Option<f64>,
    pub detector: Option<DetectorSpec>,
    pub depth: Option<DepthSpec>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let m = MoveDetectorConfig::default();
        let t = TrackerConfig::default();
        Self {
            move_window: m.window,
            move_offset: m.offset,
            move_pixel_delta: m.pixel_delta,
            move_warmup: m.warmup,
            min_confidence: crate::detection::DEFAULT_MIN_CONFIDENCE,
            track_threshold_px: t.threshold_px,
            track_max_misses: t.max_misses,
            track_min_frames: t.min_frames,
            track_dir_deadband: t.dir_deadband_px,
            lane_width_m: 3.5,
            expected_max_kmh: 180.0,
            fps_samples: crate::fps::DEFAULT_FPS_SAMPLES,
            depth_calib_frames: crate::depth::DEFAULT_CALIB_FRAMES,
            depth_stride: crate::depth::DEFAULT_CALIB_STRIDE,
            fov_deg: crate::depth::DEFAULT_FOV_DEG,
            scale_min_pairs: crate::scale::DEFAULT_MIN_PAIRS,
            car_length_m: crate::scale::DEFAULT_CAR_LENGTH_M,
            report_interval_s: crate::speed::DEFAULT_REPORT_INTERVAL_S,
            window_s: crate::speed::DEFAULT_WINDOW_S,
            max_fps: crate::ingest::DEFAULT_MAX_FPS,
            max_width: crate::ingest::FHD_WIDTH,
            max_height: crate::ingest::FHD_HEIGHT,
            blur: 0,
            noise: 0.0,
            seed: 0,
            channel_capacity: 64,
            source: None,
            source_fps: None,
            detector: None,
            depth: None,
            out: None,
            format: OutputFormat::Jsonl,
        }
    }
}

fn prefixed(value: &str, prefix: &str) -> Option<PathBuf> {
    value.strip_prefix(prefix).filter(|p| !p.is_empty()).map(PathBuf::from)
}

impl PipelineConfig {
    /// Apply one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        macro_rules! parse {
            ($field:expr) => {
                $field = kvfile::value(key, value)?
            };
        }
        match key {
            "move.window" => parse!(self.move_window),
            "move.offset" => parse!(self.move_offset),
            "move.pixel_delta" => parse!(self.move_pixel_delta),
            "move.warmup" => parse!(self.move_warmup),
            "detect.min_confidence" => parse!(self.min_confidence),
            "track.threshold_px" => parse!(self.track_threshold_px),
            "track.max_misses" => parse!(self.track_max_misses),
            "track.min_frames" => parse!(self.track_min_frames),
            "track.dir_deadband" => parse!(self.track_dir_deadband),
            "track.lane_width_m" => parse!(self.lane_width_m),
            "track.expected_max_kmh" => parse!(self.expected_max_kmh),
            "fps.samples" => parse!(self.fps_samples),
            "depth.calib_frames" => parse!(self.depth_calib_frames),
            "depth.stride" => parse!(self.depth_stride),
            "camera.fov_deg" => parse!(self.fov_deg),
            "scale.min_pairs" => parse!(self.scale_min_pairs),
            "scale.car_length_m" => parse!(self.car_length_m),
            "speed.report_interval" => parse!(self.report_interval_s),
            "speed.window_s" => parse!(self.window_s),
            "ingest.max_fps" => parse!(self.max_fps),
            "ingest.max_width" => parse!(self.max_width),
            "ingest.max_height" => parse!(self.max_height),
            "ingest.blur" => parse!(self.blur),
            "ingest.noise" => parse!(self.noise),
            "ingest.seed" => parse!(self.seed),
            "ingest.channel_capacity" => parse!(self.channel_capacity),
            "source" => self.source = Some(value.to_string()),
            "source.fps" => self.source_fps = Some(kvfile::value(key, value)?),
            "detector" => {
                self.detector = Some(if value == "external" {
                    DetectorSpec::External
                } else {
                    DetectorSpec::Trace(prefixed(value, "trace:").ok_or_else(|| ConfigError::Invalid {
                        key: "detector",
                        message: format!("expected trace:<path> or external, got {value:?}"),
                    })?)
                })
            }
            "depth" => {
                self.depth = Some(if value == "external" {
                    DepthSpec::External
                } else {
                    DepthSpec::File(prefixed(value, "file:").ok_or_else(|| ConfigError::Invalid {
                        key: "depth",
                        message: format!("expected file:<path> or external, got {value:?}"),
                    })?)
                })
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => {
                self.format = match value {
                    "jsonl" | "json" => OutputFormat::Jsonl,
                    "csv" => OutputFormat::Csv,
                    _ => {
                        return Err(ConfigError::Invalid {
                            key: "format",
                            message: format!("expected jsonl or csv, got {value:?}"),
                        })
                    }
                }
            }
            _ => return Err(KvError::UnknownKey(key.to_string()).into()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("move.window", self.move_window as f64),
            ("move.warmup", self.move_warmup as f64),
            ("track.threshold_px", self.track_threshold_px),
            ("track.max_misses", self.track_max_misses as f64),
            ("track.min_frames", self.track_min_frames as f64),
            ("track.lane_width_m", self.lane_width_m),
            ("track.expected_max_kmh", self.expected_max_kmh),
            ("fps.samples", self.fps_samples as f64),
            ("depth.calib_frames", self.depth_calib_frames as f64),
            ("depth.stride", self.depth_stride as f64),
            ("camera.fov_deg", self.fov_deg),
            ("scale.min_pairs", self.scale_min_pairs as f64),
            ("scale.car_length_m", self.car_length_m),
            ("speed.report_interval", self.report_interval_s),
            ("speed.window_s", self.window_s),
            ("ingest.max_fps", self.max_fps),
            ("ingest.max_width", self.max_width as f64),
            ("ingest.max_height", self.max_height as f64),
            ("ingest.channel_capacity", self.channel_capacity as f64),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid { key, message: format!("must be positive, got {v}") });
            }
        }
        let non_negative = [
            ("move.offset", self.move_offset),
            ("move.pixel_delta", self.move_pixel_delta),
            ("track.dir_deadband", self.track_dir_deadband),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid { key, message: format!("must be non-negative, got {v}") });
            }
        }
        if self.move_warmup > self.move_window {
            return Err(ConfigError::Invalid { key: "move.warmup", message: "exceeds move.window".into() });
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(ConfigError::Invalid { key: "detect.min_confidence", message: "outside [0, 1]".into() });
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(ConfigError::Invalid { key: "ingest.noise", message: "outside [0, 1]".into() });
        }
        if self.fov_deg >= 180.0 {
            return Err(ConfigError::Invalid { key: "camera.fov_deg", message: "must be below 180".into() });
        }
        if let Some(fps) = self.source_fps {
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(ConfigError::Invalid { key: "source.fps", message: format!("must be positive, got {fps}") });
            }
        }
        Ok(())
    }

    pub fn move_config(&self) -> MoveDetectorConfig {
        MoveDetectorConfig {
            window: self.move_window,
            offset: self.move_offset,
            pixel_delta: self.move_pixel_delta,
            warmup: self.move_warmup,
        }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            threshold_px: self.track_threshold_px,
            max_misses: self.track_max_misses,
            min_frames: self.track_min_frames,
            dir_deadband_px: self.track_dir_deadband,
        }
    }
}

/// Defaults, then the file at `path` if any, then `overrides` in order.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<PipelineConfig, ConfigError> {
    let mut config = PipelineConfig::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        for e in kvfile::parse(&text)? {
            config.set(&e.key, &e.value)?;
        }
    }
    for (k, v) in overrides {
        config.set(k, v)?;
    }
    config.validate()?;
    Ok(config)
}
