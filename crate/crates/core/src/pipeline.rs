//! The streaming pipeline: ingest and detection on one thread, everything
//! stateful on a single consumer.
//!
//! Per calibration epoch the consumer waits for the frame rate and a fused
//! depth field, accumulates car-length evidence from finished tracks until the
//! scale freezes, then turns every finished track into a vehicle speed and
//! publishes rolling per-direction reports. A camera move detected on the
//! pixels starts a new epoch and throws away everything learned in the old one.

use std::io::Write;
use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread;

use serde::Serialize;
use thiserror::Error;

use crate::camera_move::{MoveDetector, MoveError};
use crate::config::{DepthSpec, DetectorSpec, OutputFormat, PipelineConfig};
use crate::depth::{calibrate_depth, CameraIntrinsics, DepthBackend, DepthError, DepthField, FileDepthBackend};
use crate::detection::{filter_cars, read_trace, CAR_CLASS, Detection, DetectorBackend, DetectorError, TraceBackend};
use crate::fps::{estimate_fps, FpsEstimate};
use crate::ingest::{
    apply_blur, apply_salt_noise, open_source, Frame, FrameSource, IngestError, SourceConfig, DEFAULT_NOISE_VALUE,
};
use crate::scale::{collect_pairs, estimate_scale, EvidencePair, ScaleCalibration};
use crate::speed::{vehicle_speed, SpeedReport, SpeedWindow, VehicleSpeed};
use crate::tracking::{max_trackable_speed, Track, Tracker};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("source: {0}")]
    Source(#[from] IngestError),
    #[error("calibration: {0}")]
    Calibration(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    CameraMove(#[from] MoveError),
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
}

impl From<DepthError> for PipelineError {
    fn from(e: DepthError) -> Self {
        PipelineError::Calibration(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Config(PipelineConfig),
    Fps(FpsEstimate),
    Recalibrate { frame_index: u64, changed_fraction: f64, epoch: u64 },
    Depth { epoch: u64, frame_index: u64, frames_averaged: usize },
    Scale(ScaleCalibration),
    Warning { frame_index: Option<u64>, message: String },
    Vehicle(VehicleSpeed),
}

/// Receives everything the pipeline publishes, in order.
pub trait Sink {
    fn log(&mut self, record: &LogRecord) -> std::io::Result<()>;

    fn report(&mut self, report: &SpeedReport) -> std::io::Result<()>;

    /// Finished tracks long enough to be used, with their epoch.
    fn track(&mut self, _track: &Track, _epoch: u64) -> std::io::Result<()> {
        Ok(())
    }
}

/// Keeps everything in memory.
#[derive(Debug, Default)]
pub struct CollectingSink {
    pub logs: Vec<LogRecord>,
    pub reports: Vec<SpeedReport>,
    pub tracks: Vec<(u64, Track)>,
}

impl CollectingSink {
    pub fn vehicles(&self) -> impl Iterator<Item = &VehicleSpeed> {
        self.logs.iter().filter_map(|r| match r {
            LogRecord::Vehicle(v) => Some(v),
            _ => None,
        })
    }

    pub fn scales(&self) -> impl Iterator<Item = &ScaleCalibration> {
        self.logs.iter().filter_map(|r| match r {
            LogRecord::Scale(s) => Some(s),
            _ => None,
        })
    }

    pub fn recalibrations(&self) -> impl Iterator<Item = u64> + '_ {
        self.logs.iter().filter_map(|r| match r {
            LogRecord::Recalibrate { frame_index, .. } => Some(*frame_index),
            _ => None,
        })
    }
}

impl Sink for CollectingSink {
    fn log(&mut self, record: &LogRecord) -> std::io::Result<()> {
        self.logs.push(record.clone());
        Ok(())
    }

    fn report(&mut self, report: &SpeedReport) -> std::io::Result<()> {
        self.reports.push(report.clone());
        Ok(())
    }

    fn track(&mut self, track: &Track, epoch: u64) -> std::io::Result<()> {
        self.tracks.push((epoch, track.clone()));
        Ok(())
    }
}

/// Reports as JSON lines or CSV, logs as JSON lines, tracks as trace lines
/// with the track id and epoch appended.
pub struct WriterSink {
    reports: Box<dyn Write>,
    csv: Option<csv::Writer<Box<dyn Write>>>,
    logs: Box<dyn Write>,
    tracks: Option<Box<dyn Write>>,
}

impl WriterSink {
    pub fn new(
        reports: Box<dyn Write>,
        format: OutputFormat,
        logs: Box<dyn Write>,
        tracks: Option<Box<dyn Write>>,
    ) -> Self {
        let (reports, csv) = match format {
            OutputFormat::Jsonl => (reports, None),
            OutputFormat::Csv => (Box::new(std::io::sink()) as Box<dyn Write>, Some(csv::Writer::from_writer(reports))),
        };
        Self { reports, csv, logs, tracks }
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.reports.flush()?;
        if let Some(w) = &mut self.csv {
            w.flush()?;
        }
        if let Some(w) = &mut self.tracks {
            w.flush()?;
        }
        self.logs.flush()
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

impl Sink for WriterSink {
    fn log(&mut self, record: &LogRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.logs, record)?;
        self.logs.write_all(b"\n")
    }

    fn report(&mut self, report: &SpeedReport) -> std::io::Result<()> {
        match &mut self.csv {
            Some(w) => w.serialize(report).map_err(csv_io),
            None => {
                serde_json::to_writer(&mut self.reports, report)?;
                self.reports.write_all(b"\n")
            }
        }
    }

    fn track(&mut self, track: &Track, epoch: u64) -> std::io::Result<()> {
        let Some(w) = &mut self.tracks else {
            return Ok(());
        };
        for o in &track.observations {
            let b = &o.bbox;
            writeln!(
                w,
                "{} {:?} {:?} {:?} {:?} {CAR_CLASS} {:?} {} {epoch}",
                o.frame_index, b.x_min, b.y_min, b.x_max, b.y_max, o.confidence, track.id
            )?;
        }
        Ok(())
    }
}

/// What the ingest thread hands over per frame.
type Item = Result<(Frame, Vec<Detection>), PipelineError>;

/// Box blur of side `blur` (skipped below 2), then salt noise of `fraction`
/// seeded per frame from `seed` and the frame index. Frames without pixels
/// pass through.
pub fn augment(frame: Frame, blur: u32, fraction: f64, seed: u64) -> Result<Frame, IngestError> {
    let mut frame = frame;
    if blur > 1 && frame.raster.is_some() {
        frame = apply_blur(&frame, blur)?;
    }
    if fraction > 0.0 && frame.raster.is_some() {
        frame = apply_salt_noise(&frame, fraction, DEFAULT_NOISE_VALUE, seed.wrapping_add(frame.index))?;
    }
    Ok(frame)
}

fn spawn_ingest(
    config: &PipelineConfig,
    mut source: Box<dyn FrameSource>,
    mut detector: Box<dyn DetectorBackend>,
) -> (Receiver<Item>, thread::JoinHandle<()>) {
    let (tx, rx) = sync_channel::<Item>(config.channel_capacity);
    let config = config.clone();
    let handle = thread::spawn(move || {
        for next in source.by_ref() {
            let item = next
                .and_then(|f| augment(f, config.blur, config.noise, config.seed))
                .map_err(PipelineError::from)
                .and_then(|frame| {
                    let dets = filter_cars(detector.detect(&frame)?);
                    Ok((frame, dets))
                });
            let failed = item.is_err();
            if tx.send(item).is_err() || failed {
                return;
            }
        }
    });
    (rx, handle)
}

/// State of the current calibration epoch.
struct Epoch {
    id: u64,
    start_index: u64,
    tracker: Tracker,
    calib_frames: Vec<Frame>,
    depth: Option<(DepthField, CameraIntrinsics)>,
    pairs: Vec<EvidencePair>,
    scale: Option<ScaleCalibration>,
    pending: Vec<Track>,
    /// Leading pending tracks already mined for evidence.
    harvested: usize,
    window: SpeedWindow,
}

impl Epoch {
    fn new(id: u64, start_index: u64, config: &PipelineConfig) -> Self {
        Self {
            id,
            start_index,
            tracker: Tracker::new(config.tracker_config()),
            calib_frames: Vec::new(),
            depth: None,
            pairs: Vec::new(),
            scale: None,
            pending: Vec::new(),
            harvested: 0,
            window: SpeedWindow::new(config.window_s, id),
        }
    }
}

struct Consumer<'a> {
    config: &'a PipelineConfig,
    depth_backend: Arc<dyn DepthBackend>,
    sink: &'a mut dyn Sink,
    mover: MoveDetector,
    declared_fps: Option<f64>,
    fps: Option<f64>,
    timestamps: Vec<f64>,
    epoch: Epoch,
    next_report_t: f64,
    last_index: Option<u64>,
}

impl Consumer<'_> {
    fn set_fps(&mut self, estimate: FpsEstimate) -> Result<(), PipelineError> {
        self.fps = Some(estimate.fps);
        self.sink.log(&LogRecord::Fps(estimate))?;
        if let Ok(v_max) = max_trackable_speed(self.config.lane_width_m, estimate.fps) {
            let kmh = v_max * 3.6;
            if kmh < self.config.expected_max_kmh {
                self.warn(
                    None,
                    format!(
                        "at {:.2} fps cars above {kmh:.0} km/h move more than a lane per frame (expected up to {:.0})",
                        estimate.fps, self.config.expected_max_kmh
                    ),
                )?;
            }
        }
        Ok(())
    }

    fn warn(&mut self, frame_index: Option<u64>, message: String) -> Result<(), PipelineError> {
        self.sink.log(&LogRecord::Warning { frame_index, message })?;
        Ok(())
    }

    fn observe_fps(&mut self, frame: &Frame) -> Result<(), PipelineError> {
        if self.fps.is_some() {
            return Ok(());
        }
        if let Some(fps) = self.declared_fps {
            let est = FpsEstimate::from_metadata(fps).map_err(|e| PipelineError::Config(e.to_string()))?;
            return self.set_fps(est);
        }
        self.timestamps.push(frame.timestamp_s);
        if self.timestamps.len() >= self.config.fps_samples.max(2) {
            let est = estimate_fps(&self.timestamps, self.config.fps_samples)
                .map_err(|e| PipelineError::Source(IngestError::Decode(e.to_string())))?;
            self.timestamps.clear();
            self.set_fps(est)?;
        }
        Ok(())
    }

    fn calibrate(&mut self, frame_index: u64) -> Result<(), PipelineError> {
        let frames = std::mem::take(&mut self.epoch.calib_frames);
        let Some(first) = frames.first() else {
            return Ok(());
        };
        let k = CameraIntrinsics::from_fov(first.width, first.height, self.config.fov_deg)?;
        let field = calibrate_depth(&frames, self.depth_backend.as_ref(), self.epoch.id)?;
        self.sink.log(&LogRecord::Depth {
            epoch: self.epoch.id,
            frame_index,
            frames_averaged: field.frames_averaged,
        })?;
        self.epoch.depth = Some((field, k));
        Ok(())
    }

    fn observe_depth(&mut self, frame: &Frame) -> Result<(), PipelineError> {
        if self.epoch.depth.is_some() {
            return Ok(());
        }
        let offset = frame.index - self.epoch.start_index;
        if offset % self.config.depth_stride as u64 == 0 {
            self.epoch.calib_frames.push(frame.clone());
            if self.epoch.calib_frames.len() >= self.config.depth_calib_frames {
                self.calibrate(frame.index)?;
            }
        }
        Ok(())
    }

    fn recalibrate(&mut self, frame_index: u64, changed_fraction: f64) -> Result<(), PipelineError> {
        let id = self.epoch.id + 1;
        let dropped = self.epoch.pending.len() + self.epoch.tracker.active_tracks().len();
        self.epoch = Epoch::new(id, frame_index, self.config);
        self.sink.log(&LogRecord::Recalibrate { frame_index, changed_fraction, epoch: id })?;
        if dropped > 0 {
            self.warn(Some(frame_index), format!("camera moved; discarded {dropped} tracks"))?;
        }
        Ok(())
    }

    fn retire(&mut self, tracks: Vec<Track>) -> Result<(), PipelineError> {
        for t in tracks {
            if t.observations.len() >= self.config.track_min_frames {
                self.sink.track(&t, self.epoch.id)?;
                self.epoch.pending.push(t);
            }
        }
        Ok(())
    }

    /// Feed pending tracks into the scale estimate and, once it is frozen,
    /// into speeds.
    fn drain_pending(&mut self) -> Result<(), PipelineError> {
        let (Some(fps), Some((field, k))) = (self.fps, &self.epoch.depth) else {
            return Ok(());
        };
        if self.epoch.pending.is_empty() {
            return Ok(());
        }
        if self.epoch.scale.is_none() {
            let fresh = &self.epoch.pending[self.epoch.harvested..];
            let new_pairs: Vec<EvidencePair> =
                fresh.iter().flat_map(|t| collect_pairs(t, field, k, self.config.car_length_m)).collect();
            self.epoch.harvested = self.epoch.pending.len();
            self.epoch.pairs.extend(new_pairs);
            match estimate_scale(&self.epoch.pairs, self.config.scale_min_pairs, self.epoch.id) {
                Ok(s) => {
                    self.epoch.scale = Some(s);
                    self.epoch.pairs.clear();
                    self.sink.log(&LogRecord::Scale(s))?;
                }
                Err(_) => return Ok(()),
            }
        }
        let scale = self.epoch.scale.expect("frozen above");
        let (field, k) = self.epoch.depth.as_ref().expect("checked above");
        let mut speeds = Vec::new();
        let mut warnings = Vec::new();
        self.epoch.harvested = 0;
        for t in self.epoch.pending.drain(..) {
            match vehicle_speed(&t, field, k, &scale, fps, self.config.track_dir_deadband) {
                Ok(v) => speeds.push(v),
                Err(e) => warnings.push((t.last_frame(), e.to_string())),
            }
        }
        for v in speeds {
            self.sink.log(&LogRecord::Vehicle(v.clone()))?;
            self.epoch.window.push(v);
        }
        for (frame, message) in warnings {
            self.warn(Some(frame), message)?;
        }
        Ok(())
    }

    fn publish(&mut self, t: f64) -> Result<(), PipelineError> {
        for r in self.epoch.window.report(t) {
            if r.count >= 1 {
                self.sink.report(&r)?;
            }
        }
        Ok(())
    }

    fn maybe_report(&mut self, frame_index: u64) -> Result<(), PipelineError> {
        let (Some(fps), Some(_)) = (self.fps, self.epoch.scale) else {
            return Ok(());
        };
        let t = frame_index as f64 / fps;
        if t + 1e-9 >= self.next_report_t {
            self.publish(t)?;
            let interval = self.config.report_interval_s;
            self.next_report_t = ((t / interval).floor() + 1.0) * interval;
        }
        Ok(())
    }

    fn frame(&mut self, frame: Frame, detections: Vec<Detection>) -> Result<(), PipelineError> {
        self.last_index = Some(frame.index);
        if frame.raster.is_some() {
            let verdict = self.mover.observe(&frame)?;
            if verdict.triggered {
                self.recalibrate(frame.index, verdict.changed_fraction)?;
            }
        }
        self.observe_fps(&frame)?;
        self.observe_depth(&frame)?;
        let retired = self.epoch.tracker.update(frame.index, frame.timestamp_s, &detections);
        self.retire(retired)?;
        self.drain_pending()?;
        self.maybe_report(frame.index)
    }

    fn finish(&mut self) -> Result<(), PipelineError> {
        let Some(last) = self.last_index else {
            return self.warn(None, "source produced no frames".into());
        };
        if self.fps.is_none() {
            if self.timestamps.len() >= 2 {
                let ts = std::mem::take(&mut self.timestamps);
                let est = estimate_fps(&ts, ts.len())
                    .map_err(|e| PipelineError::Source(IngestError::Decode(e.to_string())))?;
                self.set_fps(est)?;
            } else {
                return self.warn(None, "too few frames to measure the frame rate".into());
            }
        }
        if self.epoch.depth.is_none() {
            self.calibrate(last)?;
        }
        let retired = self.epoch.tracker.finish();
        self.retire(retired)?;
        self.drain_pending()?;
        if self.epoch.scale.is_none() {
            self.warn(Some(last), format!("epoch {} ended without a metric scale", self.epoch.id))?;
            return Ok(());
        }
        let fps = self.fps.expect("set above");
        self.publish(last as f64 / fps)
    }
}

/// Run the pipeline over an already opened source.
///
/// The source is consumed as is, without further normalization.
pub fn run_stream(
    config: &PipelineConfig,
    source: Box<dyn FrameSource>,
    detector: Box<dyn DetectorBackend>,
    depth: Arc<dyn DepthBackend>,
    sink: &mut dyn Sink,
) -> Result<(), PipelineError> {
    config.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    sink.log(&LogRecord::Config(config.clone()))?;
    let declared_fps = source.declared_fps();
    let mover = MoveDetector::new(config.move_config()).map_err(|e| PipelineError::Config(e.to_string()))?;
    let (rx, handle) = spawn_ingest(config, source, detector);
    let mut consumer = Consumer {
        config,
        depth_backend: depth,
        sink,
        mover,
        declared_fps,
        fps: None,
        timestamps: Vec::new(),
        epoch: Epoch::new(0, 0, config),
        next_report_t: 0.0,
        last_index: None,
    };
    let mut result = Ok(());
    for item in rx.iter() {
        result = item.and_then(|(frame, dets)| consumer.frame(frame, dets));
        if result.is_err() {
            break;
        }
    }
    drop(rx);
    handle.join().map_err(|_| PipelineError::Source(IngestError::Decode("ingest thread panicked".into())))?;
    result?;
    consumer.finish()
}

/// Open the configured source and file backends, then run.
pub fn run(config: &PipelineConfig, sink: &mut dyn Sink) -> Result<(), PipelineError> {
    let uri = config
        .source
        .clone()
        .ok_or_else(|| PipelineError::Config("no source given".into()))?;
    let detector_spec = match &config.detector {
        Some(spec) => spec.clone(),
        None if uri.ends_with(".trace") => DetectorSpec::Trace(uri.clone().into()),
        None => return Err(PipelineError::Config("no detector given (detector=trace:<path>)".into())),
    };
    let detector: Box<dyn DetectorBackend> = match detector_spec {
        DetectorSpec::Trace(path) => {
            let trace = read_trace(&path).map_err(|e| PipelineError::Source(IngestError::SourceUnavailable(format!("{}: {e}", path.display()))))?;
            Box::new(TraceBackend::new(&trace, config.min_confidence))
        }
        DetectorSpec::External => {
            return Err(PipelineError::Config("detector=external needs an embedding program".into()))
        }
    };
    let depth: Arc<dyn DepthBackend> = match &config.depth {
        Some(DepthSpec::File(path)) => Arc::new(open_depth(path)?),
        Some(DepthSpec::External) => {
            return Err(PipelineError::Config("depth=external needs an embedding program".into()))
        }
        None => return Err(PipelineError::Config("no depth backend given (depth=file:<path>)".into())),
    };
    let source = open_source(&SourceConfig {
        uri,
        max_fps: config.max_fps,
        max_width: config.max_width,
        max_height: config.max_height,
        declared_fps: config.source_fps,
    })?;
    run_stream(config, Box::new(source), detector, depth, sink)
}

fn open_depth(path: &Path) -> Result<FileDepthBackend, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Source(IngestError::SourceUnavailable(format!("{}: not found", path.display()))));
    }
    Ok(FileDepthBackend::open(path)?)
}
