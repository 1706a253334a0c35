//! Detector backend contract, detection traces and the car-class filter.
//!
//! Neural detectors run outside this crate and hand over their output as a
//! line-oriented trace:
//!
//! ```text
//! #farsec-trace v1 fps=30.0 width=1920 height=1080
//! 0 812.5 400.0 901.25 466.0 car 0.91
//! ```
//!
//! Each record is `frame_index x_min y_min x_max y_max class confidence`,
//! separated by single spaces. `fps=` may be omitted when the rate is unknown.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Frame;

pub const TRACE_MAGIC: &str = "#farsec-trace v1";
pub const CAR_CLASS: &str = "car";
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.25;

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn centroid(&self) -> [f64; 2] {
        [(self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Clamp to `[0, width] x [0, height]`; `None` if nothing is left.
    pub fn clamped(&self, width: u32, height: u32) -> Option<Self> {
        let b = Self {
            x_min: self.x_min.clamp(0.0, width as f64),
            y_min: self.y_min.clamp(0.0, height as f64),
            x_max: self.x_max.clamp(0.0, width as f64),
            y_max: self.y_max.clamp(0.0, height as f64),
        };
        b.is_valid().then_some(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: u64,
    pub bbox: BoundingBox,
    pub class_label: String,
    pub confidence: f64,
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("detector backend {backend} failed: {message}")]
    Backend { backend: String, message: String },
}

/// Anything that turns a frame into bounding boxes.
pub trait DetectorBackend: Send {
    fn name(&self) -> &str;

    /// Native input size of the model, for information only.
    fn input_size(&self) -> Option<(u32, u32)> {
        None
    }

    fn detect(&mut self, frame: &Frame) -> Result<Vec<Detection>, DetectorError>;
}

/// Keep only car-class detections, preserving order.
pub fn filter_cars(detections: Vec<Detection>) -> Vec<Detection> {
    detections.into_iter().filter(|d| d.class_label == CAR_CLASS).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub fps: Option<f64>,
    pub width: u32,
    pub height: u32,
    /// Stream length in frames, when it runs past the last detection.
    pub frames: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTrace {
    pub header: TraceHeader,
    pub detections: Vec<Detection>,
}

impl DetectionTrace {
    pub fn new(header: TraceHeader) -> Self {
        Self { header, detections: Vec::new() }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_error(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Parse { line, message: message.into() }
}

fn parse_header(line: &str) -> Result<TraceHeader, TraceError> {
    let rest = line
        .strip_prefix(TRACE_MAGIC)
        .ok_or_else(|| parse_error(1, format!("expected header starting with {TRACE_MAGIC:?}")))?;
    let (mut fps, mut width, mut height, mut frames) = (None, None, None, None);
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_error(1, format!("malformed header field {field:?}")))?;
        let bad = |_| parse_error(1, format!("bad value for {key}: {value:?}"));
        match key {
            "fps" => {
                let v: f64 = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(parse_error(1, format!("fps must be positive, got {value}")));
                }
                fps = Some(v);
            }
            "width" => width = Some(value.parse::<u32>().map_err(|e| bad(e.to_string()))?),
            "height" => height = Some(value.parse::<u32>().map_err(|e| bad(e.to_string()))?),
            "frames" => frames = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            other => return Err(parse_error(1, format!("unknown header field {other:?}"))),
        }
    }
    match (width, height) {
        (Some(w), Some(h)) if w > 0 && h > 0 => Ok(TraceHeader { fps, width: w, height: h, frames }),
        _ => Err(parse_error(1, "header needs positive width= and height=")),
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<Detection, TraceError> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 7 {
        return Err(parse_error(line_no, format!("expected 7 fields, found {}", fields.len())));
    }
    let frame_index = fields[0]
        .parse::<u64>()
        .map_err(|e| parse_error(line_no, format!("frame_index: {e}")))?;
    let mut coords = [0f64; 4];
    for (slot, text) in coords.iter_mut().zip(&fields[1..5]) {
        *slot = text
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_error(line_no, format!("bad coordinate {text:?}")))?;
    }
    let bbox = BoundingBox::new(coords[0], coords[1], coords[2], coords[3]);
    if !bbox.is_valid() {
        return Err(parse_error(line_no, "box needs x_min < x_max and y_min < y_max"));
    }
    let class_label = fields[5];
    if class_label.is_empty() {
        return Err(parse_error(line_no, "empty class label"));
    }
    let confidence = fields[6]
        .parse::<f64>()
        .ok()
        .filter(|c| (0.0..=1.0).contains(c))
        .ok_or_else(|| parse_error(line_no, format!("confidence {:?} outside [0, 1]", fields[6])))?;
    Ok(Detection {
        frame_index,
        bbox,
        class_label: class_label.to_string(),
        confidence,
    })
}

pub fn parse_trace<R: BufRead>(reader: R) -> Result<DetectionTrace, TraceError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => parse_header(line?.trim_end_matches('\r'))?,
        None => return Err(parse_error(1, "empty trace file")),
    };
    let mut trace = DetectionTrace::new(header);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        trace.detections.push(parse_record(line, i + 2)?);
    }
    Ok(trace)
}

pub fn read_trace(path: &Path) -> Result<DetectionTrace, TraceError> {
    parse_trace(BufReader::new(File::open(path)?))
}

pub fn write_trace_to<W: Write>(trace: &DetectionTrace, mut out: W) -> std::io::Result<()> {
    let h = &trace.header;
    write!(out, "{TRACE_MAGIC}")?;
    if let Some(fps) = h.fps {
        write!(out, " fps={fps:?}")?;
    }
    write!(out, " width={} height={}", h.width, h.height)?;
    if let Some(frames) = h.frames {
        write!(out, " frames={frames}")?;
    }
    writeln!(out)?;
    for d in &trace.detections {
        let b = &d.bbox;
        writeln!(
            out,
            "{} {:?} {:?} {:?} {:?} {} {:?}",
            d.frame_index, b.x_min, b.y_min, b.x_max, b.y_max, d.class_label, d.confidence
        )?;
    }
    out.flush()
}

pub fn write_trace(trace: &DetectionTrace, path: &Path) -> Result<(), TraceError> {
    write_trace_to(trace, BufWriter::new(File::create(path)?))?;
    Ok(())
}

/// Replays a recorded trace, keyed by the frame's position in its source.
///
/// Detections below `min_confidence` are dropped at load; boxes are clamped
/// to the trace's frame size.
pub struct TraceBackend {
    name: String,
    by_frame: BTreeMap<u64, Vec<Detection>>,
}

impl TraceBackend {
    pub fn new(trace: &DetectionTrace, min_confidence: f64) -> Self {
        let mut by_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
        for d in &trace.detections {
            if d.confidence < min_confidence {
                continue;
            }
            let Some(bbox) = d.bbox.clamped(trace.header.width, trace.header.height) else {
                continue;
            };
            by_frame
                .entry(d.frame_index)
                .or_default()
                .push(Detection { bbox, ..d.clone() });
        }
        Self { name: "trace".into(), by_frame }
    }

    pub fn frames_with_detections(&self) -> usize {
        self.by_frame.len()
    }
}

impl DetectorBackend for TraceBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn detect(&mut self, frame: &Frame) -> Result<Vec<Detection>, DetectorError> {
        Ok(self.by_frame.get(&frame.source_index).cloned().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;

    fn det(frame: u64, class: &str, x: f64) -> Detection {
        Detection {
            frame_index: frame,
            bbox: BoundingBox::new(x, 10.0, x + 20.0, 30.0),
            class_label: class.into(),
            confidence: 0.9,
        }
    }

    fn header() -> TraceHeader {
        TraceHeader { fps: Some(30.0), width: 1920, height: 1080, frames: None }
    }

    #[test]
    fn filter_keeps_cars_only() {
        let out = filter_cars(vec![det(0, "car", 0.0), det(0, "truck", 1.0), det(0, "person", 2.0)]);
        assert_eq!(out, vec![det(0, "car", 0.0)]);
        assert!(filter_cars(vec![]).is_empty());
    }

    #[test]
    fn filter_preserves_order_in_mixed_lists() {
        let classes = ["car", "truck", "bus", "person", "motorcycle"];
        let input: Vec<Detection> = (0..100)
            .map(|i| {
                let class = if i % 8 == 0 || i % 5 == 1 || i % 7 == 3 { "car" } else { classes[1 + i % 4] };
                det(0, class, i as f64)
            })
            .collect();
        // independent oracle: index-based selection
        let expected: Vec<Detection> = (0..input.len())
            .filter(|&i| input[i].class_label == "car")
            .map(|i| input[i].clone())
            .collect();
        assert_eq!(expected.len(), 40);
        assert_eq!(filter_cars(input), expected);
    }

    #[test]
    fn header_only_trace_is_empty() {
        let t = parse_trace("#farsec-trace v1 fps=25.0 width=640 height=480\n".as_bytes()).unwrap();
        assert!(t.detections.is_empty());
        assert_eq!(t.header, TraceHeader { fps: Some(25.0), width: 640, height: 480, frames: None });
    }

    #[test]
    fn header_without_fps_is_accepted() {
        let t = parse_trace("#farsec-trace v1 width=640 height=480\n".as_bytes()).unwrap();
        assert_eq!(t.header.fps, None);
    }

    #[test]
    fn stream_length_survives_round_trip() {
        let mut trace = DetectionTrace::new(TraceHeader { fps: None, width: 64, height: 48, frames: Some(900) });
        trace.detections.push(Detection {
            frame_index: 3,
            bbox: BoundingBox::new(1.0, 2.0, 10.0, 12.0),
            class_label: CAR_CLASS.into(),
            confidence: 0.5,
        });
        let mut buf = Vec::new();
        write_trace_to(&trace, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("#farsec-trace v1 width=64 height=48 frames=900\n"));
        assert_eq!(parse_trace(buf.as_slice()).unwrap(), trace);
        assert!(parse_trace("#farsec-trace v1 width=64 height=48 frames=-1\n".as_bytes()).is_err());
    }

    #[test]
    fn inverted_box_reports_line_number() {
        let text = "#farsec-trace v1 fps=30 width=100 height=100\n0 1 1 5 5 car 0.5\n1 9 1 5 5 car 0.5\n";
        match parse_trace(text.as_bytes()) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_records_are_rejected() {
        for bad in [
            "0 1 1 5 5 car",
            "0 1 1 5 5 car 1.5",
            "x 1 1 5 5 car 0.5",
            "0 1 1 NaN 5 car 0.5",
            "0  1 1 5 5 car 0.5",
        ] {
            let text = format!("#farsec-trace v1 width=100 height=100\n{bad}\n");
            assert!(parse_trace(text.as_bytes()).is_err(), "{bad:?} accepted");
        }
        assert!(parse_trace("".as_bytes()).is_err());
        assert!(parse_trace("#farsec-trace v2 width=1 height=1\n".as_bytes()).is_err());
    }

    #[test]
    fn thousand_detection_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.trace");
        let mut trace = DetectionTrace::new(header());
        for i in 0..1000u64 {
            trace.detections.push(Detection {
                frame_index: i / 3,
                bbox: BoundingBox::new(i as f64 * 0.37, 1.0 / 3.0, i as f64 * 0.37 + 11.125, 50.5),
                class_label: if i % 4 == 0 { "truck".into() } else { "car".into() },
                confidence: (i % 100) as f64 / 99.0,
            });
        }
        write_trace(&trace, &path).unwrap();
        assert_eq!(read_trace(&path).unwrap(), trace);
    }

    #[test]
    fn backend_replays_recorded_boxes() {
        let mut trace = DetectionTrace::new(header());
        trace.detections = vec![det(7, "car", 5.0), det(7, "truck", 50.0), det(8, "car", 9.0)];
        let mut backend = TraceBackend::new(&trace, DEFAULT_MIN_CONFIDENCE);
        let frame = |i| Frame::metadata_only(i, i as f64 / 30.0, 1920, 1080, Arc::from("t"));
        assert!(backend.detect(&frame(3)).unwrap().is_empty());
        assert_eq!(backend.detect(&frame(7)).unwrap(), trace.detections[..2].to_vec());
        // replay is deterministic
        assert_eq!(backend.detect(&frame(7)).unwrap(), backend.detect(&frame(7)).unwrap());
    }

    #[test]
    fn backend_drops_low_confidence_and_clamps() {
        let mut trace = DetectionTrace::new(TraceHeader { fps: None, width: 100, height: 100, frames: None });
        let mut low = det(0, "car", 0.0);
        low.confidence = 0.1;
        let mut edge = det(0, "car", 90.0);
        edge.bbox.x_max = 130.0;
        trace.detections = vec![low, edge];
        let mut backend = TraceBackend::new(&trace, 0.25);
        let got = backend
            .detect(&Frame::metadata_only(0, 0.0, 100, 100, Arc::from("t")))
            .unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].bbox.x_max, 100.0);
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(classes in proptest::collection::vec(0usize..3, 0..50)) {
            let names = ["car", "truck", "person"];
            let d: Vec<Detection> = classes.iter().enumerate().map(|(i, &c)| det(0, names[c], i as f64)).collect();
            let once = filter_cars(d);
            prop_assert_eq!(filter_cars(once.clone()), once);
        }

        #[test]
        fn trace_round_trip(records in proptest::collection::vec(
            (0u64..500, -1e4f64..1e4, -1e4f64..1e4, 1e-3f64..500.0, 1e-3f64..500.0, 0.0f64..=1.0), 0..40)) {
            let mut trace = DetectionTrace::new(header());
            for (f, x, y, w, h, c) in records {
                trace.detections.push(Detection {
                    frame_index: f,
                    bbox: BoundingBox::new(x, y, x + w, y + h),
                    class_label: "car".into(),
                    confidence: c,
                });
            }
            let mut buf = Vec::new();
            write_trace_to(&trace, &mut buf).unwrap();
            let back = parse_trace(buf.as_slice()).unwrap();
            prop_assert_eq!(back, trace);
        }
    }
}
