//! Synthetic straight-road scenes with known geometry.
//!
//! World frame: X lateral, Y forward along the road, Z up. The camera sits at
//! `(0, 0, height_m)` looking along +Y, pitched down by `pitch_deg`, with no
//! roll. Cars drive along lane centerlines either towards the camera
//! (decreasing Y, so increasing image v) or away from it.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{write_depth, CameraIntrinsics, DepthBackend, DepthError, DepthField, DepthSampler};
use crate::detection::{write_trace, BoundingBox, Detection, DetectionTrace, TraceHeader, CAR_CLASS};
use crate::ingest::{write_image, Frame, FrameSource, IngestError, Raster};
use crate::kvfile::{self, KvError};
use crate::tracking::Direction;

pub const SKY_LEVEL: u8 = 170;
pub const ROAD_LEVEL: u8 = 90;
pub const CAR_LEVEL: u8 = 200;
/// Depth written for rays that never meet the road, in meters.
pub const FAR_DEPTH_M: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("trace: {0}")]
    Trace(#[from] crate::detection::TraceError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    /// Driving towards the camera.
    Toward,
    Away,
}

impl Heading {
    pub fn image_direction(self) -> Direction {
        match self {
            Heading::Toward => Direction::YIncreasing,
            Heading::Away => Direction::YDecreasing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarSpec {
    pub length_m: f64,
    pub speed_mps: f64,
    pub lane: u32,
    pub spawn_s: f64,
    pub heading: Heading,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub fov_deg: f64,
    pub camera_height_m: f64,
    pub pitch_deg: f64,
    pub lanes: u32,
    pub lane_width_m: f64,
    pub road_length_m: f64,
    pub body_width_m: f64,
    /// Zero gives flat footprints on the road plane.
    pub body_height_m: f64,
    pub fps: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub true_scale: f64,
    /// Half-width of uniform noise added to every box coordinate.
    pub jitter_px: f64,
    pub cars: Vec<CarSpec>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
            fov_deg: 60.0,
            camera_height_m: 8.0,
            pitch_deg: 12.0,
            lanes: 2,
            lane_width_m: 3.5,
            road_length_m: 150.0,
            body_width_m: 1.8,
            body_height_m: 1.5,
            fps: 30.0,
            duration_s: 60.0,
            seed: 0,
            true_scale: 1.0,
            jitter_px: 0.0,
            cars: Vec::new(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be positive".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        if !(self.lane_width_m > 0.0) || self.lanes == 0 {
            return bad("need at least one lane of positive width".into());
        }
        for (name, v) in [
            ("camera.height_m", self.camera_height_m),
            ("road.length_m", self.road_length_m),
            ("true_scale", self.true_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("duration_s", self.duration_s),
            ("body.width_m", self.body_width_m),
            ("body.height_m", self.body_height_m),
            ("jitter_px", self.jitter_px),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.pitch_deg > -90.0 && self.pitch_deg < 90.0) {
            return bad(format!("pitch {} deg outside (-90, 90)", self.pitch_deg));
        }
        for (i, c) in self.cars.iter().enumerate() {
            if !(c.speed_mps >= 0.0 && c.speed_mps.is_finite()) {
                return bad(format!("car {i}: speed must be non-negative"));
            }
            if !(c.length_m > 0.0) {
                return bad(format!("car {i}: length must be positive"));
            }
            if c.lane >= self.lanes {
                return bad(format!("car {i}: lane {} but road has {} lanes", c.lane, self.lanes));
            }
        }
        self.intrinsics()?;
        Ok(())
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, DepthError> {
        CameraIntrinsics::from_fov(self.width, self.height, self.fov_deg)
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration_s * self.fps).round() as u64
    }

    pub fn lane_center_x(&self, lane: u32) -> f64 {
        (lane as f64 - (self.lanes as f64 - 1.0) / 2.0) * self.lane_width_m
    }

    fn pose(&self) -> Pose {
        let (s, c) = self.pitch_deg.to_radians().sin_cos();
        Pose { height: self.camera_height_m, sin_p: s, cos_p: c }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pose {
    height: f64,
    sin_p: f64,
    cos_p: f64,
}

impl Pose {
    fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let (y, dz) = (p[1], p[2] - self.height);
        [p[0], -y * self.sin_p - dz * self.cos_p, y * self.cos_p - dz * self.sin_p]
    }

    /// Distance from the camera to where the camera-frame ray meets the road.
    fn road_range(&self, ray: [f64; 3]) -> Option<f64> {
        let dz = -ray[1] * self.cos_p - ray[2] * self.sin_p;
        (dz < 0.0).then(|| {
            let t = self.height / -dz;
            t * (ray[0] * ray[0] + ray[1] * ray[1] + ray[2] * ray[2]).sqrt()
        })
    }
}

/// Parse a scene file. Besides the scalar keys, cars come as `car.N.*` groups
/// and periodic traffic as `flow.N.*` groups that expand into cars.
pub fn parse_scene_spec(text: &str) -> Result<SceneSpec, SimError> {
    let mut spec = SceneSpec::default();
    let mut cars: std::collections::BTreeMap<u32, PartialCar> = Default::default();
    let mut flows: std::collections::BTreeMap<u32, PartialFlow> = Default::default();
    for e in kvfile::parse(text)? {
        let (k, v) = (e.key.as_str(), e.value.as_str());
        match k {
            "image.width" => spec.width = kvfile::value(k, v)?,
            "image.height" => spec.height = kvfile::value(k, v)?,
            "camera.fov_deg" => spec.fov_deg = kvfile::value(k, v)?,
            "camera.height_m" => spec.camera_height_m = kvfile::value(k, v)?,
            "camera.pitch_deg" => spec.pitch_deg = kvfile::value(k, v)?,
            "road.lanes" => spec.lanes = kvfile::value(k, v)?,
            "road.lane_width_m" => spec.lane_width_m = kvfile::value(k, v)?,
            "road.length_m" => spec.road_length_m = kvfile::value(k, v)?,
            "body.width_m" => spec.body_width_m = kvfile::value(k, v)?,
            "body.height_m" => spec.body_height_m = kvfile::value(k, v)?,
            "fps" => spec.fps = kvfile::value(k, v)?,
            "duration_s" => spec.duration_s = kvfile::value(k, v)?,
            "seed" => spec.seed = kvfile::value(k, v)?,
            "true_scale" => spec.true_scale = kvfile::value(k, v)?,
            "jitter_px" => spec.jitter_px = kvfile::value(k, v)?,
            _ => {
                let parts: Vec<&str> = k.splitn(3, '.').collect();
                let [group, n, field] = parts.as_slice() else {
                    return Err(KvError::UnknownKey(k.into()).into());
                };
                let n: u32 = kvfile::value(k, n)?;
                match *group {
                    "car" => cars.entry(n).or_default().set(k, field, v)?,
                    "flow" => flows.entry(n).or_default().set(k, field, v)?,
                    _ => return Err(KvError::UnknownKey(k.into()).into()),
                }
            }
        }
    }
    for (n, c) in cars {
        spec.cars.push(c.common.finish(&format!("car.{n}"), c.spawn_s.unwrap_or(0.0))?);
    }
    for (n, f) in flows {
        let interval = f.interval_s.ok_or_else(|| SimError::InvalidSpec(format!("flow.{n}.interval_s is required")))?;
        if !(interval > 0.0) {
            return Err(SimError::InvalidSpec(format!("flow.{n}.interval_s must be positive")));
        }
        let start = f.start_s.unwrap_or(0.0);
        let mut t = start;
        let mut emitted = 0;
        while t < spec.duration_s && f.count.is_none_or(|c| emitted < c) {
            spec.cars.push(f.common.clone().finish(&format!("flow.{n}"), t)?);
            emitted += 1;
            t = start + interval * emitted as f64;
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn read_scene_spec(path: &Path) -> Result<SceneSpec, SimError> {
    parse_scene_spec(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Default)]
struct CarFields {
    length_m: Option<f64>,
    speed_mps: Option<f64>,
    lane: Option<u32>,
    heading: Option<Heading>,
}

impl CarFields {
    fn set(&mut self, key: &str, field: &str, v: &str) -> Result<bool, KvError> {
        match field {
            "length_m" => self.length_m = Some(kvfile::value(key, v)?),
            "speed_mps" => self.speed_mps = Some(kvfile::value(key, v)?),
            "speed_kmh" => self.speed_mps = Some(kvfile::value::<f64>(key, v)? / 3.6),
            "lane" => self.lane = Some(kvfile::value(key, v)?),
            "direction" => {
                self.heading = Some(match v {
                    "toward" => Heading::Toward,
                    "away" => Heading::Away,
                    _ => {
                        return Err(KvError::BadValue {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected toward or away".into(),
                        })
                    }
                })
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn finish(self, group: &str, spawn_s: f64) -> Result<CarSpec, SimError> {
        Ok(CarSpec {
            length_m: self.length_m.unwrap_or(6.0),
            speed_mps: self
                .speed_mps
                .ok_or_else(|| SimError::InvalidSpec(format!("{group} needs speed_mps or speed_kmh")))?,
            lane: self.lane.unwrap_or(0),
            spawn_s,
            heading: self.heading.unwrap_or(Heading::Toward),
        })
    }
}

#[derive(Debug, Default)]
struct PartialCar {
    common: CarFields,
    spawn_s: Option<f64>,
}

impl PartialCar {
    fn set(&mut self, key: &str, field: &str, v: &str) -> Result<(), KvError> {
        if field == "spawn_s" {
            self.spawn_s = Some(kvfile::value(key, v)?);
        } else if !self.common.set(key, field, v)? {
            return Err(KvError::UnknownKey(key.into()));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct PartialFlow {
    common: CarFields,
    start_s: Option<f64>,
    interval_s: Option<f64>,
    count: Option<u32>,
}

impl PartialFlow {
    fn set(&mut self, key: &str, field: &str, v: &str) -> Result<(), KvError> {
        match field {
            "start_s" => self.start_s = Some(kvfile::value(key, v)?),
            "interval_s" => self.interval_s = Some(kvfile::value(key, v)?),
            "count" => self.count = Some(kvfile::value(key, v)?),
            _ => {
                if !self.common.set(key, field, v)? {
                    return Err(KvError::UnknownKey(key.into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarTruth {
    pub car_id: u64,
    pub speed_kmh: f64,
    pub direction: Direction,
    pub first_frame: Option<u64>,
    pub last_frame: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub cars: Vec<CarTruth>,
    /// Meters per depth-model unit of the emitted depth field.
    pub true_scale: f64,
}

pub fn write_ground_truth(cars: &[CarTruth], path: &Path) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cars {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<CarTruth>, SimError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Exact road-plane depth: the range from the camera to where each pixel ray
/// meets the road, divided by the scene's true scale.
#[derive(Debug, Clone)]
pub struct RoadPlaneDepth {
    k: CameraIntrinsics,
    pose: Pose,
    width: u32,
    height: u32,
    true_scale: f64,
}

impl RoadPlaneDepth {
    pub fn new(spec: &SceneSpec) -> Result<Self, DepthError> {
        Ok(Self {
            k: spec.intrinsics()?,
            pose: spec.pose(),
            width: spec.width,
            height: spec.height,
            true_scale: spec.true_scale,
        })
    }

    fn value(&self, u: f64, v: f64) -> f64 {
        let range = self.pose.road_range(self.k.ray(u, v)).unwrap_or(FAR_DEPTH_M).min(FAR_DEPTH_M);
        range / self.true_scale
    }

    /// Sample at every pixel center.
    pub fn field(&self) -> DepthField {
        let w = self.width as usize;
        let mut values = vec![0f32; w * self.height as usize];
        values.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = self.value(i as f64, j as f64) as f32;
            }
        });
        DepthField::new(self.width, self.height, values).expect("shape matches by construction")
    }
}

impl DepthSampler for RoadPlaneDepth {
    fn depth_at(&self, u: f64, v: f64) -> Result<f64, DepthError> {
        if !(u >= 0.0 && v >= 0.0 && u <= self.width as f64 - 1.0 && v <= self.height as f64 - 1.0) {
            return Err(DepthError::BadDepthSample { u, v });
        }
        Ok(self.value(u, v))
    }
}

/// Everything generated for one scene.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub spec: SceneSpec,
    pub trace: DetectionTrace,
    pub ground_truth: GroundTruth,
    pub depth: RoadPlaneDepth,
}

fn car_center_y(spec: &SceneSpec, car: &CarSpec, t: f64) -> Option<f64> {
    let travelled = car.speed_mps * (t - car.spawn_s);
    if t < car.spawn_s {
        return None;
    }
    let half = car.length_m / 2.0;
    let y = match car.heading {
        Heading::Toward => spec.road_length_m - half - travelled,
        Heading::Away => half + travelled,
    };
    (y - half >= 0.0 && y + half <= spec.road_length_m).then_some(y)
}

/// Image box of `car` at time `t`, if it lies entirely inside the frame.
fn project_car(spec: &SceneSpec, k: &CameraIntrinsics, pose: &Pose, car: &CarSpec, t: f64) -> Option<BoundingBox> {
    let y = car_center_y(spec, car, t)?;
    let x = spec.lane_center_x(car.lane);
    let (hw, hl) = (spec.body_width_m / 2.0, car.length_m / 2.0);
    let zs: &[f64] = if spec.body_height_m > 0.0 { &[0.0, spec.body_height_m] } else { &[0.0] };
    let mut b = BoundingBox::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for dx in [-hw, hw] {
        for dy in [-hl, hl] {
            for &z in zs {
                let [u, v] = k.project(pose.to_camera([x + dx, y + dy, z]))?;
                b.x_min = b.x_min.min(u);
                b.y_min = b.y_min.min(v);
                b.x_max = b.x_max.max(u);
                b.y_max = b.y_max.max(v);
            }
        }
    }
    let inside = b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= spec.width as f64 && b.y_max <= spec.height as f64;
    (inside && b.is_valid()).then_some(b)
}

/// Project every car in every frame into a detection trace, with ground
/// truth and the exact road depth. Deterministic in `spec.seed`.
pub fn generate(spec: &SceneSpec) -> Result<Simulation, SimError> {
    spec.validate()?;
    let k = spec.intrinsics()?;
    let pose = spec.pose();
    let frames = spec.frame_count();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut trace = DetectionTrace::new(TraceHeader {
        fps: Some(spec.fps),
        width: spec.width,
        height: spec.height,
        frames: Some(frames),
    });
    let mut truth: Vec<CarTruth> = spec
        .cars
        .iter()
        .enumerate()
        .map(|(i, c)| CarTruth {
            car_id: i as u64,
            speed_kmh: c.speed_mps * 3.6,
            direction: c.heading.image_direction(),
            first_frame: None,
            last_frame: None,
        })
        .collect();
    for f in 0..frames {
        let t = f as f64 / spec.fps;
        for (car, gt) in spec.cars.iter().zip(truth.iter_mut()) {
            let Some(mut b) = project_car(spec, &k, &pose, car, t) else {
                continue;
            };
            if spec.jitter_px > 0.0 {
                let j = spec.jitter_px;
                b.x_min += rng.random_range(-j..=j);
                b.y_min += rng.random_range(-j..=j);
                b.x_max += rng.random_range(-j..=j);
                b.y_max += rng.random_range(-j..=j);
                if !b.is_valid() {
                    continue;
                }
            }
            gt.first_frame.get_or_insert(f);
            gt.last_frame = Some(f);
            trace.detections.push(Detection {
                frame_index: f,
                bbox: b,
                class_label: CAR_CLASS.to_string(),
                confidence: rng.random_range(0.6..0.99),
            });
        }
    }
    Ok(Simulation {
        spec: spec.clone(),
        trace,
        ground_truth: GroundTruth { cars: truth, true_scale: spec.true_scale },
        depth: RoadPlaneDepth::new(spec)?,
    })
}

impl Simulation {
    /// Flat-shaded gray frame: sky, road, and filled car boxes.
    pub fn render_frame(&self, frame_index: u64) -> Raster {
        let mut raster = self.background();
        self.draw_cars(&mut raster, frame_index);
        raster
    }

    fn background(&self) -> Raster {
        let (w, h) = (self.spec.width as usize, self.spec.height as usize);
        let k = self.depth.k;
        let pose = self.depth.pose;
        let mut pixels = vec![0u8; w * h];
        pixels.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
            for (i, p) in row.iter_mut().enumerate() {
                *p = match pose.road_range(k.ray(i as f64, j as f64)) {
                    Some(_) => ROAD_LEVEL,
                    None => SKY_LEVEL,
                };
            }
        });
        Raster::new(self.spec.width, self.spec.height, 1, pixels).expect("shape matches by construction")
    }

    fn draw_cars(&self, raster: &mut Raster, frame_index: u64) {
        let w = raster.width() as usize;
        let (max_x, max_y) = (raster.width() as f64, raster.height() as f64);
        let start = self.trace.detections.partition_point(|d| d.frame_index < frame_index);
        let pixels = raster.pixels_mut();
        for d in self.trace.detections[start..].iter().take_while(|d| d.frame_index == frame_index) {
            let b = &d.bbox;
            let (x0, x1) = (b.x_min.max(0.0).floor() as usize, b.x_max.min(max_x).ceil() as usize);
            let (y0, y1) = (b.y_min.max(0.0).floor() as usize, b.y_max.min(max_y).ceil() as usize);
            for y in y0..y1 {
                pixels[y * w + x0..y * w + x1].fill(CAR_LEVEL);
            }
        }
    }

    /// Pixel-bearing frames for the whole scene.
    pub fn frame_source(self: &Arc<Self>) -> RenderedSource {
        RenderedSource::new(vec![(0, self.clone())], self.spec.frame_count(), self.spec.fps)
    }

    /// Write `detections.trace`, `depth.bin`, `ground_truth.csv` and, when
    /// asked, `frames/frame_NNNNNN.png`.
    pub fn write_outputs(&self, dir: &Path, with_frames: bool) -> Result<(), SimError> {
        fs::create_dir_all(dir)?;
        write_trace(&self.trace, &dir.join("detections.trace"))?;
        write_depth(&self.depth.field(), &dir.join("depth.bin"))?;
        write_ground_truth(&self.ground_truth.cars, &dir.join("ground_truth.csv"))?;
        if with_frames {
            let frames_dir = dir.join("frames");
            fs::create_dir_all(&frames_dir)?;
            let background = self.background();
            (0..self.spec.frame_count()).into_par_iter().try_for_each(|f| {
                let mut r = background.clone();
                self.draw_cars(&mut r, f);
                write_image(&frames_dir.join(format!("frame_{f:06}.png")), &r)
            })?;
        }
        Ok(())
    }
}

/// Frames rendered on demand from one or more scenes, each taking over from
/// its start frame.
pub struct RenderedSource {
    segments: Vec<(u64, Arc<Simulation>, Raster)>,
    frame_count: u64,
    fps: f64,
    position: u64,
    source_id: Arc<str>,
}

impl RenderedSource {
    fn new(segments: Vec<(u64, Arc<Simulation>)>, frame_count: u64, fps: f64) -> Self {
        let segments = segments.into_iter().map(|(s, sim)| {
            let bg = sim.background();
            (s, sim, bg)
        });
        Self {
            segments: segments.collect(),
            frame_count,
            fps,
            position: 0,
            source_id: Arc::from("sim"),
        }
    }
}

impl Iterator for RenderedSource {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.position >= self.frame_count {
            return None;
        }
        let f = self.position;
        self.position += 1;
        let (_, sim, bg) = self.segments.iter().rev().find(|(start, _, _)| *start <= f)?;
        let mut raster = bg.clone();
        sim.draw_cars(&mut raster, f);
        Some(Ok(Frame::from_raster(f, f as f64 / self.fps, raster, self.source_id.clone())))
    }
}

impl FrameSource for RenderedSource {
    fn declared_fps(&self) -> Option<f64> {
        Some(self.fps)
    }
}

/// Scene `a` up to `switch_frame`, scene `b` from then on, as if the camera
/// had been re-aimed. Both scenes must share image size and frame rate.
#[derive(Debug, Clone)]
pub struct ViewSwitch {
    pub a: Arc<Simulation>,
    pub b: Arc<Simulation>,
    pub switch_frame: u64,
}

pub fn inject_view_switch(a: Simulation, b: Simulation, switch_frame: u64) -> Result<ViewSwitch, SimError> {
    if (a.spec.width, a.spec.height) != (b.spec.width, b.spec.height) || a.spec.fps != b.spec.fps {
        return Err(SimError::InvalidSpec("view-switch scenes need equal image size and fps".into()));
    }
    Ok(ViewSwitch { a: Arc::new(a), b: Arc::new(b), switch_frame })
}

impl ViewSwitch {
    pub fn frame_count(&self) -> u64 {
        let a = self.a.spec.frame_count();
        if self.switch_frame >= a {
            a
        } else {
            self.b.spec.frame_count().max(self.switch_frame)
        }
    }

    pub fn trace(&self) -> DetectionTrace {
        let mut t = DetectionTrace::new(TraceHeader { frames: Some(self.frame_count()), ..self.a.trace.header.clone() });
        t.detections.extend(self.a.trace.detections.iter().filter(|d| d.frame_index < self.switch_frame).cloned());
        t.detections.extend(self.b.trace.detections.iter().filter(|d| d.frame_index >= self.switch_frame).cloned());
        t.detections.retain(|d| d.frame_index < self.frame_count());
        t
    }

    pub fn frame_source(&self) -> RenderedSource {
        RenderedSource::new(
            vec![(0, self.a.clone()), (self.switch_frame, self.b.clone())],
            self.frame_count(),
            self.a.spec.fps,
        )
    }

    pub fn depth_backend(&self) -> SwitchingDepth {
        SwitchingDepth { a: self.a.depth.field(), b: self.b.depth.field(), switch_frame: self.switch_frame }
    }
}

/// Depth of scene `a` before the switch frame and of scene `b` after it.
pub struct SwitchingDepth {
    a: DepthField,
    b: DepthField,
    switch_frame: u64,
}

impl DepthBackend for SwitchingDepth {
    fn name(&self) -> &str {
        "sim-switch"
    }

    fn estimate(&self, frame: &Frame) -> Result<DepthField, DepthError> {
        Ok(if frame.source_index < self.switch_frame { self.a.clone() } else { self.b.clone() })
    }
}
