//! Pinhole lifting of image points with relative depth, model-space
//! distances, and per-epoch depth calibration.

mod camera;
mod field;
mod io;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use camera::{
    canonical_azimuth, pixel_to_camera_ray, CameraIntrinsics, SphericalDirection, WorldPoint,
    DEFAULT_FOV_DEG,
};
pub use field::{DepthField, DepthSampler};
pub use io::{parse_depth, read_depth, write_depth, write_depth_to, DEPTH_MAGIC};

use crate::ingest::Frame;

pub const DEFAULT_CALIB_FRAMES: usize = 10;
pub const DEFAULT_CALIB_STRIDE: usize = 3;

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("no usable depth at ({u}, {v})")]
    BadDepthSample { u: f64, v: f64 },
    #[error("depth field is {found} samples, expected {}x{}", expected.0, expected.1)]
    ShapeMismatch { expected: (u32, u32), found: usize },
    #[error("depth calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("depth backend {backend} failed: {message}")]
    Backend { backend: String, message: String },
    #[error("malformed depth file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lift an image point to a spherical point at the sampled relative depth.
pub fn lift_point(
    u: f64,
    v: f64,
    depth: &dyn DepthSampler,
    k: &CameraIntrinsics,
) -> Result<WorldPoint, DepthError> {
    let r = depth.depth_at(u, v)?;
    if !(r.is_finite() && r > 0.0) {
        return Err(DepthError::BadDepthSample { u, v });
    }
    Ok(WorldPoint::from_ray(r, pixel_to_camera_ray(u, v, k)))
}

/// Euclidean distance between two lifted image points, in depth-model units.
/// The two points may come from different fields of the same epoch.
pub fn model_distance(
    p: [f64; 2],
    q: [f64; 2],
    depth_p: &dyn DepthSampler,
    depth_q: &dyn DepthSampler,
    k: &CameraIntrinsics,
) -> Result<f64, DepthError> {
    let a = lift_point(p[0], p[1], depth_p, k)?.to_cartesian();
    let b = lift_point(q[0], q[1], depth_q, k)?.to_cartesian();
    Ok(camera::euclidean(a, b))
}

/// Source of per-frame relative depth maps.
pub trait DepthBackend: Send + Sync {
    fn name(&self) -> &str;

    fn estimate(&self, frame: &Frame) -> Result<DepthField, DepthError>;
}

/// Depth maps from `#farsec-depth v1` files.
///
/// Points either at a single file, used for every frame, or at a directory of
/// per-frame files named `depth_<source index, 6 digits>.bin`.
pub struct FileDepthBackend {
    name: String,
    single: Option<DepthField>,
    dir: Option<PathBuf>,
}

impl FileDepthBackend {
    pub fn open(path: &Path) -> Result<Self, DepthError> {
        let name = format!("file:{}", path.display());
        if path.is_dir() {
            Ok(Self { name, single: None, dir: Some(path.to_path_buf()) })
        } else {
            Ok(Self { name, single: Some(read_depth(path)?), dir: None })
        }
    }

    pub fn from_field(field: DepthField) -> Self {
        Self { name: "memory".into(), single: Some(field), dir: None }
    }

    pub fn frame_file_name(source_index: u64) -> String {
        format!("depth_{source_index:06}.bin")
    }
}

impl DepthBackend for FileDepthBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, frame: &Frame) -> Result<DepthField, DepthError> {
        let field = match (&self.single, &self.dir) {
            (Some(f), _) => f.clone(),
            (None, Some(dir)) => read_depth(&dir.join(Self::frame_file_name(frame.source_index)))?,
            (None, None) => unreachable!("backend holds a file or a directory"),
        };
        if (field.width(), field.height()) != (frame.width, frame.height) {
            return Err(DepthError::ShapeMismatch {
                expected: (frame.width, frame.height),
                found: field.values().len(),
            });
        }
        Ok(field)
    }
}

/// Fuse the depth maps of the calibration frames into one field for the
/// epoch: the per-pixel median over all maps the backend produced, with
/// invalid pixels repaired afterwards. Frames whose map fails are skipped.
pub fn calibrate_depth(
    frames: &[Frame],
    backend: &dyn DepthBackend,
    epoch: u64,
) -> Result<DepthField, DepthError> {
    if frames.is_empty() {
        return Err(DepthError::CalibrationFailed("no calibration frames".into()));
    }
    let results: Vec<Result<DepthField, DepthError>> =
        frames.par_iter().map(|f| backend.estimate(f)).collect();
    let mut maps = Vec::with_capacity(results.len());
    let mut last_error = None;
    for r in results {
        match r {
            Ok(m) => maps.push(m),
            Err(e) => last_error = Some(e),
        }
    }
    let Some(first) = maps.first() else {
        return Err(DepthError::CalibrationFailed(format!(
            "backend {} failed on all {} frames (last error: {})",
            backend.name(),
            frames.len(),
            last_error.map(|e| e.to_string()).unwrap_or_default()
        )));
    };
    let (w, h) = (first.width(), first.height());
    if let Some(bad) = maps.iter().find(|m| (m.width(), m.height()) != (w, h)) {
        return Err(DepthError::ShapeMismatch { expected: (w, h), found: bad.values().len() });
    }

    let n = w as usize * h as usize;
    let mut fused = vec![0f32; n];
    fused.par_chunks_mut(4096).enumerate().for_each(|(chunk, out)| {
        let mut column = Vec::with_capacity(maps.len());
        for (k, slot) in out.iter_mut().enumerate() {
            let idx = chunk * 4096 + k;
            column.clear();
            column.extend(maps.iter().map(|m| m.values()[idx]).filter(|v| v.is_finite() && *v > 0.0));
            *slot = if column.is_empty() { f32::NAN } else { field::median_f32(&mut column) };
        }
    });
    let mut field = DepthField::new(w, h, fused)?;
    field.repair_invalid()?;
    field.frames_averaged = maps.len();
    field.epoch = epoch;
    Ok(field)
}
