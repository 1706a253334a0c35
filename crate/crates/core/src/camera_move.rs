//! Viewpoint-switch detection from the fraction of changed pixels.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::Frame;

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_OFFSET: f64 = 0.15;
pub const DEFAULT_PIXEL_DELTA: f64 = 10.0;
pub const DEFAULT_WARMUP: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum MoveError {
    #[error("frame shape mismatch: previous {previous:?}, current {current:?}")]
    FrameShapeMismatch { previous: (u32, u32), current: (u32, u32) },
    #[error("frame {0} has no pixel data")]
    MissingRaster(u64),
    #[error("invalid move-detector parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveDetectorConfig {
    pub window: usize,
    pub offset: f64,
    pub pixel_delta: f64,
    pub warmup: usize,
}

impl Default for MoveDetectorConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            offset: DEFAULT_OFFSET,
            pixel_delta: DEFAULT_PIXEL_DELTA,
            warmup: DEFAULT_WARMUP,
        }
    }
}

impl MoveDetectorConfig {
    pub fn validate(&self) -> Result<(), MoveError> {
        if self.window == 0 || self.warmup == 0 || self.warmup > self.window {
            return Err(MoveError::InvalidParameter(format!(
                "need 1 <= warmup ({}) <= window ({})",
                self.warmup, self.window
            )));
        }
        if !(self.offset >= 0.0 && self.offset.is_finite()) {
            return Err(MoveError::InvalidParameter(format!("offset {} must be >= 0", self.offset)));
        }
        if !(self.pixel_delta >= 0.0 && self.pixel_delta.is_finite()) {
            return Err(MoveError::InvalidParameter(format!("pixel_delta {} must be >= 0", self.pixel_delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoveVerdict {
    pub changed_fraction: f64,
    pub rolling_mean: f64,
    pub triggered: bool,
}

/// Fraction of pixels whose luma moved by more than `pixel_delta` levels.
pub fn pixel_change_fraction(prev: &Frame, cur: &Frame, pixel_delta: f64) -> Result<f64, MoveError> {
    let a = prev.raster.as_ref().ok_or(MoveError::MissingRaster(prev.index))?;
    let b = cur.raster.as_ref().ok_or(MoveError::MissingRaster(cur.index))?;
    change_fraction(&a.luma(), (a.width(), a.height()), &b.luma(), (b.width(), b.height()), pixel_delta)
}

fn change_fraction(
    prev: &[f32],
    prev_shape: (u32, u32),
    cur: &[f32],
    cur_shape: (u32, u32),
    pixel_delta: f64,
) -> Result<f64, MoveError> {
    if prev_shape != cur_shape {
        return Err(MoveError::FrameShapeMismatch { previous: prev_shape, current: cur_shape });
    }
    let changed = prev
        .iter()
        .zip(cur)
        .filter(|(p, c)| f64::from((**c - **p).abs()) > pixel_delta)
        .count();
    Ok(changed as f64 / prev.len() as f64)
}

/// Rolling-baseline spike detector. One instance per source.
#[derive(Debug, Clone)]
pub struct MoveDetector {
    config: MoveDetectorConfig,
    history: VecDeque<f64>,
    last_luma: Option<(Vec<f32>, (u32, u32))>,
}

impl MoveDetector {
    pub fn new(config: MoveDetectorConfig) -> Result<Self, MoveError> {
        config.validate()?;
        Ok(Self { config, history: VecDeque::with_capacity(config.window), last_luma: None })
    }

    pub fn config(&self) -> &MoveDetectorConfig {
        &self.config
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    fn rolling_mean(&self) -> f64 {
        if self.history.is_empty() {
            0.0
        } else {
            self.history.iter().sum::<f64>() / self.history.len() as f64
        }
    }

    /// Compare `frame` with the previous one. A spike clears the history and
    /// is not recorded in it. A shape change counts as a full change.
    pub fn observe(&mut self, frame: &Frame) -> Result<MoveVerdict, MoveError> {
        let raster = frame.raster.as_ref().ok_or(MoveError::MissingRaster(frame.index))?;
        let shape = (raster.width(), raster.height());
        let luma = raster.luma();
        let Some((prev, prev_shape)) = self.last_luma.replace((luma, shape)) else {
            return Ok(MoveVerdict { changed_fraction: 0.0, rolling_mean: 0.0, triggered: false });
        };
        let (cur, _) = self.last_luma.as_ref().expect("just stored");
        let fraction = match change_fraction(&prev, prev_shape, cur, shape, self.config.pixel_delta) {
            Ok(f) => f,
            Err(MoveError::FrameShapeMismatch { .. }) => 1.0,
            Err(e) => return Err(e),
        };
        Ok(self.push_fraction(fraction))
    }

    /// Feed a precomputed change fraction through the trigger logic.
    pub fn push_fraction(&mut self, fraction: f64) -> MoveVerdict {
        let rolling_mean = self.rolling_mean();
        let warm = self.history.len() >= self.config.warmup;
        let triggered = warm && fraction > rolling_mean + self.config.offset;
        if triggered {
            self.history.clear();
        } else {
            if self.history.len() == self.config.window {
                self.history.pop_front();
            }
            self.history.push_back(fraction);
        }
        MoveVerdict { changed_fraction: fraction, rolling_mean, triggered }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::ingest::{apply_salt_noise, Raster};

    fn gray(index: u64, w: u32, h: u32, pixels: Vec<u8>) -> Frame {
        Frame::from_raster(index, index as f64 / 30.0, Raster::new(w, h, 1, pixels).unwrap(), Arc::from("t"))
    }

    fn textured(index: u64) -> Frame {
        gray(index, 100, 100, (0..10_000u32).map(|i| ((i * 37) % 200 + 20) as u8).collect())
    }

    #[test]
    fn identical_frames_change_nothing() {
        let f = textured(0);
        assert_eq!(pixel_change_fraction(&f, &f, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn inversion_changes_everything() {
        let a = gray(0, 16, 16, (0..256).map(|i| i as u8).collect());
        let b = gray(1, 16, 16, (0..256).map(|i| 255 - i as u8).collect());
        // pixels 127 and 128 differ by exactly 1 level after inversion
        let expected = (0..256).filter(|&i| (255 - 2 * i as i32).abs() > 0).count() as f64 / 256.0;
        assert_eq!(pixel_change_fraction(&a, &b, 0.0).unwrap(), expected);
        let a = gray(0, 4, 4, vec![0; 16]);
        let b = gray(1, 4, 4, vec![255; 16]);
        assert_eq!(pixel_change_fraction(&a, &b, 10.0).unwrap(), 1.0);
    }

    #[test]
    fn block_jump_is_one_percent() {
        let a = gray(0, 100, 100, vec![100; 10_000]);
        let mut pixels = vec![100u8; 10_000];
        for y in 40..50 {
            for x in 70..80 {
                pixels[y * 100 + x] = 150;
            }
        }
        let b = gray(1, 100, 100, pixels.clone());
        let oracle = a
            .raster
            .as_ref()
            .unwrap()
            .pixels()
            .iter()
            .zip(&pixels)
            .filter(|(p, q)| (**p as i32 - **q as i32).abs() > 10)
            .count() as f64
            / 10_000.0;
        assert_eq!(oracle, 0.01);
        assert_eq!(pixel_change_fraction(&a, &b, 10.0).unwrap(), oracle);
    }

    #[test]
    fn rgb_uses_channel_mean() {
        let a = Frame::from_raster(0, 0.0, Raster::new(1, 1, 3, vec![0, 0, 0]).unwrap(), Arc::from("t"));
        // mean of (30, 0, 0) is 10, not above a delta of 10
        let b = Frame::from_raster(1, 0.0, Raster::new(1, 1, 3, vec![30, 0, 0]).unwrap(), Arc::from("t"));
        let c = Frame::from_raster(2, 0.0, Raster::new(1, 1, 3, vec![33, 0, 0]).unwrap(), Arc::from("t"));
        assert_eq!(pixel_change_fraction(&a, &b, 10.0).unwrap(), 0.0);
        assert_eq!(pixel_change_fraction(&a, &c, 10.0).unwrap(), 1.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = gray(0, 4, 4, vec![0; 16]);
        let b = gray(1, 4, 2, vec![0; 8]);
        assert!(matches!(pixel_change_fraction(&a, &b, 10.0), Err(MoveError::FrameShapeMismatch { .. })));
    }

    #[test]
    fn first_frame_never_triggers() {
        let mut d = MoveDetector::new(MoveDetectorConfig::default()).unwrap();
        let v = d.observe(&textured(0)).unwrap();
        assert_eq!(v, MoveVerdict { changed_fraction: 0.0, rolling_mean: 0.0, triggered: false });
        assert_eq!(d.history().len(), 0);
    }

    #[test]
    fn view_switch_after_static_scene_triggers_on_frame_101() {
        let mut d = MoveDetector::new(MoveDetectorConfig::default()).unwrap();
        for i in 0..100 {
            assert!(!d.observe(&textured(i)).unwrap().triggered);
        }
        // the first frame contributes no fraction
        assert_eq!(d.history().len(), 99);
        let inverted = gray(100, 100, 100, (0..10_000u32).map(|i| 255 - ((i * 37) % 200 + 20) as u8).collect());
        let expected_fraction = pixel_change_fraction(&textured(0), &inverted, 10.0).unwrap();
        let v = d.observe(&inverted).unwrap();
        assert!(v.triggered);
        assert_eq!(v.rolling_mean, 0.0);
        assert_eq!(v.changed_fraction, expected_fraction);
        assert_eq!(d.history().len(), 0);
    }

    #[test]
    fn salt_noise_does_not_trigger() {
        let mut d = MoveDetector::new(MoveDetectorConfig::default()).unwrap();
        let base = textured(0);
        let mut max_excess = f64::NEG_INFINITY;
        for i in 0..500u64 {
            let noisy = apply_salt_noise(&base, 0.10, 1, i).unwrap();
            let v = d.observe(&noisy).unwrap();
            assert!(!v.triggered, "frame {i}: {v:?}");
            // the rolling mean only means something once warm
            if i > DEFAULT_WARMUP as u64 {
                max_excess = max_excess.max(v.changed_fraction - v.rolling_mean);
            }
        }
        assert!(max_excess < 0.15, "{max_excess}");
    }

    #[test]
    fn recalibration_restarts_warmup() {
        let cfg = MoveDetectorConfig::default();
        let mut d = MoveDetector::new(cfg).unwrap();
        for _ in 0..50 {
            d.push_fraction(0.0);
        }
        assert!(d.push_fraction(1.0).triggered);
        for _ in 0..cfg.warmup {
            assert!(!d.push_fraction(1.0).triggered);
        }
        assert_eq!(d.history().len(), cfg.warmup);
    }

    #[test]
    fn history_is_bounded_by_window() {
        let cfg = MoveDetectorConfig { window: 5, warmup: 2, ..Default::default() };
        let mut d = MoveDetector::new(cfg).unwrap();
        for i in 0..20 {
            d.push_fraction(0.01 * i as f64);
        }
        let h: Vec<f64> = d.history().collect();
        assert_eq!(h, vec![0.15, 0.16, 0.17, 0.18, 0.19]);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(MoveDetector::new(MoveDetectorConfig { warmup: 0, ..Default::default() }).is_err());
        assert!(MoveDetector::new(MoveDetectorConfig { warmup: 200, ..Default::default() }).is_err());
        assert!(MoveDetector::new(MoveDetectorConfig { offset: -0.1, ..Default::default() }).is_err());
    }

    proptest! {
        #[test]
        fn no_trigger_during_warmup(fractions in proptest::collection::vec(0.0f64..=1.0, 1..10)) {
            let mut d = MoveDetector::new(MoveDetectorConfig::default()).unwrap();
            for f in fractions {
                prop_assert!(!d.push_fraction(f).triggered);
            }
        }

        #[test]
        fn bounded_noise_never_triggers(base in 0.0f64..0.8, spread in 0.0f64..0.15, seed in any::<u64>()) {
            // every fraction lies in [base, base + spread], so none can exceed
            // a mean of at least `base` by more than the offset
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut d = MoveDetector::new(MoveDetectorConfig::default()).unwrap();
            for _ in 0..400 {
                let f = base + rng.random::<f64>() * spread;
                let v = d.push_fraction(f);
                prop_assert!(!v.triggered);
                prop_assert!(d.history().len() <= DEFAULT_WINDOW);
                prop_assert!(d.history().all(|x| (0.0..=1.0).contains(&x)));
            }
        }

        #[test]
        fn verdict_matches_definition(prefix in proptest::collection::vec(0.0f64..=1.0, 0..150), f in 0.0f64..=1.0) {
            let cfg = MoveDetectorConfig::default();
            let mut d = MoveDetector::new(cfg).unwrap();
            for p in &prefix {
                d.push_fraction(*p);
            }
            let hist: Vec<f64> = d.history().collect();
            let mean = if hist.is_empty() { 0.0 } else { hist.iter().sum::<f64>() / hist.len() as f64 };
            let v = d.push_fraction(f);
            prop_assert_eq!(v.triggered, hist.len() >= cfg.warmup && f > mean + cfg.offset);
            if v.triggered {
                prop_assert_eq!(d.history().len(), 0);
            }
        }
    }
}
