use std::sync::Arc;

use super::IngestError;

/// 8-bit row-major raster with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self, IngestError> {
        if width == 0 || height == 0 {
            return Err(IngestError::InvalidParameter(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(IngestError::InvalidParameter(format!(
                "raster must have 1 or 3 channels, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(IngestError::InvalidParameter(format!(
                "raster buffer holds {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, channels, pixels })
    }

    /// A raster with every channel of every pixel set to `value`.
    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, IngestError> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Channels of the pixel at column `x`, row `y`.
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let start = (y as usize * self.width as usize + x as usize) * c;
        &self.pixels[start..start + c]
    }

    /// Per-pixel luma; the channel mean for RGB.
    pub fn luma(&self) -> Vec<f32> {
        match self.channels {
            1 => self.pixels.iter().map(|&p| p as f32).collect(),
            c => self
                .pixels
                .chunks_exact(c as usize)
                .map(|px| px.iter().map(|&p| p as f32).sum::<f32>() / c as f32)
                .collect(),
        }
    }

    /// Mean over all channels of all pixels.
    pub fn mean_intensity(&self) -> f64 {
        let sum: u64 = self.pixels.iter().map(|&p| p as u64).sum();
        sum as f64 / self.pixels.len() as f64
    }
}

/// One timestamped frame flowing through the pipeline.
///
/// `index` is gapless over the frames a normalized source yields; `source_index`
/// is the frame number in the underlying file, image sequence or trace, which is
/// what detection traces and per-frame depth files are keyed by. Trace-only
/// sources produce frames without a raster.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: u64,
    pub source_index: u64,
    pub timestamp_s: f64,
    pub width: u32,
    pub height: u32,
    pub raster: Option<Raster>,
    pub source_id: Arc<str>,
}

impl Frame {
    pub fn from_raster(index: u64, timestamp_s: f64, raster: Raster, source_id: Arc<str>) -> Self {
        Self {
            index,
            source_index: index,
            timestamp_s,
            width: raster.width(),
            height: raster.height(),
            raster: Some(raster),
            source_id,
        }
    }

    pub fn metadata_only(
        index: u64,
        timestamp_s: f64,
        width: u32,
        height: u32,
        source_id: Arc<str>,
    ) -> Self {
        Self {
            index,
            source_index: index,
            timestamp_s,
            width,
            height,
            raster: None,
            source_id,
        }
    }

    pub(crate) fn with_raster(&self, raster: Raster) -> Self {
        Self {
            width: raster.width(),
            height: raster.height(),
            raster: Some(raster),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_buffer_length() {
        assert!(Raster::new(4, 4, 1, vec![0; 15]).is_err());
        assert!(Raster::new(4, 4, 2, vec![0; 32]).is_err());
        assert!(Raster::new(0, 4, 1, vec![]).is_err());
    }

    #[test]
    fn luma_is_channel_mean() {
        let r = Raster::new(2, 1, 3, vec![0, 30, 60, 255, 255, 255]).unwrap();
        assert_eq!(r.luma(), vec![30.0, 255.0]);
    }
}
