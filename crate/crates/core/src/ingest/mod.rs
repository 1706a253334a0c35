//! Frame ingestion: sources, FPS and resolution normalization, augmentations.

mod augment;
mod frame;
mod resample;
mod source;

use thiserror::Error;

pub use augment::{
    apply_blur, apply_salt_noise, salt_noise_count, DEFAULT_BLUR_KERNEL, DEFAULT_NOISE_FRACTION,
    DEFAULT_NOISE_VALUE,
};
pub use frame::{Frame, Raster};
pub use resample::{downsample, fitted_dimensions};
pub use source::{
    list_image_sequence, open_source, read_image, write_image, FrameSource, ImageSequenceSource,
    NormalizedSource, SourceConfig, TraceClockSource, VecSource, Y4mSource, DEFAULT_MAX_FPS,
    FHD_HEIGHT, FHD_WIDTH,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("timestamps must strictly increase ({previous} then {current})")]
    NonMonotonicTimestamp { previous: f64, current: f64 },
}
