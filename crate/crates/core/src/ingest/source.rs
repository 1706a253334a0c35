use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{downsample, Frame, IngestError, Raster};
use crate::detection::read_trace;

pub const DEFAULT_MAX_FPS: f64 = 30.0;
pub const FHD_WIDTH: u32 = 1920;
pub const FHD_HEIGHT: u32 = 1080;
const TIMESTAMP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    pub uri: String,
    pub max_fps: f64,
    pub max_width: u32,
    pub max_height: u32,
    /// Frame rate to assume when the container carries none.
    pub declared_fps: Option<f64>,
}

impl SourceConfig {
    pub fn new(uri: impl Into<String>) -> Self {
        Self {
            uri: uri.into(),
            max_fps: DEFAULT_MAX_FPS,
            max_width: FHD_WIDTH,
            max_height: FHD_HEIGHT,
            declared_fps: None,
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.max_fps > 0.0) {
            return Err(IngestError::InvalidParameter(format!("max_fps must be positive, got {}", self.max_fps)));
        }
        if self.max_width == 0 || self.max_height == 0 {
            return Err(IngestError::InvalidParameter("maximum frame dimensions must be positive".into()));
        }
        if let Some(fps) = self.declared_fps {
            if !(fps > 0.0) {
                return Err(IngestError::InvalidParameter(format!("declared fps must be positive, got {fps}")));
            }
        }
        Ok(())
    }
}

/// Ordered, single-consumer stream of frames.
pub trait FrameSource: Iterator<Item = Result<Frame, IngestError>> + Send {
    /// Frame rate carried by the container metadata, if any.
    fn declared_fps(&self) -> Option<f64>;
}

/// Open a video file, image-sequence directory or detection trace and wrap it
/// in the FPS and resolution caps of `config`.
///
/// Recognized inputs: directories of numbered `.png`/`.pgm`/`.ppm` images,
/// `.y4m` raw video, and `.trace` detection traces (frames without pixels).
/// Stream URIs need an external demuxing adapter and are rejected here.
pub fn open_source(config: &SourceConfig) -> Result<NormalizedSource, IngestError> {
    config.validate()?;
    if let Some((scheme, _)) = config.uri.split_once("://") {
        if scheme != "file" {
            return Err(IngestError::UnsupportedFormat(format!(
                "{scheme}:// streams require an external demuxer; pass a file or directory"
            )));
        }
    }
    let path = Path::new(config.uri.strip_prefix("file://").unwrap_or(&config.uri));
    let meta = std::fs::metadata(path)
        .map_err(|e| IngestError::SourceUnavailable(format!("{}: {e}", path.display())))?;
    let source_id: Arc<str> = Arc::from(config.uri.as_str());
    let inner: Box<dyn FrameSource> = if meta.is_dir() {
        Box::new(ImageSequenceSource::open(path, config.declared_fps, config.max_fps, source_id)?)
    } else {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("y4m") => Box::new(Y4mSource::open(path, source_id)?),
            Some("trace") => Box::new(TraceClockSource::open(path, config.declared_fps, config.max_fps, source_id)?),
            other => {
                return Err(IngestError::UnsupportedFormat(format!(
                    "{}: unsupported container {}",
                    path.display(),
                    other.unwrap_or("(no extension)")
                )))
            }
        }
    };
    Ok(NormalizedSource::new(inner, config))
}

/// Applies frame-rate decimation and resolution capping, and re-indexes the
/// surviving frames gaplessly from zero.
pub struct NormalizedSource {
    inner: Box<dyn FrameSource>,
    min_interval: f64,
    max_fps: f64,
    max_width: u32,
    max_height: u32,
    last_emitted: Option<f64>,
    last_seen: Option<f64>,
    next_index: u64,
}

impl NormalizedSource {
    pub fn new(inner: Box<dyn FrameSource>, config: &SourceConfig) -> Self {
        Self {
            inner,
            min_interval: 1.0 / config.max_fps,
            max_fps: config.max_fps,
            max_width: config.max_width,
            max_height: config.max_height,
            last_emitted: None,
            last_seen: None,
            next_index: 0,
        }
    }
}

impl Iterator for NormalizedSource {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let frame = match self.inner.next()? {
                Ok(f) => f,
                Err(e) => return Some(Err(e)),
            };
            if let Some(prev) = self.last_seen {
                if frame.timestamp_s <= prev {
                    return Some(Err(IngestError::NonMonotonicTimestamp {
                        previous: prev,
                        current: frame.timestamp_s,
                    }));
                }
            }
            self.last_seen = Some(frame.timestamp_s);
            if let Some(last) = self.last_emitted {
                if frame.timestamp_s - last < self.min_interval - TIMESTAMP_EPS {
                    continue;
                }
            }
            self.last_emitted = Some(frame.timestamp_s);
            let mut frame = downsample(frame, self.max_width, self.max_height);
            frame.index = self.next_index;
            self.next_index += 1;
            return Some(Ok(frame));
        }
    }
}

impl FrameSource for NormalizedSource {
    /// The container rate, as long as it survives the cap untouched. A
    /// decimated stream's effective rate is left to measurement.
    fn declared_fps(&self) -> Option<f64> {
        self.inner
            .declared_fps()
            .filter(|&fps| fps <= self.max_fps + TIMESTAMP_EPS)
    }
}

/// In-memory frames, mostly for tests and synthetic composites.
pub struct VecSource {
    frames: std::vec::IntoIter<Frame>,
    declared_fps: Option<f64>,
}

impl VecSource {
    pub fn new(frames: Vec<Frame>, declared_fps: Option<f64>) -> Self {
        Self { frames: frames.into_iter(), declared_fps }
    }
}

impl Iterator for VecSource {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.frames.next().map(Ok)
    }
}

impl FrameSource for VecSource {
    fn declared_fps(&self) -> Option<f64> {
        self.declared_fps
    }
}

/// Directory of numbered images (`frame_000001.png` style), ordered by the
/// trailing number in the file stem. Frames are indexed by position in that
/// order, starting at zero, whatever the first file number is.
pub struct ImageSequenceSource {
    files: std::vec::IntoIter<(u64, PathBuf)>,
    fps: f64,
    declared_fps: Option<f64>,
    source_id: Arc<str>,
    position: u64,
}

impl ImageSequenceSource {
    /// Images carry no timing; frames are stamped at `declared_fps`, or at
    /// `fallback_fps` when nothing is declared.
    pub fn open(
        dir: &Path,
        declared_fps: Option<f64>,
        fallback_fps: f64,
        source_id: Arc<str>,
    ) -> Result<Self, IngestError> {
        let files = list_image_sequence(dir)?;
        Ok(Self {
            files: files.into_iter(),
            fps: declared_fps.unwrap_or(fallback_fps),
            declared_fps,
            source_id,
            position: 0,
        })
    }
}

/// Numbered image files in `dir`, sorted by their frame number.
pub fn list_image_sequence(dir: &Path) -> Result<Vec<(u64, PathBuf)>, IngestError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| IngestError::SourceUnavailable(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| IngestError::SourceUnavailable(format!("{}: {e}", dir.display())))?
            .path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("png" | "pgm" | "ppm")) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let digits: String = stem
            .chars()
            .rev()
            .take_while(char::is_ascii_digit)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        if let Ok(n) = digits.parse::<u64>() {
            files.push((n, path));
        }
    }
    if files.is_empty() {
        return Err(IngestError::UnsupportedFormat(format!(
            "{}: no numbered image files",
            dir.display()
        )));
    }
    files.sort();
    Ok(files)
}

/// Decode an image file into a gray or RGB raster.
pub fn read_image(path: &Path) -> Result<Raster, IngestError> {
    let img = image::open(path).map_err(|e| IngestError::Decode(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width(), img.height());
    if img.color().channel_count() >= 3 {
        Raster::new(w, h, 3, img.into_rgb8().into_raw())
    } else {
        Raster::new(w, h, 1, img.into_luma8().into_raw())
    }
}

/// Encode a raster as PNG.
pub fn write_image(path: &Path, raster: &Raster) -> Result<(), IngestError> {
    let color = if raster.channels() == 3 {
        image::ExtendedColorType::Rgb8
    } else {
        image::ExtendedColorType::L8
    };
    image::save_buffer(path, raster.pixels(), raster.width(), raster.height(), color)
        .map_err(|e| IngestError::Decode(format!("{}: {e}", path.display())))
}

impl Iterator for ImageSequenceSource {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (_, path) = self.files.next()?;
        let position = self.position;
        self.position += 1;
        Some(read_image(&path).map(|raster| {
            Frame::from_raster(position, position as f64 / self.fps, raster, self.source_id.clone())
        }))
    }
}

impl FrameSource for ImageSequenceSource {
    fn declared_fps(&self) -> Option<f64> {
        self.declared_fps
    }
}

/// YUV4MPEG2 reader yielding the luma plane as a gray raster.
pub struct Y4mSource {
    reader: BufReader<File>,
    width: u32,
    height: u32,
    chroma_bytes: usize,
    fps: Option<f64>,
    source_id: Arc<str>,
    position: u64,
    done: bool,
}

impl Y4mSource {
    pub fn open(path: &Path, source_id: Arc<str>) -> Result<Self, IngestError> {
        let file = File::open(path)
            .map_err(|e| IngestError::SourceUnavailable(format!("{}: {e}", path.display())))?;
        let mut reader = BufReader::new(file);
        let mut header = String::new();
        reader
            .read_line(&mut header)
            .map_err(|e| IngestError::Decode(format!("{}: {e}", path.display())))?;
        let mut tokens = header.split_ascii_whitespace();
        if tokens.next() != Some("YUV4MPEG2") {
            return Err(IngestError::UnsupportedFormat(format!(
                "{}: missing YUV4MPEG2 signature",
                path.display()
            )));
        }
        let (mut width, mut height, mut fps, mut colorspace) = (0u32, 0u32, None, "420jpeg");
        for token in tokens {
            let (tag, value) = token.split_at(1);
            match tag {
                "W" => width = value.parse().unwrap_or(0),
                "H" => height = value.parse().unwrap_or(0),
                "F" => {
                    fps = value.split_once(':').and_then(|(n, d)| {
                        let (n, d) = (n.parse::<f64>().ok()?, d.parse::<f64>().ok()?);
                        (n > 0.0 && d > 0.0).then(|| n / d)
                    })
                }
                "C" => colorspace = value,
                _ => {}
            }
        }
        if width == 0 || height == 0 {
            return Err(IngestError::Decode(format!("{}: invalid Y4M dimensions", path.display())));
        }
        let (cw, ch) = (width.div_ceil(2) as usize, height.div_ceil(2) as usize);
        let chroma_bytes = match colorspace {
            c if c.starts_with("420") => 2 * cw * ch,
            c if c.starts_with("422") => 2 * cw * height as usize,
            c if c.starts_with("444") && !c.contains("alpha") => 2 * width as usize * height as usize,
            "mono" => 0,
            other => {
                return Err(IngestError::UnsupportedFormat(format!(
                    "{}: Y4M colorspace C{other} not supported",
                    path.display()
                )))
            }
        };
        Ok(Self {
            reader,
            width,
            height,
            chroma_bytes,
            fps,
            source_id,
            position: 0,
            done: false,
        })
    }

    fn read_frame(&mut self) -> Result<Option<Frame>, IngestError> {
        let mut marker = String::new();
        let n = self
            .reader
            .read_line(&mut marker)
            .map_err(|e| IngestError::Decode(e.to_string()))?;
        if n == 0 {
            return Ok(None);
        }
        if !marker.starts_with("FRAME") {
            return Err(IngestError::Decode(format!("expected FRAME marker, got {marker:?}")));
        }
        let mut luma = vec![0u8; self.width as usize * self.height as usize];
        self.reader
            .read_exact(&mut luma)
            .map_err(|e| IngestError::Decode(format!("truncated Y4M frame: {e}")))?;
        std::io::copy(&mut (&mut self.reader).take(self.chroma_bytes as u64), &mut std::io::sink())
            .map_err(|e| IngestError::Decode(e.to_string()))?;
        let raster = Raster::new(self.width, self.height, 1, luma)?;
        let position = self.position;
        self.position += 1;
        let fps = self.fps.unwrap_or(DEFAULT_MAX_FPS);
        Ok(Some(Frame::from_raster(position, position as f64 / fps, raster, self.source_id.clone())))
    }
}

impl Iterator for Y4mSource {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

impl FrameSource for Y4mSource {
    fn declared_fps(&self) -> Option<f64> {
        self.fps
    }
}

/// Pixel-less frames paced by a detection trace's header, one per frame index
/// up to the last index the trace mentions.
pub struct TraceClockSource {
    width: u32,
    height: u32,
    fps: f64,
    declared_fps: Option<f64>,
    frame_count: u64,
    position: u64,
    source_id: Arc<str>,
}

impl TraceClockSource {
    pub fn open(
        path: &Path,
        fallback_declared: Option<f64>,
        fallback_fps: f64,
        source_id: Arc<str>,
    ) -> Result<Self, IngestError> {
        let trace = read_trace(path).map_err(|e| match e {
            crate::detection::TraceError::Io(io) => {
                IngestError::SourceUnavailable(format!("{}: {io}", path.display()))
            }
            other => IngestError::Decode(other.to_string()),
        })?;
        let last_detection = trace.detections.iter().map(|d| d.frame_index + 1).max().unwrap_or(0);
        let frame_count = trace.header.frames.unwrap_or(0).max(last_detection);
        let declared = trace.header.fps.or(fallback_declared);
        Ok(Self::new(
            trace.header.width,
            trace.header.height,
            declared,
            fallback_fps,
            frame_count,
            source_id,
        ))
    }

    pub fn new(
        width: u32,
        height: u32,
        declared_fps: Option<f64>,
        fallback_fps: f64,
        frame_count: u64,
        source_id: Arc<str>,
    ) -> Self {
        Self {
            width,
            height,
            fps: declared_fps.unwrap_or(fallback_fps),
            declared_fps,
            frame_count,
            position: 0,
            source_id,
        }
    }
}

impl Iterator for TraceClockSource {
    type Item = Result<Frame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.position >= self.frame_count {
            return None;
        }
        let i = self.position;
        self.position += 1;
        Some(Ok(Frame::metadata_only(
            i,
            i as f64 / self.fps,
            self.width,
            self.height,
            self.source_id.clone(),
        )))
    }
}

impl FrameSource for TraceClockSource {
    fn declared_fps(&self) -> Option<f64> {
        self.declared_fps
    }
}
