use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use farsec_core::config::{load_config, ConfigError, CONFIG_ENV};
use farsec_core::depth::DepthError;
use farsec_core::evaluation::{
    bridge_reports, per_vehicle_errors, read_predictions, read_truth, write_evaluation, EvalError, Predictions,
    SpeedRecord, DEFAULT_VIDEO,
};
use farsec_core::ingest::{list_image_sequence, read_image, write_image, Frame, IngestError};
use farsec_core::pipeline::{augment, run, PipelineError, WriterSink};
use farsec_core::simulator::{generate, read_scene_spec, SimError};

#[derive(Parser)]
#[command(name = "farsec", version, about = "Vehicle speed estimation from a single traffic camera")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a video, image sequence or detection trace.
    Run(RunArgs),
    /// Generate a synthetic scene: detections, depth and ground truth.
    Sim {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also render frames/frame_NNNNNN.png.
        #[arg(long)]
        frames: bool,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        /// Per-vehicle CSV, or a report stream from `farsec run`.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Frame rate for mapping ground-truth frames to report times.
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        /// Video label a report stream belongs to.
        #[arg(long, default_value = DEFAULT_VIDEO)]
        video: String,
        #[arg(long, default_value_t = 5.0)]
        bin_width: f64,
    },
    /// Blur and/or salt an image or a directory of images.
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        blur: u32,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Video file, image-sequence directory or `.trace` file.
    #[arg(long)]
    source: Option<String>,
    /// Flat key=value config file; falls back to $FARSEC_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set track.threshold_px=40.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// `trace:<path>`; defaults to the source when it is a trace.
    #[arg(long)]
    detector: Option<String>,
    /// `file:<path>` to a depth file or a directory of per-frame files.
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    max_fps: Option<f64>,
    #[arg(long)]
    blur: Option<u32>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reports file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// jsonl or csv.
    #[arg(long)]
    format: Option<String>,
    /// Write finished tracks in trace format with track id and epoch columns.
    #[arg(long, value_name = "PATH")]
    dump_tracks: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> anyhow::Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                return Err(ConfigError::Invalid { key: "--set", message: format!("expected KEY=VALUE, got {kv:?}") }.into());
            };
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let flags = [
            ("source", self.source.clone()),
            ("detector", self.detector.clone()),
            ("depth", self.depth.clone()),
            ("ingest.max_fps", self.max_fps.map(|v| v.to_string())),
            ("ingest.blur", self.blur.map(|v| v.to_string())),
            ("ingest.noise", self.noise.map(|v| v.to_string())),
            ("ingest.seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("format", self.format.clone()),
        ];
        out.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(out)
    }
}

fn create(path: &Path) -> anyhow::Result<Box<dyn Write>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let config_path = args.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let config = load_config(config_path.as_deref(), &args.overrides()?)?;
    let reports: Box<dyn Write> = match &config.out {
        Some(path) => create(path)?,
        None => Box::new(BufWriter::new(std::io::stdout())),
    };
    let tracks = args.dump_tracks.as_deref().map(create).transpose()?;
    let format = config.format;
    let mut sink = WriterSink::new(reports, format, Box::new(std::io::stderr()), tracks);
    let result = run(&config, &mut sink);
    sink.flush()?;
    Ok(result?)
}

fn cmd_sim(spec: &Path, out: &Path, frames: bool) -> anyhow::Result<()> {
    let spec = read_scene_spec(spec)?;
    let sim = generate(&spec)?;
    sim.write_outputs(out, frames)?;
    eprintln!(
        "{} cars, {} detections over {} frames written to {}",
        sim.ground_truth.cars.len(),
        sim.trace.detections.len(),
        spec.frame_count(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(gt: &Path, pred: &Path, out: &Path, fps: f64, video: &str, bin_width: f64) -> anyhow::Result<()> {
    if !(fps > 0.0) || !(bin_width > 0.0) {
        return Err(ConfigError::Invalid { key: "--fps/--bin-width", message: "must be positive".into() }.into());
    }
    let truth = read_truth(gt)?;
    let gt_records: Vec<SpeedRecord> = truth
        .iter()
        .map(|(v, c)| SpeedRecord { video: v.clone(), car_id: c.car_id, speed_kmh: c.speed_kmh })
        .collect();
    let predictions = match read_predictions(pred)? {
        Predictions::PerVehicle(p) => p,
        Predictions::Reports(rows) => {
            let cars: Vec<_> = truth.iter().filter(|(v, _)| v == video).map(|(_, c)| c.clone()).collect();
            if cars.is_empty() {
                bail!(EvalError::Format(format!("no ground truth for video {video:?}")));
            }
            bridge_reports(&cars, &rows, fps, video)
        }
    };
    let matched = per_vehicle_errors(&gt_records, &predictions)?;
    let (_, total) = write_evaluation(out, &matched, bin_width)?;
    println!(
        "support={} mean={:.2} median={:.2} p95={:.2} worst={:.2} uncovered={}",
        total.abs.support,
        total.abs.mean,
        total.abs.median,
        total.abs.p95,
        total.abs.worst,
        matched.uncovered.len()
    );
    Ok(())
}

fn cmd_augment(input: &Path, out: &Path, blur: u32, noise: f64, seed: u64) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(ConfigError::Invalid { key: "--noise", message: format!("{noise} outside [0, 1]") }.into());
    }
    let jobs: Vec<(u64, PathBuf, PathBuf)> = if input.is_dir() {
        std::fs::create_dir_all(out)?;
        list_image_sequence(input)?
            .into_iter()
            .map(|(i, p)| {
                let name = p.file_name().expect("listed files have names").to_owned();
                (i, p, out.join(name))
            })
            .collect()
    } else if input.is_file() {
        vec![(0, input.to_path_buf(), out.to_path_buf())]
    } else {
        return Err(IngestError::SourceUnavailable(format!("{}: not found", input.display())).into());
    };
    for (i, src, dst) in &jobs {
        let frame = Frame::from_raster(*i, 0.0, read_image(src)?, std::sync::Arc::from("augment"));
        let frame = augment(frame, blur, noise, seed)?;
        write_image(dst, frame.raster.as_ref().expect("image frames carry pixels"))?;
    }
    eprintln!("{} images written", jobs.len());
    Ok(())
}

/// 2 config, 3 source, 4 calibration, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return match e {
                PipelineError::Config(_) => 2,
                PipelineError::Source(_) | PipelineError::Detector(_) => 3,
                PipelineError::Calibration(_) => 4,
                _ => 1,
            };
        }
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<IngestError>() {
            return 3;
        }
        if cause.is::<DepthError>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return match e {
                SimError::InvalidSpec(_) | SimError::Kv(_) => 2,
                SimError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 3,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::Io(_) => 3,
                EvalError::Csv(c) if c.is_io_error() => 3,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if e.kind() == std::io::ErrorKind::NotFound {
                return 3;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sim { spec, out, frames } => cmd_sim(&spec, &out, frames),
        Command::Eval { gt, pred, out, fps, video, bin_width } => cmd_eval(&gt, &pred, &out, fps, &video, bin_width),
        Command::Augment { input, out, blur, noise, seed } => cmd_augment(&input, &out, blur, noise, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("farsec: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
