#![allow(dead_code)]

use std::sync::Arc;

use farsec_core::config::PipelineConfig;
use farsec_core::depth::FileDepthBackend;
use farsec_core::detection::{DetectionTrace, TraceBackend};
use farsec_core::ingest::TraceClockSource;
use farsec_core::pipeline::{run_stream, CollectingSink};
use farsec_core::simulator::{generate, parse_scene_spec, SceneSpec, Simulation};

/// Two-lane road seen from an overpass: one stream toward the camera in lane
/// 0, one away in lane 1.
pub fn two_flow_scene(duration_s: f64, toward_kmh: f64, away_kmh: f64, body_height_m: f64) -> SceneSpec {
    let text = format!(
        "duration_s={duration_s}\nbody.height_m={body_height_m}\n\
         flow.0.length_m=6\nflow.0.speed_kmh={toward_kmh}\nflow.0.lane=0\nflow.0.direction=toward\nflow.0.interval_s=5\n\
         flow.1.length_m=6\nflow.1.speed_kmh={away_kmh}\nflow.1.lane=1\nflow.1.direction=away\nflow.1.interval_s=5\nflow.1.start_s=2.5\n"
    );
    parse_scene_spec(&text).expect("valid scene")
}

pub fn trace_source(trace: &DetectionTrace) -> TraceClockSource {
    let h = &trace.header;
    let fps = h.fps.unwrap_or(30.0);
    TraceClockSource::new(h.width, h.height, h.fps, fps, h.frames.unwrap_or(0), Arc::from("trace"))
}

/// Run the pipeline over a simulation's trace with its exact depth.
pub fn run_simulation(sim: &Simulation, config: &PipelineConfig) -> CollectingSink {
    run_with_depth(sim, config, sim.depth.field())
}

pub fn run_with_depth(
    sim: &Simulation,
    config: &PipelineConfig,
    depth: farsec_core::depth::DepthField,
) -> CollectingSink {
    let mut sink = CollectingSink::default();
    run_stream(
        config,
        Box::new(trace_source(&sim.trace)),
        Box::new(TraceBackend::new(&sim.trace, config.min_confidence)),
        Arc::new(FileDepthBackend::from_field(depth)),
        &mut sink,
    )
    .expect("pipeline runs");
    sink
}

pub fn simulate(spec: &SceneSpec) -> Simulation {
    generate(spec).expect("scene generates")
}
