use std::path::Path;
use std::process::{Command, Output};

const SCENE: &str = "image.width=640\nimage.height=360\nduration_s=30\nbody.height_m=0\n\
    flow.0.length_m=6\nflow.0.speed_kmh=50\nflow.0.lane=0\nflow.0.direction=toward\nflow.0.interval_s=5\n\
    flow.1.length_m=6\nflow.1.speed_kmh=90\nflow.1.lane=1\nflow.1.direction=away\nflow.1.interval_s=5\n";

fn farsec(args: &[&str], config_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_farsec"));
    cmd.args(args).env_remove("FARSEC_CONFIG");
    if let Some(p) = config_env {
        cmd.env("FARSEC_CONFIG", p);
    }
    cmd.output().expect("binary runs")
}

fn simulated(dir: &Path) -> (String, String) {
    std::fs::write(dir.join("scene.conf"), SCENE).unwrap();
    let out = dir.join("sim");
    let o = farsec(&["sim", "--spec", dir.join("scene.conf").to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (
        out.join("detections.trace").display().to_string(),
        format!("file:{}", out.join("depth.bin").display()),
    )
}

#[test]
fn sim_run_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, depth) = simulated(dir.path());
    let reports = dir.path().join("reports.jsonl");
    let o = farsec(&["run", "--source", &trace, "--depth", &depth, "--out", reports.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let logs = String::from_utf8(o.stderr).unwrap();
    assert!(logs.lines().next().unwrap().contains("\"type\":\"config\""));
    assert!(logs.contains("\"type\":\"scale\""));

    let eval = dir.path().join("eval");
    let gt = dir.path().join("sim/ground_truth.csv");
    let o = farsec(
        &["eval", "--gt", gt.to_str().unwrap(), "--pred", reports.to_str().unwrap(), "--out", eval.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let total = std::fs::read_to_string(eval.join("total.csv")).unwrap();
    let mean: f64 = total.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(mean < 5.0, "{total}");
    for f in ["per_video.csv", "cumulative.csv", "total_rel.csv"] {
        assert!(eval.join(f).exists());
    }
}

#[test]
fn reports_go_to_stdout_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, depth) = simulated(dir.path());
    let o = farsec(&["run", "--source", &trace, "--depth", &depth, "--format", "csv"], None);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("t,direction,v_star_kmh,count,window_s,epoch\n"), "{stdout}");
}

#[test]
fn config_precedence_env_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, depth) = simulated(dir.path());
    let conf = dir.path().join("farsec.conf");
    std::fs::write(&conf, format!("source={trace}\ndepth={depth}\nformat=csv\n")).unwrap();

    let o = farsec(&["run"], Some(&conf));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("t,direction"));

    let o = farsec(&["run", "--format", "jsonl"], Some(&conf));
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with('{'));

    let o = farsec(&["run", "--set", "format=jsonl"], Some(&conf));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with('{'));

    let other = dir.path().join("other.conf");
    std::fs::write(&other, format!("source={trace}\ndepth={depth}\n")).unwrap();
    let o = farsec(&["run", "--config", other.to_str().unwrap()], Some(&conf));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with('{'), "explicit --config wins over the env var");
}

#[test]
fn exit_code_2_for_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "track.threshhold_px=40\n").unwrap();
    let o = farsec(&["run"], Some(&conf));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("track.threshhold_px"));

    let o = farsec(&["run", "--set", "scale.min_pairs=lots"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = farsec(&["run", "--set", "nonsense"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = farsec(&["run"], None);
    assert_eq!(o.status.code(), Some(2), "no source configured");
    std::fs::write(dir.path().join("scene.conf"), "road.lanes=0\n").unwrap();
    let o = farsec(
        &["sim", "--spec", dir.path().join("scene.conf").to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_code_3_for_source_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.trace");
    let o = farsec(&["run", "--source", missing.to_str().unwrap(), "--depth", "file:/nonexistent.bin"], None);
    assert_eq!(o.status.code(), Some(3));
    let video = dir.path().join("clip.mp4");
    std::fs::write(&video, b"not a video").unwrap();
    let o = farsec(&["run", "--source", video.to_str().unwrap(), "--detector", "trace:/x.trace", "--depth", "file:/x.bin"], None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn exit_code_4_for_calibration_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, _) = simulated(dir.path());
    let depth = dir.path().join("tiny.bin");
    let mut bytes = b"#farsec-depth v1 width=2 height=2\n".to_vec();
    for _ in 0..4 {
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
    }
    std::fs::write(&depth, bytes).unwrap();
    let o = farsec(&["run", "--source", &trace, "--depth", &format!("file:{}", depth.display())], None);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn augment_directory_of_images() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("scene.conf"), SCENE.replace("duration_s=30", "duration_s=0.1")).unwrap();
    let sim = dir.path().join("sim");
    let o = farsec(
        &["sim", "--spec", dir.path().join("scene.conf").to_str().unwrap(), "--out", sim.to_str().unwrap(), "--frames"],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("noisy");
    let o = farsec(
        &["augment", "--input", sim.join("frames").to_str().unwrap(), "--out", out.to_str().unwrap(), "--noise", "0.1", "--blur", "10"],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 3);
    let o = farsec(&["augment", "--input", "/nonexistent", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    let o = farsec(&["augment", "--input", sim.join("frames").to_str().unwrap(), "--out", out.to_str().unwrap(), "--noise", "2"], None);
    assert_eq!(o.status.code(), Some(2));
}
