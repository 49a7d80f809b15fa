use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn parttrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parttrack")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let scene = dir.join("scene.toml");
    fs::write(
        &scene,
        "seed = 11\nframes = 150\ncameras = 2\nactors = 2\noutlier_rate = 0.1\noutlier_min = 200.0\noutlier_max = 600.0\nocclusion_rate = 0.15\n",
    )
    .unwrap();
    let mut args = vec!["synth", "--config", p(&scene), "--out", p(dir)];
    args.extend_from_slice(extra);
    let out = parttrack(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn track(dir: &Path, out: &Path, extra: &[&str]) -> Output {
    let (calib, det) = (dir.join("calibration.jsonl"), dir.join("detections.jsonl"));
    let mut args = vec!["track", "--calib", p(&calib), "--detections", p(&det), "--out", p(out), "--preset", "shelf"];
    args.extend_from_slice(extra);
    parttrack(&args)
}

#[test]
fn fixture_run_produces_tracks() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let tracks = dir.path().join("tracks.jsonl");
    let out = track(dir.path(), &tracks, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    for stage in ["association", "reconstruction", "initialization"] {
        assert!(stderr.contains(stage));
    }
    let (schema, frames) = parttrack::io::load_tracks(&tracks).unwrap();
    assert_eq!(schema.joint_count(), 14);
    assert_eq!(frames.len(), 150);
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jsonl");
    let out =
        parttrack(&["track", "--calib", p(&missing), "--detections", p(&missing), "--out", p(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(p(&missing)));
}

#[test]
fn bad_parameter_fails() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--frames", "5"]);
    let out = track(dir.path(), &dir.path().join("t.jsonl"), &["--set", "alpha_2d=fast"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha_2d"));
}

#[test]
fn ablation_flags_change_output() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let base = dir.path().join("base.jsonl");
    assert!(track(dir.path(), &base, &[]).status.success());
    let base = fs::read(base).unwrap();
    for flag in ["--no-part-aware", "--no-joints-filter", "--no-smoothing"] {
        let out = dir.path().join("ablated.jsonl");
        assert!(track(dir.path(), &out, &[flag]).status.success());
        assert_ne!(fs::read(out).unwrap(), base, "{flag}");
    }
}

#[test]
fn set_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let cfg = dir.path().join("params.toml");
    fs::write(&cfg, "smoothing = false\n").unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(track(dir.path(), &a, &["--config", p(&cfg)]).status.success());
    assert!(track(dir.path(), &b, &["--no-smoothing"]).status.success());
    assert!(track(dir.path(), &c, &["--config", p(&cfg), "--set", "smoothing=true"]).status.success());
    let base = dir.path().join("base");
    assert!(track(dir.path(), &base, &[]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(&c).unwrap(), fs::read(&base).unwrap());
}

#[test]
fn prefix_detections_give_prefix_tracks() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let full = dir.path().join("full.jsonl");
    assert!(track(dir.path(), &full, &[]).status.success());

    let short = tempfile::tempdir().unwrap();
    let det = fs::read_to_string(dir.path().join("detections.jsonl")).unwrap();
    let prefix: String = det.lines().take(61).map(|l| format!("{l}\n")).collect();
    fs::write(short.path().join("detections.jsonl"), prefix).unwrap();
    fs::copy(dir.path().join("calibration.jsonl"), short.path().join("calibration.jsonl")).unwrap();
    let part = short.path().join("part.jsonl");
    assert!(track(short.path(), &part, &[]).status.success());

    let (full, part) = (fs::read(full).unwrap(), fs::read(part).unwrap());
    assert!(part.len() < full.len());
    assert_eq!(&full[..part.len()], &part[..]);
}

#[test]
fn eval_is_reproducible_and_exact_on_truth() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let tracks = dir.path().join("tracks.jsonl");
    assert!(track(dir.path(), &tracks, &[]).status.success());
    let gt = dir.path().join("ground_truth.jsonl");
    let args = ["eval", "--tracks", p(&tracks), "--gt", p(&gt)];
    let (a, b) = (parttrack(&args), parttrack(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let records = parttrack(&["eval", "--tracks", p(&tracks), "--gt", p(&gt), "--report", "records"]);
    assert!(String::from_utf8_lossy(&records.stdout).lines().all(|l| l.starts_with('{')));

    // tracks built from the ground truth itself score perfectly
    let truth = parttrack::io::load_ground_truth(&gt).unwrap();
    let frames: Vec<_> = truth
        .frames
        .iter()
        .map(|f| parttrack::tracker::FrameOutput {
            frame: f.frame,
            time: f.frame as f64 / 25.0,
            tracks: f
                .actors
                .iter()
                .map(|a| parttrack::tracker::TrackOutput {
                    id: parttrack::tracker::TrackId(a.id.into()),
                    skeleton: parttrack::pose::Skeleton3D::from_positions(
                        f.frame as f64 / 25.0,
                        &a.joints,
                        parttrack::pose::JointFlag::Triangulated,
                    ),
                })
                .collect(),
        })
        .collect();
    let exact = dir.path().join("exact.jsonl");
    parttrack::io::write_tracks(&exact, &truth.schema, &frames).unwrap();
    let out = parttrack(&["eval", "--tracks", p(&exact), "--gt", p(&gt)]);
    let text = String::from_utf8_lossy(&out.stdout);
    let all = text.lines().find(|l| l.starts_with("all")).unwrap();
    assert!(all.split_whitespace().skip(1).all(|v| v == "100.00"), "{all}");
}

#[test]
fn bench_reports_stages() {
    let out = parttrack(&["bench", "--steps", "20"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("association") && text.contains("wall clock"));
}
