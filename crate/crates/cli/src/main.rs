use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use parttrack::config::{Params, Preset, TrackerConfig};
use parttrack::eval::pcp_evaluate;
use parttrack::io::{self as pio, DetectionReader, TrackWriter};
use parttrack::synth::{self, SceneConfig};
use parttrack::tracker::{StageTimings, Tracker};

#[derive(Debug, Parser)]
#[command(name = "parttrack", version, about = "On-line multi-view 3D pose tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-camera scene.
    Synth {
        /// Scene description (TOML). Defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        frames: Option<u64>,
    },
    /// Track people through a detections file.
    Track {
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Score tracks against ground truth.
    Eval {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value_t = Report::Text)]
        report: Report,
    },
    /// Time tracker steps on a synthetic 5-camera, 4-person scene.
    Bench {
        #[arg(long, default_value_t = 1000)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
    },
}

#[derive(Debug, clap::Args)]
struct ParamArgs {
    /// Parameter preset.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Parameter file (TOML, flat KEY = VALUE pairs).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one parameter; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Score detections with the mean over all joints.
    #[arg(long)]
    no_part_aware: bool,
    #[arg(long)]
    no_joints_filter: bool,
    #[arg(long)]
    no_smoothing: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Campus,
    Shelf,
    Panoptic,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Campus => Preset::Campus,
            PresetArg::Shelf => Preset::Shelf,
            PresetArg::Panoptic => Preset::Panoptic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Report {
    Text,
    Records,
}

/// An input path that does not exist.
#[derive(Debug)]
struct Missing(PathBuf);

impl std::fmt::Display for Missing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "no such file: {}", self.0.display())
    }
}

impl std::error::Error for Missing {}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Missing(path.to_path_buf()).into());
    }
    Ok(())
}

impl ParamArgs {
    /// `fallback` stands in for a missing `--preset`.
    fn resolve(&self, fallback: Option<Preset>) -> Result<Params> {
        if let Some(path) = &self.config {
            require(path)?;
        }
        let preset = self.preset.map(Preset::from).or(fallback);
        let mut params = Params::resolve(preset, self.config.as_deref(), &self.set)?;
        params.part_aware &= !self.no_part_aware;
        params.joints_filter &= !self.no_joints_filter;
        params.smoothing &= !self.no_smoothing;
        Ok(params)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn print_timings(out: &mut dyn Write, t: &StageTimings) -> io::Result<()> {
    let per = |d: Duration| if t.frames == 0 { 0.0 } else { ms(d) / t.frames as f64 };
    writeln!(out, "frames          {}", t.frames)?;
    writeln!(out, "stage           total ms   per frame ms")?;
    for (name, d) in [
        ("association", t.association),
        ("reconstruction", t.reconstruction),
        ("initialization", t.initialization),
        ("total", t.total()),
    ] {
        writeln!(out, "{name:<15} {:>8.2}   {:>12.4}", ms(d), per(d))?;
    }
    Ok(())
}

fn synth_cmd(config: Option<&Path>, out: &Path, seed: Option<u64>, frames: Option<u64>) -> Result<()> {
    let mut cfg = match config {
        Some(path) => {
            require(path)?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SceneConfig::from_toml(&text).with_context(|| format!("scene config {}", path.display()))?
        }
        None => SceneConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(f) = frames {
        cfg.frames = f;
    }
    let scene = synth::generate(&cfg)?;
    scene.export(out)?;
    fs::write(out.join("scene.toml"), cfg.to_toml()).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} frames, {} cameras, {} actors to {}", cfg.frames, cfg.cameras, cfg.actors, out.display());
    Ok(())
}

fn track_cmd(calib: &Path, detections: &Path, out: &Path, args: &ParamArgs) -> Result<()> {
    require(calib)?;
    require(detections)?;
    let params = args.resolve(None)?;
    let cameras = pio::load_calibration(calib)?;
    let Some(first) = cameras.first() else { bail!("{}: no cameras", calib.display()) };
    let fps = first.fps();
    let reader = DetectionReader::open(detections, params.confidence_floor)?;
    let schema = reader.schema().clone();
    let cfg = TrackerConfig::from_params(&params, fps, schema.joint_count())?;
    let mut tracker = Tracker::new(cameras, cfg, schema.joint_count())?;
    let mut writer = TrackWriter::create(out, &schema)?;
    for bundle in reader {
        let frame = tracker.step(&bundle?)?;
        writer.write_frame(&frame)?;
    }
    print_timings(&mut io::stderr(), tracker.timings())?;
    Ok(())
}

fn eval_cmd(tracks: &Path, gt: &Path, report: Report) -> Result<()> {
    require(tracks)?;
    require(gt)?;
    let (schema, frames) = pio::load_tracks(tracks)?;
    let truth = pio::load_ground_truth(gt)?;
    let pcp = pcp_evaluate(&frames, &schema, &truth, &truth.schema)?;
    let text = match report {
        Report::Text => pcp.to_text(),
        Report::Records => pcp.to_records(),
    };
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn bench_cmd(steps: u64, seed: u64, args: &ParamArgs) -> Result<()> {
    let params = args.resolve(Some(Preset::Shelf))?;
    let scene = synth::generate(&SceneConfig {
        seed,
        frames: steps,
        cameras: 5,
        actors: 4,
        outlier_rate: 0.1,
        occlusion_rate: 0.15,
        ..SceneConfig::default()
    })?;
    let cfg = TrackerConfig::from_params(&params, scene.config.fps, scene.schema.joint_count())?;
    let mut tracker = Tracker::new(scene.cameras.clone(), cfg, scene.schema.joint_count())?;
    let start = Instant::now();
    for b in &scene.bundles {
        tracker.step(b)?;
    }
    let wall = start.elapsed();
    let mut out = io::stdout();
    print_timings(&mut out, tracker.timings())?;
    writeln!(out, "wall clock      {:>8.2}   {:>12.4}", ms(wall), ms(wall) / steps.max(1) as f64)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { config, out, seed, frames } => synth_cmd(config.as_deref(), out, *seed, *frames),
        Command::Track { calib, detections, out, params } => track_cmd(calib, detections, out, params),
        Command::Eval { tracks, gt, report } => eval_cmd(tracks, gt, *report),
        Command::Bench { steps, seed, params } => bench_cmd(*steps, *seed, params),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Missing>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
