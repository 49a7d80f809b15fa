//! Parameter presets and the tracker configuration.
//!
//! User-facing parameters ([`Params`]) are expressed per frame, the way the
//! dataset presets are tabulated. [`TrackerConfig::from_params`] converts them
//! into wall-clock units (seconds) for a given camera frame rate.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown preset '{0}' (expected campus, shelf or panoptic)")]
    UnknownPreset(String),
    #[error("unknown parameter '{0}'")]
    UnknownKey(String),
    #[error("bad value '{value}' for '{key}'")]
    BadValue { key: String, value: String },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("config file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Campus,
    Shelf,
    Panoptic,
}

impl FromStr for Preset {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.to_ascii_lowercase().as_str() {
            "campus" => Ok(Preset::Campus),
            "shelf" => Ok(Preset::Shelf),
            "panoptic" => Ok(Preset::Panoptic),
            _ => Err(ConfigError::UnknownPreset(s.to_string())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Campus => "campus",
            Preset::Shelf => "shelf",
            Preset::Panoptic => "panoptic",
        })
    }
}

/// Tracking parameters in per-frame units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// 2D velocity threshold, pixels per frame.
    pub alpha_2d: f64,
    /// Time-penalty rate, per frame.
    pub lambda_a: f64,
    /// Epipolar distance threshold, pixels.
    pub alpha_epi: f64,
    /// Reconstruction window, frames.
    pub tau: u32,
    /// Minimum number of positive joint affinities.
    pub epsilon: usize,
    /// Time penalty of triangulation weights, per frame. Defaults to `lambda_a`.
    pub recon_lambda: Option<f64>,
    /// Optional cap on the association interval, frames.
    pub max_dt: Option<f64>,
    /// Detections with lower confidence are treated as missing.
    pub confidence_floor: f64,
    /// Pairs scoring at or below this never match.
    pub min_affinity: f64,
    pub smooth_window: usize,
    /// Gaussian smoothing width, frames.
    pub smooth_sigma: f64,
    /// Consecutive unmatched frames before a track is retired. Defaults to `2·tau`.
    pub max_misses: Option<u32>,
    /// A new track needs at least this many triangulated joints.
    pub init_min_joints: usize,
    pub part_aware: bool,
    pub joints_filter: bool,
    pub smoothing: bool,
    /// Score detections against the motion-predicted skeleton instead of the last one.
    pub project_predicted: bool,
}

impl Params {
    pub fn preset(p: Preset) -> Self {
        let (alpha_2d, alpha_epi, epsilon) = match p {
            Preset::Campus => (30.0, 15.0, 14),
            Preset::Shelf => (70.0, 60.0, 10),
            Preset::Panoptic => (60.0, 30.0, 10),
        };
        Self {
            alpha_2d,
            lambda_a: 3.0,
            alpha_epi,
            tau: 3,
            epsilon,
            recon_lambda: None,
            max_dt: None,
            confidence_floor: 0.1,
            min_affinity: 0.0,
            smooth_window: 5,
            smooth_sigma: 1.0,
            max_misses: None,
            init_min_joints: 7,
            part_aware: true,
            joints_filter: true,
            smoothing: true,
            project_predicted: false,
        }
    }

    pub const KEYS: &'static [&'static str] = &[
        "alpha_2d",
        "lambda_a",
        "alpha_epi",
        "tau",
        "epsilon",
        "recon_lambda",
        "max_dt",
        "confidence_floor",
        "min_affinity",
        "smooth_window",
        "smooth_sigma",
        "max_misses",
        "init_min_joints",
        "part_aware",
        "joints_filter",
        "smoothing",
        "project_predicted",
    ];

    /// Set one parameter from its text form (`--set KEY=VALUE`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue { key: key.to_string(), value: value.to_string() };
        let float = || value.trim().parse::<f64>().map_err(|_| bad());
        let uint = || value.trim().parse::<u64>().map_err(|_| bad());
        let boolean = || value.trim().parse::<bool>().map_err(|_| bad());
        let optional = |v: &str| matches!(v.trim(), "none" | "off" | "");
        match key {
            "alpha_2d" => self.alpha_2d = float()?,
            "lambda_a" => self.lambda_a = float()?,
            "alpha_epi" => self.alpha_epi = float()?,
            "tau" => self.tau = uint()? as u32,
            "epsilon" => self.epsilon = uint()? as usize,
            "recon_lambda" => self.recon_lambda = if optional(value) { None } else { Some(float()?) },
            "max_dt" => self.max_dt = if optional(value) { None } else { Some(float()?) },
            "confidence_floor" => self.confidence_floor = float()?,
            "min_affinity" => self.min_affinity = float()?,
            "smooth_window" => self.smooth_window = uint()? as usize,
            "smooth_sigma" => self.smooth_sigma = float()?,
            "max_misses" => self.max_misses = if optional(value) { None } else { Some(uint()? as u32) },
            "init_min_joints" => self.init_min_joints = uint()? as usize,
            "part_aware" => self.part_aware = boolean()?,
            "joints_filter" => self.joints_filter = boolean()?,
            "smoothing" => self.smoothing = boolean()?,
            "project_predicted" => self.project_predicted = boolean()?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply a `KEY=VALUE` assignment.
    pub fn apply_assignment(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| ConfigError::BadValue { key: kv.to_string(), value: String::new() })?;
        self.set(k.trim(), v)
    }

    /// Apply a TOML table of flat `key = value` pairs. A `preset` key, if
    /// present, is returned rather than applied; callers resolve precedence.
    pub fn apply_toml(&mut self, text: &str) -> Result<Option<Preset>, ConfigError> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::File { path: String::new(), message: e.to_string() })?;
        let mut preset = None;
        for (key, value) in &table {
            if key == "preset" {
                let name = value
                    .as_str()
                    .ok_or_else(|| ConfigError::BadValue { key: key.clone(), value: value.to_string() })?;
                preset = Some(name.parse()?);
                continue;
            }
            let text = match value {
                toml::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            self.set(key, &text)?;
        }
        Ok(preset)
    }

    /// Resolve `preset < config file < assignments`.
    ///
    /// A preset named on the command line overrides the file's preset key;
    /// file values still apply on top of whichever preset wins.
    pub fn resolve(
        cli_preset: Option<Preset>,
        file: Option<&Path>,
        assignments: &[String],
    ) -> Result<Self, ConfigError> {
        let text = match file {
            Some(path) => Some(
                std::fs::read_to_string(path)
                    .map_err(|e| ConfigError::File { path: path.display().to_string(), message: e.to_string() })?,
            ),
            None => None,
        };
        let file_preset = match &text {
            Some(t) => Params::preset(Preset::Campus).apply_toml(t).map_err(|e| with_path(e, file))?,
            None => None,
        };
        let preset = cli_preset.or(file_preset).unwrap_or(Preset::Campus);
        let mut params = Params::preset(preset);
        if let Some(t) = &text {
            params.apply_toml(t).map_err(|e| with_path(e, file))?;
        }
        for kv in assignments {
            params.apply_assignment(kv)?;
        }
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(ConfigError::Invalid(what.to_string())) };
        check(self.alpha_2d > 0.0 && self.alpha_2d.is_finite(), "alpha_2d must be > 0")?;
        check(self.alpha_epi > 0.0 && self.alpha_epi.is_finite(), "alpha_epi must be > 0")?;
        check(self.lambda_a >= 0.0 && self.lambda_a.is_finite(), "lambda_a must be >= 0")?;
        check(self.recon_lambda.is_none_or(|l| l >= 0.0 && l.is_finite()), "recon_lambda must be >= 0")?;
        check(self.tau >= 1, "tau must be >= 1")?;
        check(self.epsilon >= 1, "epsilon must be >= 1")?;
        check(self.max_dt.is_none_or(|m| m >= 1.0), "max_dt must be >= 1 frame")?;
        check((0.0..=1.0).contains(&self.confidence_floor), "confidence_floor must be in [0, 1]")?;
        check(self.smooth_window >= 1, "smooth_window must be >= 1")?;
        check(self.smooth_sigma > 0.0, "smooth_sigma must be > 0")?;
        check(self.init_min_joints >= 1, "init_min_joints must be >= 1")?;
        Ok(())
    }
}

fn with_path(e: ConfigError, path: Option<&Path>) -> ConfigError {
    match (e, path) {
        (ConfigError::File { message, .. }, Some(p)) => ConfigError::File { path: p.display().to_string(), message },
        (e, _) => e,
    }
}

/// Affinity parameters in wall-clock units.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityConfig<T> {
    /// Pixels per second.
    pub alpha_2d: T,
    /// Per second.
    pub lambda_a: T,
    pub epsilon: usize,
    /// Pixels.
    pub alpha_epi: T,
    /// Frames.
    pub tau: u32,
    /// Shortest admissible interval between a detection and a track, seconds.
    pub frame_interval: T,
    /// Seconds.
    pub max_dt: Option<T>,
}

/// Everything the tracker needs, in wall-clock units.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig<T> {
    pub affinity: AffinityConfig<T>,
    /// Per second.
    pub recon_lambda: T,
    pub min_affinity: T,
    pub smooth_window: usize,
    /// Frames.
    pub smooth_sigma: T,
    pub max_misses: u32,
    pub init_min_joints: usize,
    pub part_aware: bool,
    pub joints_filter: bool,
    pub smoothing: bool,
    pub project_predicted: bool,
}

impl<T: Scalar> TrackerConfig<T> {
    pub fn from_params(p: &Params, fps: T, joint_count: usize) -> Result<Self, ConfigError> {
        p.validate()?;
        if p.epsilon > joint_count {
            return Err(ConfigError::Invalid(format!("epsilon {} exceeds joint count {joint_count}", p.epsilon)));
        }
        if !(fps > T::zero()) {
            return Err(ConfigError::Invalid("fps must be > 0".into()));
        }
        let per_second = |v: f64| T::lit(v) * fps;
        let frame_interval = T::one() / fps;
        Ok(Self {
            affinity: AffinityConfig {
                alpha_2d: per_second(p.alpha_2d),
                lambda_a: per_second(p.lambda_a),
                epsilon: p.epsilon,
                alpha_epi: T::lit(p.alpha_epi),
                tau: p.tau,
                frame_interval,
                max_dt: p.max_dt.map(|f| T::lit(f) * frame_interval),
            },
            recon_lambda: per_second(p.recon_lambda.unwrap_or(p.lambda_a)),
            min_affinity: T::lit(p.min_affinity),
            smooth_window: p.smooth_window,
            smooth_sigma: T::lit(p.smooth_sigma),
            max_misses: p.max_misses.unwrap_or(2 * p.tau),
            init_min_joints: p.init_min_joints.min(joint_count),
            part_aware: p.part_aware,
            joints_filter: p.joints_filter,
            smoothing: p.smoothing,
            project_predicted: p.project_predicted,
        })
    }

    pub fn preset(preset: Preset, fps: T, joint_count: usize) -> Self {
        Self::from_params(&Params::preset(preset), fps, joint_count).expect("presets are valid")
    }
}
