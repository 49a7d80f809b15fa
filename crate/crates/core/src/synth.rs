//! Synthetic multi-camera scenes with exact ground truth.
//!
//! Actors walk circular paths (or swing their limbs in place) inside a ring of
//! cameras. Every detection is the exact projection of a ground-truth joint,
//! then corrupted by Gaussian pixel noise, outliers, limb-group occlusion and
//! whole-detection dropout. All randomness comes from ChaCha8 seeded with
//! `seed`, one independent stream per frame index, so any frame can be
//! regenerated alone and a shorter run is a prefix of a longer one.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraCalibration, CameraId, GeometryError, Point2, Point3};
use crate::io::{self, CorruptionClass, CorruptionRecord, GroundTruth, GtActor, GtFrame, IoError};
use crate::linalg::{Matrix3, Vector3};
use crate::pose::{Joint2D, JointSchema, Pose2D};
use crate::tracker::{CameraView, FrameBundle};

pub const CALIBRATION_FILE: &str = "calibration.jsonl";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
pub const SIDECAR_FILE: &str = "corruption.jsonl";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene config: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    /// Constant-speed walk along a circle, with gait swing.
    Walk,
    /// Standing in place, swinging arms and legs.
    Swing,
}

/// Scene description. Lengths in meters, angles in radians, image
/// quantities in pixels, rates are probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub frames: u64,
    pub fps: f64,
    pub cameras: usize,
    pub ring_radius: f64,
    pub camera_height: f64,
    /// Angle of the first camera on the ring.
    pub ring_phase: f64,
    pub look_at: [f64; 3],
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub actors: usize,
    pub motion: Motion,
    /// Path centers sit on a circle of this radius around the origin.
    pub layout_radius: f64,
    pub path_radius: f64,
    /// Walking speed along the path (m/s).
    pub speed: f64,
    pub swing_amplitude: f64,
    /// Gait frequency (Hz).
    pub swing_frequency: f64,
    pub noise_sigma: f64,
    /// Per-joint probability of an outlier.
    pub outlier_rate: f64,
    pub outlier_min: f64,
    pub outlier_max: f64,
    /// Per-detection probability of hiding one limb group.
    pub occlusion_rate: f64,
    /// Per-detection probability that the detector misses the person.
    pub dropout_rate: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 2000,
            fps: 25.0,
            cameras: 3,
            ring_radius: 6.0,
            camera_height: 2.2,
            ring_phase: 0.3,
            look_at: [0.0, 0.0, 1.0],
            focal: 700.0,
            width: 1280,
            height: 960,
            actors: 3,
            motion: Motion::Walk,
            layout_radius: 1.5,
            path_radius: 0.5,
            speed: 0.5,
            swing_amplitude: 0.25,
            swing_frequency: 0.8,
            noise_sigma: 1.0,
            outlier_rate: 0.0,
            outlier_min: 50.0,
            outlier_max: 200.0,
            occlusion_rate: 0.0,
            dropout_rate: 0.0,
        }
    }
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        for (name, r) in [
            ("outlier_rate", self.outlier_rate),
            ("occlusion_rate", self.occlusion_rate),
            ("dropout_rate", self.dropout_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(SynthError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise_sigma must be >= 0");
        }
        if self.cameras < 2 {
            return bad("at least 2 cameras");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if !(self.outlier_min >= 0.0 && self.outlier_max >= self.outlier_min) {
            return bad("outlier magnitudes must satisfy 0 <= outlier_min <= outlier_max");
        }
        if !(self.focal > 0.0) || self.width == 0 || self.height == 0 {
            return bad("focal length and image size must be positive");
        }
        if !(self.ring_radius > 0.0 && self.path_radius >= 0.0 && self.layout_radius >= 0.0 && self.speed >= 0.0) {
            return bad("ring_radius must be positive; path, layout and speed non-negative");
        }
        Ok(())
    }
}

/// Camera at `center` looking at `target`, image up aligned with world −z.
pub fn look_at_camera(
    id: u32,
    center: Vector3<f64>,
    target: Vector3<f64>,
    focal: f64,
    size: (u32, u32),
    fps: f64,
) -> Result<CameraCalibration<f64>, GeometryError> {
    let invalid = || GeometryError::InvalidCalibration("look-at direction".into());
    let z = (target - center).normalize().ok_or_else(invalid)?;
    let x = z.cross(&Vector3::new(0.0, 0.0, 1.0)).normalize().ok_or_else(invalid)?;
    let y = z.cross(&x);
    let r = Matrix3::from_rows([x.to_array(), y.to_array(), z.to_array()]);
    let k = Matrix3::from_rows([[focal, 0.0, size.0 as f64 / 2.0], [0.0, focal, size.1 as f64 / 2.0], [0.0, 0.0, 1.0]]);
    CameraCalibration::new(CameraId(id), k, r, center, size, fps)
}

pub fn ring_cameras(cfg: &SceneConfig) -> Result<Vec<CameraCalibration<f64>>, SynthError> {
    (0..cfg.cameras)
        .map(|i| {
            let a = cfg.ring_phase + i as f64 / cfg.cameras as f64 * std::f64::consts::TAU;
            let center = Vector3::new(cfg.ring_radius * a.cos(), cfg.ring_radius * a.sin(), cfg.camera_height);
            look_at_camera(
                i as u32,
                center,
                Vector3::from_array(cfg.look_at),
                cfg.focal,
                (cfg.width, cfg.height),
                cfg.fps,
            )
            .map_err(SynthError::from)
        })
        .collect()
}

// Body dimensions (m).
const HIP_HEIGHT: f64 = 0.95;
const HIP_HALF_WIDTH: f64 = 0.1;
const THIGH: f64 = 0.45;
const SHIN: f64 = 0.45;
const SHOULDER_HEIGHT: f64 = 1.45;
const SHOULDER_HALF_WIDTH: f64 = 0.19;
const UPPER_ARM: f64 = 0.3;
const FOREARM: f64 = 0.27;
const NECK_HEIGHT: f64 = 1.5;
const HEAD_TOP_HEIGHT: f64 = 1.75;

/// Ground-truth joints (campus14 order) of actor `i` at time `t`.
pub fn actor_joints(cfg: &SceneConfig, i: usize, t: f64) -> Vec<Point3<f64>> {
    let n = cfg.actors.max(1) as f64;
    let slot = i as f64 / n * std::f64::consts::TAU + 0.4;
    let layout = if cfg.actors > 1 { cfg.layout_radius } else { 0.0 };
    let center = Vector3::new(layout * slot.cos(), layout * slot.sin(), 0.0);
    let (root, heading) = match cfg.motion {
        Motion::Walk => {
            let dir = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
            let omega = if cfg.path_radius > 0.0 { cfg.speed / cfg.path_radius } else { 0.0 };
            let theta = 1.3 * i as f64 + dir * omega * t;
            let root = center + Vector3::new(theta.cos(), theta.sin(), 0.0) * cfg.path_radius;
            (root, theta + dir * std::f64::consts::FRAC_PI_2)
        }
        Motion::Swing => (center, slot + std::f64::consts::PI),
    };
    let f = Vector3::new(heading.cos(), heading.sin(), 0.0);
    let l = Vector3::new(-heading.sin(), heading.cos(), 0.0);
    let up = Vector3::new(0.0, 0.0, 1.0);
    let at = |side: f64, height: f64| root + l * side + up * height;
    let phase = 0.9 * i as f64;
    let phi = cfg.swing_amplitude * (std::f64::consts::TAU * cfg.swing_frequency * t + phase).sin();
    let segment = |from: Point3<f64>, len: f64, angle: f64| from + (f * angle.sin() - up * angle.cos()) * len;

    let r_hip = at(-HIP_HALF_WIDTH, HIP_HEIGHT);
    let l_hip = at(HIP_HALF_WIDTH, HIP_HEIGHT);
    let r_knee = segment(r_hip, THIGH, phi);
    let l_knee = segment(l_hip, THIGH, -phi);
    let r_ankle = segment(r_knee, SHIN, 0.5 * phi);
    let l_ankle = segment(l_knee, SHIN, -0.5 * phi);
    let r_shoulder = at(-SHOULDER_HALF_WIDTH, SHOULDER_HEIGHT);
    let l_shoulder = at(SHOULDER_HALF_WIDTH, SHOULDER_HEIGHT);
    let r_elbow = segment(r_shoulder, UPPER_ARM, -0.8 * phi);
    let l_elbow = segment(l_shoulder, UPPER_ARM, 0.8 * phi);
    let r_wrist = segment(r_elbow, FOREARM, -0.8 * phi + 0.3);
    let l_wrist = segment(l_elbow, FOREARM, 0.8 * phi + 0.3);
    vec![
        r_ankle,
        r_knee,
        r_hip,
        l_hip,
        l_knee,
        l_ankle,
        r_wrist,
        r_elbow,
        r_shoulder,
        l_shoulder,
        l_elbow,
        l_wrist,
        at(0.0, NECK_HEIGHT),
        at(0.0, HEAD_TOP_HEIGHT),
    ]
}

/// Limb groups hidden together by an occlusion (campus14 indices).
pub const OCCLUSION_GROUPS: [&[usize]; 6] =
    [&[0, 1, 2, 3, 4, 5], &[0, 1, 2], &[3, 4, 5], &[6, 7, 8], &[9, 10, 11], &[12, 13]];

/// `P = K·[R | −R·o]`, applied directly to homogeneous world points.
struct ProjectionMatrix {
    p: [[f64; 4]; 3],
    size: (u32, u32),
}

impl ProjectionMatrix {
    fn new(cam: &CameraCalibration<f64>) -> Self {
        let kr = *cam.intrinsics() * *cam.rotation();
        let t = kr * cam.center();
        let mut p = [[0.0; 4]; 3];
        for (i, row) in p.iter_mut().enumerate() {
            for j in 0..3 {
                row[j] = kr[(i, j)];
            }
            row[3] = -[t.x, t.y, t.z][i];
        }
        Self { p, size: cam.image_size() }
    }

    /// Pixel of `x` if it lies in front of the camera and inside the image.
    fn project(&self, x: &Point3<f64>) -> Option<Point2<f64>> {
        let h = [x.x, x.y, x.z, 1.0];
        let row = |r: &[f64; 4]| r.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
        let w = row(&self.p[2]);
        if w <= 1e-9 {
            return None;
        }
        let px = Point2::new(row(&self.p[0]) / w, row(&self.p[1]) / w);
        inside(&px, self.size).then_some(px)
    }
}

fn inside(p: &Point2<f64>, size: (u32, u32)) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= (size.0 - 1) as f64 && p.y <= (size.1 - 1) as f64
}

/// Corrupt an exact detection. Invalid joints of `exact` stay invalid and are
/// classed occluded. Returns the detection and one class per joint.
pub fn corrupt_pose<R: Rng>(
    exact: &Pose2D<f64>,
    image_size: (u32, u32),
    cfg: &SceneConfig,
    rng: &mut R,
) -> (Pose2D<f64>, Vec<CorruptionClass>) {
    let hidden: &[usize] = if rng.random::<f64>() < cfg.occlusion_rate {
        OCCLUSION_GROUPS[rng.random_range(0..OCCLUSION_GROUPS.len())]
    } else {
        &[]
    };
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let mut classes = Vec::with_capacity(exact.joints.len());
    let joints = exact
        .joints
        .iter()
        .enumerate()
        .map(|(n, j)| {
            let jitter = Vector3::new(noise.sample(rng), noise.sample(rng), 0.0);
            let outlier = rng.random::<f64>() < cfg.outlier_rate;
            let magnitude = if outlier { rng.random_range(cfg.outlier_min..=cfg.outlier_max) } else { 0.0 };
            if !j.valid || hidden.contains(&n) {
                classes.push(CorruptionClass::Occluded);
                return Joint2D::invalid();
            }
            let mut p = Point2::new(j.position.x + jitter.x, j.position.y + jitter.y);
            if outlier {
                p = displace(p, magnitude, image_size, rng);
                classes.push(CorruptionClass::Outlier);
            } else if cfg.noise_sigma > 0.0 {
                classes.push(CorruptionClass::Noisy);
            } else {
                classes.push(CorruptionClass::Clean);
            }
            Joint2D { position: p, confidence: 1.0, valid: true }
        })
        .collect();
    (Pose2D { camera: exact.camera, timestamp: exact.timestamp, joints }, classes)
}

/// Move `p` by `magnitude` in a uniformly random direction, redrawing the
/// direction a few times to stay inside the image, then clamping.
fn displace<R: Rng>(p: Point2<f64>, magnitude: f64, size: (u32, u32), rng: &mut R) -> Point2<f64> {
    let mut q = p;
    for _ in 0..16 {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        q = Point2::new(p.x + magnitude * a.cos(), p.y + magnitude * a.sin());
        if inside(&q, size) {
            return q;
        }
    }
    Point2::new(q.x.clamp(0.0, (size.0 - 1) as f64), q.y.clamp(0.0, (size.1 - 1) as f64))
}

/// Everything one scene produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub config: SceneConfig,
    pub schema: JointSchema,
    pub cameras: Vec<CameraCalibration<f64>>,
    pub bundles: Vec<FrameBundle<f64>>,
    pub ground_truth: GroundTruth,
    pub sidecar: Vec<CorruptionRecord>,
}

/// Random stream for one frame.
pub fn frame_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    rng
}

/// Generate one frame: ground truth, detections and corruption records.
pub fn generate_frame(
    cfg: &SceneConfig,
    cameras: &[CameraCalibration<f64>],
    frame: u64,
) -> (GtFrame, FrameBundle<f64>, Vec<CorruptionRecord>) {
    let mut rng = frame_rng(cfg.seed, frame);
    let t = frame as f64 / cfg.fps;
    let actors: Vec<GtActor> =
        (0..cfg.actors).map(|i| GtActor { id: i as u32, joints: actor_joints(cfg, i, t), evaluate: true }).collect();
    let mut sidecar = Vec::new();
    let views = cameras
        .iter()
        .map(|cam| {
            let pm = ProjectionMatrix::new(cam);
            let mut order: Vec<usize> = (0..actors.len()).collect();
            order.shuffle(&mut rng);
            let mut poses = Vec::new();
            for a in order {
                let dropped = rng.random::<f64>() < cfg.dropout_rate;
                let exact = Pose2D {
                    camera: cam.id(),
                    timestamp: t,
                    joints: actors[a]
                        .joints
                        .iter()
                        .map(|x| match pm.project(x) {
                            Some(p) => Joint2D { position: p, confidence: 1.0, valid: true },
                            None => Joint2D::invalid(),
                        })
                        .collect(),
                };
                let (pose, classes) = corrupt_pose(&exact, cam.image_size(), cfg, &mut rng);
                if dropped || pose.valid_count() == 0 {
                    continue;
                }
                for (joint, class) in classes.into_iter().enumerate() {
                    sidecar.push(CorruptionRecord {
                        frame,
                        camera: cam.id().0,
                        pose: poses.len(),
                        joint,
                        class,
                        actor: a as u32,
                    });
                }
                poses.push(pose);
            }
            CameraView { camera: cam.id(), poses }
        })
        .collect();
    (GtFrame { frame, actors }, FrameBundle { frame, time: t, views }, sidecar)
}

pub fn generate(cfg: &SceneConfig) -> Result<SynthScene, SynthError> {
    cfg.validate()?;
    let cameras = ring_cameras(cfg)?;
    let schema = JointSchema::campus14();
    let mut bundles = Vec::with_capacity(cfg.frames as usize);
    let mut gt_frames = Vec::with_capacity(cfg.frames as usize);
    let mut sidecar = Vec::new();
    for frame in 0..cfg.frames {
        let (gt, bundle, records) = generate_frame(cfg, &cameras, frame);
        gt_frames.push(gt);
        bundles.push(bundle);
        sidecar.extend(records);
    }
    Ok(SynthScene {
        config: cfg.clone(),
        ground_truth: GroundTruth { schema: schema.clone(), frames: gt_frames },
        schema,
        cameras,
        bundles,
        sidecar,
    })
}

impl SynthScene {
    /// Write calibration, detections, ground truth and sidecar into `dir`.
    pub fn export(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir).map_err(|e| IoError::Io { path: dir.to_path_buf(), source: e })?;
        io::write_calibration(&dir.join(CALIBRATION_FILE), &self.cameras)?;
        let mut w = io::DetectionWriter::create(&dir.join(DETECTIONS_FILE), &self.schema)?;
        for b in &self.bundles {
            w.write_bundle(b)?;
        }
        io::write_ground_truth(&dir.join(GROUND_TRUTH_FILE), &self.ground_truth)?;
        io::write_sidecar(&dir.join(SIDECAR_FILE), &self.sidecar)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;
    use crate::io::CorruptionClass as C;

    fn small() -> SceneConfig {
        SceneConfig { frames: 20, ..SceneConfig::default() }
    }

    #[test]
    fn noiseless_detections_are_exact_projections() {
        let cfg = SceneConfig { noise_sigma: 0.0, ..small() };
        let scene = generate(&cfg).unwrap();
        for b in &scene.bundles {
            let gt = &scene.ground_truth.frames[b.frame as usize];
            for (view, cam) in b.views.iter().zip(&scene.cameras) {
                assert_eq!(view.poses.len(), cfg.actors);
                for (k, pose) in view.poses.iter().enumerate() {
                    let actor = scene
                        .sidecar
                        .iter()
                        .find(|r| r.frame == b.frame && r.camera == cam.id().0 && r.pose == k)
                        .unwrap()
                        .actor;
                    for (j, x) in pose.joints.iter().zip(&gt.actors[actor as usize].joints) {
                        let p = project(x, cam).unwrap();
                        assert!((j.position - p).norm() < 1e-9);
                    }
                }
            }
        }
        assert!(scene.sidecar.iter().all(|r| r.class == C::Clean));
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let short = generate(&SceneConfig { frames: 7, ..small() }).unwrap();
        assert_eq!(&a.bundles[..7], &short.bundles[..]);
        let other = generate(&SceneConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.bundles, other.bundles);
    }

    #[test]
    fn sidecar_covers_every_joint_once() {
        let cfg = SceneConfig { outlier_rate: 0.2, occlusion_rate: 0.3, dropout_rate: 0.1, ..small() };
        let scene = generate(&cfg).unwrap();
        let joints: usize =
            scene.bundles.iter().flat_map(|b| &b.views).flat_map(|v| &v.poses).map(|p| p.joints.len()).sum();
        assert_eq!(scene.sidecar.len(), joints);
        for r in &scene.sidecar {
            let pose = &scene.bundles[r.frame as usize].views[r.camera as usize].poses[r.pose];
            assert_eq!(pose.joints[r.joint].valid, r.class != C::Occluded);
        }
    }

    #[test]
    fn zero_magnitude_outliers_look_like_noise() {
        let cfg = SceneConfig { outlier_rate: 1.0, outlier_min: 0.0, outlier_max: 0.0, noise_sigma: 0.0, ..small() };
        let exact = Pose2D {
            camera: CameraId(0),
            timestamp: 0.0,
            joints: (0..14)
                .map(|n| Joint2D { position: Point2::new(100.0 + n as f64, 200.0), confidence: 1.0, valid: true })
                .collect(),
        };
        let (pose, classes) = corrupt_pose(&exact, (1280, 960), &cfg, &mut frame_rng(0, 0));
        assert!(classes.iter().all(|c| *c == C::Outlier));
        assert_eq!(pose, exact);
    }

    #[test]
    fn config_validation() {
        assert!(SceneConfig::from_toml("outlier_rate = 1.5").is_err());
        assert!(SceneConfig::from_toml("cameras = 1").is_err());
        assert!(SceneConfig::from_toml("noise_sigma = -1.0").is_err());
        assert!(SceneConfig::from_toml("bogus = 1").is_err());
        let cfg = SceneConfig::from_toml("seed = 5\nmotion = \"swing\"\nactors = 4").unwrap();
        assert_eq!((cfg.seed, cfg.motion, cfg.actors), (5, Motion::Swing, 4));
        assert_eq!(SceneConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn limb_lengths_are_constant() {
        let cfg = SceneConfig::default();
        let schema = JointSchema::campus14();
        let len = |j: &[Point3<f64>]| schema.limbs().iter().map(|l| j[l.a].distance(&j[l.b])).collect::<Vec<_>>();
        let first = len(&actor_joints(&cfg, 1, 0.0));
        for f in 1..50 {
            let now = len(&actor_joints(&cfg, 1, f as f64 * 0.13));
            for (a, b) in first.iter().zip(&now) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
