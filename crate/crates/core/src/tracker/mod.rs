//! Cross-view tracking: association of detections to tracks, per-joint
//! filtering and weighted triangulation, and initialization of new tracks.

mod filter;
mod init;
mod track;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::affinity::{
    body_aware_score, joint_affinities, part_aware_score, project_skeleton, AffinityError, EpipolarRig,
};
use crate::assignment::{self, AffinityMatrix};
use crate::config::TrackerConfig;
use crate::geometry::{triangulate_dlt, CameraCalibration, CameraId, GeometryError, Observation};
use crate::pose::{Joint3D, JointFlag, Pose2D, Skeleton3D};
use crate::Scalar;

pub use filter::{joints_filter_init, joints_filter_tracked, JointObservation};
pub use init::{cluster_unmatched, reconstruct_cluster, Cluster};
pub use track::{gaussian_smooth, ConstantVelocity, Track, TrackId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("frame time {time} s does not follow previous frame time {previous} s")]
    NonMonotonicTime { time: f64, previous: f64 },
    #[error("unknown camera {0}")]
    UnknownCamera(CameraId),
    #[error("camera {0} appears twice in one frame")]
    DuplicateCamera(CameraId),
    #[error("pose from {camera} has {found} joints, expected {expected}")]
    JointCount { camera: CameraId, found: usize, expected: usize },
    #[error("track {0} has no recent observations")]
    NoRecentObservations(TrackId),
    #[error(transparent)]
    Affinity(#[from] AffinityError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Detections of one camera at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView<T> {
    pub camera: CameraId,
    pub poses: Vec<Pose2D<T>>,
}

/// All detections for one frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle<T> {
    pub frame: u64,
    pub time: T,
    pub views: Vec<CameraView<T>>,
}

/// Emitted state of one track after a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput<T> {
    pub id: TrackId,
    pub skeleton: Skeleton3D<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput<T> {
    pub frame: u64,
    pub time: T,
    /// Sorted by id.
    pub tracks: Vec<TrackOutput<T>>,
}

/// Accumulated wall-clock time per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub frames: u64,
    pub association: Duration,
    pub reconstruction: Duration,
    pub initialization: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.association + self.reconstruction + self.initialization
    }

    pub fn mean_per_frame(&self) -> Duration {
        if self.frames == 0 {
            Duration::ZERO
        } else {
            self.total() / self.frames as u32
        }
    }
}

/// Result of matching one frame's detections to the live tracks.
#[derive(Debug, Clone, Default)]
pub struct Association<T> {
    /// Per track (same order as the input tracks): matched (camera index, pose index).
    pub matched: Vec<Vec<(usize, usize)>>,
    /// Per camera index present in the frame: pose indices no track claimed.
    pub unmatched: Vec<(usize, Vec<usize>)>,
    /// Affinity matrix per camera index, rows = tracks, cols = poses.
    pub matrices: Vec<(usize, AffinityMatrix<T>)>,
}

/// Skeleton used to score a track against detections: the last state, or its
/// positions moved to the prediction at `t` (timestamp kept at t').
fn reference_skeleton<T: Scalar>(track: &Track<T>, t: T, cfg: &TrackerConfig<T>) -> Skeleton3D<T> {
    if !cfg.project_predicted {
        return track.skeleton().clone();
    }
    let predicted = track.predict(t);
    let joints = track
        .skeleton()
        .joints
        .iter()
        .zip(predicted.joints)
        .map(|(j, p)| Joint3D { position: p.position, flag: j.flag })
        .collect();
    Skeleton3D { timestamp: track.updated_at(), joints }
}

/// Score every (track, pose) pair per camera and solve each camera's
/// assignment independently. `views` holds (camera index, poses); poses with
/// no valid joint are left out of both matched and unmatched sets.
pub fn associate<T: Scalar>(
    tracks: &[Track<T>],
    views: &[(usize, &[Pose2D<T>])],
    t: T,
    rig: &EpipolarRig<T>,
    cfg: &TrackerConfig<T>,
) -> Result<Association<T>, TrackerError> {
    let references: Vec<Skeleton3D<T>> = tracks.iter().map(|tr| reference_skeleton(tr, t, cfg)).collect();
    let mut out = Association { matched: vec![Vec::new(); tracks.len()], ..Default::default() };
    for &(cam, poses) in views {
        let camera = rig.camera(cam);
        let usable: Vec<usize> = (0..poses.len()).filter(|&j| poses[j].valid_count() > 0).collect();
        let mut a = AffinityMatrix::zeros(tracks.len(), usable.len());
        for (i, skel) in references.iter().enumerate() {
            let projections = project_skeleton(skel, camera);
            for (col, &j) in usable.iter().enumerate() {
                let pose = &poses[j];
                let aff = joint_affinities(pose, &projections, pose.timestamp - skel.timestamp, &cfg.affinity)?;
                let score =
                    if cfg.part_aware { part_aware_score(&aff, cfg.affinity.epsilon) } else { body_aware_score(&aff) };
                a.set(i, col, score);
            }
        }
        let matching = assignment::solve(&a, cfg.min_affinity);
        for &(i, col) in &matching.pairs {
            out.matched[i].push((cam, usable[col]));
        }
        out.unmatched.push((cam, matching.unmatched_cols.iter().map(|&c| usable[c]).collect()));
        out.matrices.push((cam, a));
    }
    Ok(out)
}

/// Reconstruct a track at time `t` from its recent per-camera detections.
///
/// Cameras whose last match is younger than τ frames take part. Each joint is
/// filtered against the motion prediction, then triangulated with weights
/// `exp(−λ·(t − t'_c))`; joints with fewer than two surviving views, or whose
/// triangulation fails, fall back to the prediction. The result is unsmoothed.
pub fn reconstruct<T: Scalar>(
    track: &Track<T>,
    t: T,
    rig: &EpipolarRig<T>,
    cfg: &TrackerConfig<T>,
) -> Result<Skeleton3D<T>, TrackerError> {
    let predicted = track.predict(t);
    let tau = T::lit(cfg.affinity.tau as f64) - T::lit(1e-6);
    let recent: Vec<(usize, &Pose2D<T>)> = track
        .last_matched()
        .values()
        .filter_map(|pose| {
            let cam = rig.index_of(pose.camera)?;
            let age = (t - pose.timestamp) * rig.camera(cam).fps();
            (age >= T::zero() && age < tau).then_some((cam, pose))
        })
        .collect();
    if recent.is_empty() {
        return Err(TrackerError::NoRecentObservations(track.id()));
    }
    let joints = predicted
        .joints
        .iter()
        .enumerate()
        .map(|(n, fallback)| {
            let obs: Vec<(JointObservation<T>, T)> =
                recent.iter().filter_map(|(cam, pose)| pose.joint(n).map(|px| ((*cam, *px), pose.timestamp))).collect();
            let pixels: Vec<JointObservation<T>> = obs.iter().map(|(o, _)| *o).collect();
            let survivors = if cfg.joints_filter && pixels.len() >= 2 {
                joints_filter_tracked(&pixels, &fallback.position, rig, cfg.affinity.alpha_epi)?
            } else {
                (0..pixels.len()).collect()
            };
            if survivors.len() < 2 {
                return Ok(*fallback);
            }
            let views: Vec<Observation<'_, T>> = survivors
                .iter()
                .map(|&k| {
                    let ((cam, pixel), stamp) = obs[k];
                    let weight = (-cfg.recon_lambda * (t - stamp)).exp().max(T::min_positive_value());
                    Observation { pixel, camera: rig.camera(cam), weight }
                })
                .collect();
            Ok(match triangulate_dlt(&views) {
                Ok(position) if init::in_front_of_all(&position, &views) => {
                    Joint3D { position, flag: JointFlag::Triangulated }
                }
                _ => *fallback,
            })
        })
        .collect::<Result<Vec<_>, TrackerError>>()?;
    Ok(Skeleton3D { timestamp: t, joints })
}

/// On-line multi-person tracker over a fixed camera rig.
#[derive(Debug, Clone)]
pub struct Tracker<T> {
    rig: EpipolarRig<T>,
    cfg: TrackerConfig<T>,
    joint_count: usize,
    tracks: Vec<Track<T>>,
    next_id: u64,
    last_time: Option<T>,
    timings: StageTimings,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(
        cameras: Vec<CameraCalibration<T>>,
        cfg: TrackerConfig<T>,
        joint_count: usize,
    ) -> Result<Self, TrackerError> {
        Ok(Self {
            rig: EpipolarRig::new(cameras)?,
            cfg,
            joint_count,
            tracks: Vec::new(),
            next_id: 0,
            last_time: None,
            timings: StageTimings::default(),
        })
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.cfg
    }

    pub fn rig(&self) -> &EpipolarRig<T> {
        &self.rig
    }

    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    pub fn timings(&self) -> &StageTimings {
        &self.timings
    }

    fn check_bundle(&self, bundle: &FrameBundle<T>) -> Result<Vec<(usize, usize)>, TrackerError> {
        if let Some(previous) = self.last_time {
            if !(bundle.time > previous) {
                return Err(TrackerError::NonMonotonicTime { time: bundle.time.as_f64(), previous: previous.as_f64() });
            }
        }
        let mut seen = BTreeMap::new();
        for (v, view) in bundle.views.iter().enumerate() {
            let cam = self.rig.index_of(view.camera).ok_or(TrackerError::UnknownCamera(view.camera))?;
            if seen.insert(cam, v).is_some() {
                return Err(TrackerError::DuplicateCamera(view.camera));
            }
            for pose in &view.poses {
                if pose.joints.len() != self.joint_count {
                    return Err(TrackerError::JointCount {
                        camera: view.camera,
                        found: pose.joints.len(),
                        expected: self.joint_count,
                    });
                }
            }
        }
        Ok(seen.into_iter().collect())
    }

    /// Process one frame and return every live track.
    pub fn step(&mut self, bundle: &FrameBundle<T>) -> Result<FrameOutput<T>, TrackerError> {
        let order = self.check_bundle(bundle)?;
        let t = bundle.time;
        let views: Vec<(usize, &[Pose2D<T>])> =
            order.iter().map(|&(cam, v)| (cam, bundle.views[v].poses.as_slice())).collect();

        let started = Instant::now();
        let association = associate(&self.tracks, &views, t, &self.rig, &self.cfg)?;
        let associated = Instant::now();

        let pose_at = |cam: usize, j: usize| -> &Pose2D<T> {
            let (_, poses) = views.iter().find(|(c, _)| *c == cam).expect("camera in frame");
            &poses[j]
        };
        let smoothing = self.cfg.smoothing.then_some((self.cfg.smooth_window, self.cfg.smooth_sigma));
        for (track, matched) in self.tracks.iter_mut().zip(&association.matched) {
            if matched.is_empty() {
                track.coast(t, self.cfg.smooth_window);
                continue;
            }
            for &(cam, j) in matched {
                let pose = pose_at(cam, j).clone();
                track.last_matched.insert(pose.camera, pose);
            }
            match reconstruct(track, t, &self.rig, &self.cfg) {
                Ok(raw) => {
                    track.commit(raw, smoothing);
                    track.misses = 0;
                }
                Err(TrackerError::NoRecentObservations(_)) => track.coast(t, self.cfg.smooth_window),
                Err(e) => return Err(e),
            }
        }
        let reconstructed = Instant::now();

        let unmatched: Vec<(usize, Vec<&Pose2D<T>>)> = association
            .unmatched
            .iter()
            .map(|(cam, js)| (*cam, js.iter().map(|&j| pose_at(*cam, j)).collect()))
            .collect();
        let clusters = cluster_unmatched(&unmatched, &self.rig, &self.cfg)?;
        for cluster in &clusters {
            if let Some(skeleton) = reconstruct_cluster(cluster, t, self.joint_count, &self.rig, &self.cfg)? {
                let id = TrackId(self.next_id);
                self.next_id += 1;
                let matched = cluster.iter().map(|(_, p)| (*p).clone());
                self.tracks.push(Track::new(id, skeleton, matched));
            }
        }
        let max_misses = self.cfg.max_misses;
        self.tracks.retain(|tr| tr.misses() <= max_misses);
        let initialized = Instant::now();

        self.timings.frames += 1;
        self.timings.association += associated - started;
        self.timings.reconstruction += reconstructed - associated;
        self.timings.initialization += initialized - reconstructed;
        self.last_time = Some(t);

        let tracks =
            self.tracks.iter().map(|tr| TrackOutput { id: tr.id(), skeleton: tr.skeleton().clone() }).collect();
        Ok(FrameOutput { frame: bundle.frame, time: t, tracks })
    }
}
