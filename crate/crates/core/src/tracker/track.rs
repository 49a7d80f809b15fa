use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraId, Point3};
use crate::linalg::Vector3;
use crate::pose::{Joint3D, JointFlag, Pose2D, Skeleton3D};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackId(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-joint constant-velocity motion model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantVelocity<T> {
    velocity: Vec<Vector3<T>>,
}

impl<T: Scalar> ConstantVelocity<T> {
    pub fn at_rest(joints: usize) -> Self {
        Self { velocity: vec![Vector3::zeros(); joints] }
    }

    /// Velocity from two consecutive skeletons; rest if they share a timestamp.
    pub fn from_pair(prev: &Skeleton3D<T>, current: &Skeleton3D<T>) -> Self {
        let dt = current.timestamp - prev.timestamp;
        if !(dt > T::zero()) {
            return Self::at_rest(current.joints.len());
        }
        let velocity =
            prev.joints.iter().zip(&current.joints).map(|(a, b)| (b.position - a.position) * (T::one() / dt)).collect();
        Self { velocity }
    }

    pub fn velocity(&self) -> &[Vector3<T>] {
        &self.velocity
    }

    /// `Xⁿ + vⁿ·(t − t')` for every joint, flagged `Predicted`.
    pub fn extrapolate(&self, from: &Skeleton3D<T>, t: T) -> Skeleton3D<T> {
        let dt = t - from.timestamp;
        let joints = from
            .joints
            .iter()
            .zip(&self.velocity)
            .map(|(j, v)| Joint3D { position: j.position + *v * dt, flag: JointFlag::Predicted })
            .collect();
        Skeleton3D { timestamp: t, joints }
    }
}

/// One tracked person.
#[derive(Debug, Clone)]
pub struct Track<T> {
    pub(crate) id: TrackId,
    /// Latest emitted skeleton, at time t'.
    pub(crate) skeleton: Skeleton3D<T>,
    /// Latest matched detection per camera; its timestamp is t'_c.
    pub(crate) last_matched: BTreeMap<CameraId, Pose2D<T>>,
    pub(crate) motion: ConstantVelocity<T>,
    /// Unsmoothed skeletons, oldest first.
    pub(crate) smooth_buffer: VecDeque<Skeleton3D<T>>,
    pub(crate) misses: u32,
}

impl<T: Scalar> Track<T> {
    pub fn new(id: TrackId, skeleton: Skeleton3D<T>, matched: impl IntoIterator<Item = Pose2D<T>>) -> Self {
        let motion = ConstantVelocity::at_rest(skeleton.joints.len());
        let mut smooth_buffer = VecDeque::new();
        smooth_buffer.push_back(skeleton.clone());
        Self {
            id,
            skeleton,
            last_matched: matched.into_iter().map(|p| (p.camera, p)).collect(),
            motion,
            smooth_buffer,
            misses: 0,
        }
    }

    pub fn id(&self) -> TrackId {
        self.id
    }

    pub fn skeleton(&self) -> &Skeleton3D<T> {
        &self.skeleton
    }

    /// Time of the latest skeleton.
    pub fn updated_at(&self) -> T {
        self.skeleton.timestamp
    }

    pub fn last_matched(&self) -> &BTreeMap<CameraId, Pose2D<T>> {
        &self.last_matched
    }

    pub fn misses(&self) -> u32 {
        self.misses
    }

    pub fn motion(&self) -> &ConstantVelocity<T> {
        &self.motion
    }

    /// Motion-model estimate of the skeleton at time `t`.
    pub fn predict(&self, t: T) -> Skeleton3D<T> {
        self.motion.extrapolate(&self.skeleton, t)
    }

    /// Accept a new skeleton: updates the smoothing buffer, optionally smooths,
    /// and refreshes the velocity from the previous and new output.
    pub(crate) fn commit(&mut self, raw: Skeleton3D<T>, smoothing: Option<(usize, T)>) {
        self.smooth_buffer.push_back(raw.clone());
        let window = smoothing.map_or(1, |(w, _)| w.max(1));
        while self.smooth_buffer.len() > window {
            self.smooth_buffer.pop_front();
        }
        let output = match smoothing {
            Some((_, sigma)) => gaussian_smooth(&self.smooth_buffer, sigma),
            None => raw,
        };
        self.motion = ConstantVelocity::from_pair(&self.skeleton, &output);
        self.skeleton = output;
    }

    /// Advance on prediction alone; the output is not smoothed.
    pub(crate) fn coast(&mut self, t: T, window: usize) {
        let predicted = self.predict(t);
        self.smooth_buffer.push_back(predicted.clone());
        while self.smooth_buffer.len() > window.max(1) {
            self.smooth_buffer.pop_front();
        }
        self.skeleton = predicted;
        self.misses += 1;
    }
}

/// Causal Gaussian filter over a trailing buffer (oldest first): the newest
/// entry gets weight 1, the one `k` steps older `exp(−k² / 2σ²)`, weights
/// renormalized over what is available. Flags and timestamp come from the
/// newest entry.
pub fn gaussian_smooth<T: Scalar>(buffer: &VecDeque<Skeleton3D<T>>, sigma: T) -> Skeleton3D<T> {
    let newest = buffer.back().expect("smoothing buffer is never empty");
    let two_sigma_sq = T::lit(2.0) * sigma * sigma;
    let weights: Vec<T> = (0..buffer.len())
        .map(|k| {
            let k = T::lit(k as f64);
            (-(k * k) / two_sigma_sq).exp()
        })
        .collect();
    let total: T = weights.iter().copied().sum();
    let joints = newest
        .joints
        .iter()
        .enumerate()
        .map(|(n, j)| {
            let sum =
                buffer.iter().rev().zip(&weights).fold(Point3::zeros(), |acc, (s, w)| acc + s.joints[n].position * *w);
            Joint3D { position: sum * (T::one() / total), flag: j.flag }
        })
        .collect();
    Skeleton3D { timestamp: newest.timestamp, joints }
}
