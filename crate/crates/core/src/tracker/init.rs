//! Creating new tracks from detections no existing track claimed.

use crate::affinity::EpipolarRig;
use crate::assignment::{self, AffinityMatrix};
use crate::config::TrackerConfig;
use crate::geometry::{triangulate_dlt, Observation, Point3};
use crate::pose::{Joint3D, JointFlag, Pose2D, Skeleton3D};
use crate::tracker::filter::{joints_filter_init, JointObservation};
use crate::tracker::TrackerError;
use crate::Scalar;

/// Cross-view group of detections believed to be one person: (camera index, pose).
pub type Cluster<'a, T> = Vec<(usize, &'a Pose2D<T>)>;

/// Group unmatched detections across cameras.
///
/// Cameras are visited in rig order. The first non-empty camera seeds one
/// cluster per detection; every later camera is matched against the current
/// clusters by epipolar pose affinity (a cluster scores as its best member),
/// matched detections join their cluster and the rest start new clusters.
pub fn cluster_unmatched<'a, T: Scalar>(
    unmatched: &[(usize, Vec<&'a Pose2D<T>>)],
    rig: &EpipolarRig<T>,
    cfg: &TrackerConfig<T>,
) -> Result<Vec<Cluster<'a, T>>, TrackerError> {
    let mut ordered: Vec<&(usize, Vec<&Pose2D<T>>)> = unmatched.iter().collect();
    ordered.sort_by_key(|(cam, _)| *cam);
    let mut clusters: Vec<Cluster<'a, T>> = Vec::new();
    for (cam, poses) in ordered {
        if poses.is_empty() {
            continue;
        }
        if clusters.is_empty() {
            clusters.extend(poses.iter().map(|p| vec![(*cam, *p)]));
            continue;
        }
        let mut scores = AffinityMatrix::zeros(clusters.len(), poses.len());
        for (k, cluster) in clusters.iter().enumerate() {
            for (j, pose) in poses.iter().enumerate() {
                let mut best = T::neg_infinity();
                for (member_cam, member) in cluster {
                    let s = rig.pose_affinity(*member_cam, member, *cam, pose, cfg.affinity.alpha_epi)?;
                    best = best.max(s);
                }
                scores.set(k, j, best);
            }
        }
        let matching = assignment::solve(&scores, cfg.min_affinity);
        for &(k, j) in &matching.pairs {
            clusters[k].push((*cam, poses[j]));
        }
        for &j in &matching.unmatched_cols {
            clusters.push(vec![(*cam, poses[j])]);
        }
    }
    Ok(clusters)
}

/// Reconstruct a first skeleton from a cluster seen in at least two cameras.
///
/// Returns `None` when fewer than `init_min_joints` joints triangulate. Joints
/// that cannot be triangulated are placed at the centroid of the triangulated
/// ones and flagged `Predicted`.
pub fn reconstruct_cluster<T: Scalar>(
    cluster: &Cluster<'_, T>,
    t: T,
    joint_count: usize,
    rig: &EpipolarRig<T>,
    cfg: &TrackerConfig<T>,
) -> Result<Option<Skeleton3D<T>>, TrackerError> {
    if cluster.len() < 2 {
        return Ok(None);
    }
    let mut joints: Vec<Option<Point3<T>>> = Vec::with_capacity(joint_count);
    for n in 0..joint_count {
        let obs: Vec<JointObservation<T>> =
            cluster.iter().filter_map(|(cam, pose)| pose.joint(n).map(|px| (*cam, *px))).collect();
        let survivors = if cfg.joints_filter && obs.len() >= 2 {
            joints_filter_init(&obs, rig, cfg.affinity.alpha_epi)?
        } else {
            (0..obs.len()).collect()
        };
        let point = if survivors.len() >= 2 {
            let views: Vec<_> = survivors
                .iter()
                .map(|&k| Observation { pixel: obs[k].1, camera: rig.camera(obs[k].0), weight: T::one() })
                .collect();
            triangulate_dlt(&views).ok().filter(|p| in_front_of_all(p, &views))
        } else {
            None
        };
        joints.push(point);
    }
    let found: Vec<Point3<T>> = joints.iter().flatten().copied().collect();
    if found.len() < cfg.init_min_joints.max(1) {
        return Ok(None);
    }
    let centroid = found.iter().fold(Point3::zeros(), |acc, p| acc + *p) * (T::one() / T::lit(found.len() as f64));
    let joints = joints
        .into_iter()
        .map(|p| match p {
            Some(position) => Joint3D { position, flag: JointFlag::Triangulated },
            None => Joint3D { position: centroid, flag: JointFlag::Predicted },
        })
        .collect();
    Ok(Some(Skeleton3D { timestamp: t, joints }))
}

pub(crate) fn in_front_of_all<T: Scalar>(p: &Point3<T>, views: &[Observation<'_, T>]) -> bool {
    views.iter().all(|v| v.camera.depth(p) > T::zero())
}
