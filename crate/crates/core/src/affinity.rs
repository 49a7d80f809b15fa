//! Scores between 2D detections and tracked 3D skeletons, and between 2D
//! detections seen from different cameras.

use thiserror::Error;

use crate::config::AffinityConfig;
use crate::geometry::{
    epipolar_line_with, fundamental_matrix, point_line_distance_2d, project, CameraCalibration, GeometryError, Point2,
};
use crate::linalg::Matrix3;
use crate::pose::{JointFlag, Pose2D, Skeleton3D};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AffinityError {
    #[error("time interval {dt} s is shorter than one frame ({min} s)")]
    InvalidInterval { dt: f64, min: f64 },
    #[error("pose has no valid joints")]
    NoValidJoints,
    #[error("cameras must differ")]
    SameCamera,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Relative slack on the one-frame minimum, absorbing timestamp rounding.
const INTERVAL_SLACK: f64 = 1e-6;

/// Affinity of one detected joint to the projection of a tracked joint
/// observed `dt` seconds earlier:
/// `(1 − ‖x − x̃‖ / (α₂D·dt)) · exp(−λ·dt)`.
///
/// Negative when the displacement exceeds what the velocity threshold allows.
pub fn joint_affinity<T: Scalar>(
    x: &Point2<T>,
    x_proj: &Point2<T>,
    dt: T,
    cfg: &AffinityConfig<T>,
) -> Result<T, AffinityError> {
    let min = cfg.frame_interval * (T::one() - T::lit(INTERVAL_SLACK));
    if !(dt >= min) {
        return Err(AffinityError::InvalidInterval { dt: dt.as_f64(), min: cfg.frame_interval.as_f64() });
    }
    let dt = cfg.max_dt.map_or(dt, |m| dt.min(m));
    let displacement = (*x - *x_proj).norm();
    Ok((T::one() - displacement / (cfg.alpha_2d * dt)) * (-cfg.lambda_a * dt).exp())
}

/// Projections of every non-missing skeleton joint into `cam`; joints behind
/// the camera come back as `None`.
pub fn project_skeleton<T: Scalar>(skeleton: &Skeleton3D<T>, cam: &CameraCalibration<T>) -> Vec<Option<Point2<T>>> {
    skeleton
        .joints
        .iter()
        .map(|j| match j.flag {
            JointFlag::Missing => None,
            _ => project(&j.position, cam).ok(),
        })
        .collect()
}

/// Per-joint affinities over joints valid in the pose and projectable from
/// the skeleton. `None` marks joints that take no part in the score.
pub fn joint_affinities<T: Scalar>(
    pose: &Pose2D<T>,
    projections: &[Option<Point2<T>>],
    dt: T,
    cfg: &AffinityConfig<T>,
) -> Result<Vec<Option<T>>, AffinityError> {
    if pose.valid_count() == 0 {
        return Err(AffinityError::NoValidJoints);
    }
    pose.joints
        .iter()
        .zip(projections.iter())
        .map(|(j, p)| match (j.valid, p) {
            (true, Some(p)) => joint_affinity(&j.position, p, dt, cfg).map(Some),
            _ => Ok(None),
        })
        .collect()
}

/// Positive-count threshold for a pose with `mutual` scorable joints out of
/// `total`: `epsilon` scaled by the visible fraction, rounded up, at least 1.
pub fn effective_epsilon(epsilon: usize, mutual: usize, total: usize) -> usize {
    if total == 0 {
        return epsilon.max(1);
    }
    ((epsilon * mutual).div_ceil(total)).max(1)
}

/// Part-aware aggregation: mean of the strictly positive joint affinities,
/// or 0 when fewer than the (visibility-scaled) `epsilon` are positive.
pub fn part_aware_score<T: Scalar>(affinities: &[Option<T>], epsilon: usize) -> T {
    let mutual = affinities.iter().flatten().count();
    if mutual == 0 {
        return T::zero();
    }
    let positives: Vec<T> = affinities.iter().flatten().copied().filter(|a| *a > T::zero()).collect();
    if positives.len() < effective_epsilon(epsilon, mutual, affinities.len()) {
        return T::zero();
    }
    positives.iter().copied().sum::<T>() / T::lit(positives.len() as f64)
}

/// Body-aware aggregation: mean of every scorable joint affinity.
pub fn body_aware_score<T: Scalar>(affinities: &[Option<T>]) -> T {
    let all: Vec<T> = affinities.iter().flatten().copied().collect();
    if all.is_empty() {
        return T::zero();
    }
    all.iter().copied().sum::<T>() / T::lit(all.len() as f64)
}

/// Part-aware affinity of a 2D pose to a tracked skeleton last updated at
/// `skeleton.timestamp`.
pub fn pose_track_affinity<T: Scalar>(
    pose: &Pose2D<T>,
    skeleton: &Skeleton3D<T>,
    cam: &CameraCalibration<T>,
    cfg: &AffinityConfig<T>,
) -> Result<T, AffinityError> {
    let projections = project_skeleton(skeleton, cam);
    let a = joint_affinities(pose, &projections, pose.timestamp - skeleton.timestamp, cfg)?;
    Ok(part_aware_score(&a, cfg.epsilon))
}

/// Mean over all valid joint affinities, negative ones included.
pub fn body_aware_affinity<T: Scalar>(
    pose: &Pose2D<T>,
    skeleton: &Skeleton3D<T>,
    cam: &CameraCalibration<T>,
    cfg: &AffinityConfig<T>,
) -> Result<T, AffinityError> {
    let projections = project_skeleton(skeleton, cam);
    let a = joint_affinities(pose, &projections, pose.timestamp - skeleton.timestamp, cfg)?;
    Ok(body_aware_score(&a))
}

/// Symmetric epipolar score of two observations of one joint:
/// `1 − (d(xᵢ, Lⱼ) + d(xⱼ, Lᵢ)) / (2·α_epi)` where `Lⱼ` is the epipolar line
/// of `xⱼ` in camera `i`.
pub fn epipolar_joint_affinity<T: Scalar>(
    x_i: &Point2<T>,
    cam_i: &CameraCalibration<T>,
    x_j: &Point2<T>,
    cam_j: &CameraCalibration<T>,
    alpha_epi: T,
) -> Result<T, AffinityError> {
    if cam_i.id() == cam_j.id() {
        return Err(AffinityError::SameCamera);
    }
    let f_ij = fundamental_matrix(cam_i, cam_j)?;
    let f_ji = fundamental_matrix(cam_j, cam_i)?;
    epipolar_score(&f_ij, &f_ji, x_i, x_j, alpha_epi)
}

fn epipolar_score<T: Scalar>(
    f_ij: &Matrix3<T>,
    f_ji: &Matrix3<T>,
    x_i: &Point2<T>,
    x_j: &Point2<T>,
    alpha_epi: T,
) -> Result<T, AffinityError> {
    let line_in_j = epipolar_line_with(f_ij, x_i)?;
    let line_in_i = epipolar_line_with(f_ji, x_j)?;
    let d = point_line_distance_2d(x_i, &line_in_i) + point_line_distance_2d(x_j, &line_in_j);
    Ok(T::one() - d / (alpha_epi + alpha_epi))
}

/// Fundamental matrices between every ordered pair of a camera rig.
#[derive(Debug, Clone)]
pub struct EpipolarRig<T> {
    cameras: Vec<CameraCalibration<T>>,
    fundamentals: Vec<Vec<Option<Matrix3<T>>>>,
}

impl<T: Scalar> EpipolarRig<T> {
    pub fn new(cameras: Vec<CameraCalibration<T>>) -> Result<Self, AffinityError> {
        let n = cameras.len();
        let mut fundamentals = vec![vec![None; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    if cameras[i].id() == cameras[j].id() {
                        return Err(AffinityError::SameCamera);
                    }
                    fundamentals[i][j] = Some(fundamental_matrix(&cameras[i], &cameras[j])?);
                }
            }
        }
        Ok(Self { cameras, fundamentals })
    }

    pub fn cameras(&self) -> &[CameraCalibration<T>] {
        &self.cameras
    }

    pub fn camera(&self, idx: usize) -> &CameraCalibration<T> {
        &self.cameras[idx]
    }

    pub fn index_of(&self, id: crate::geometry::CameraId) -> Option<usize> {
        self.cameras.iter().position(|c| c.id() == id)
    }

    /// Epipolar joint score between camera indices `i` and `j`.
    pub fn joint_affinity(
        &self,
        i: usize,
        x_i: &Point2<T>,
        j: usize,
        x_j: &Point2<T>,
        alpha_epi: T,
    ) -> Result<T, AffinityError> {
        match (&self.fundamentals[i][j], &self.fundamentals[j][i]) {
            (Some(f_ij), Some(f_ji)) => epipolar_score(f_ij, f_ji, x_i, x_j, alpha_epi),
            _ => Err(AffinityError::SameCamera),
        }
    }

    /// Sum of joint scores over joints valid in both poses.
    pub fn pose_affinity(
        &self,
        i: usize,
        pose_i: &Pose2D<T>,
        j: usize,
        pose_j: &Pose2D<T>,
        alpha_epi: T,
    ) -> Result<T, AffinityError> {
        let mut total = T::zero();
        for n in 0..pose_i.joints.len().min(pose_j.joints.len()) {
            if let (Some(a), Some(b)) = (pose_i.joint(n), pose_j.joint(n)) {
                total = total + self.joint_affinity(i, a, j, b, alpha_epi)?;
            }
        }
        Ok(total)
    }

    /// Pairwise scores of one joint observed from several cameras; the
    /// diagonal is 1.
    pub fn epipolar_matrix(
        &self,
        observations: &[(usize, Point2<T>)],
        alpha_epi: T,
    ) -> Result<EpipolarMatrix<T>, AffinityError> {
        let n = observations.len();
        let mut m = vec![T::one(); n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let (ca, xa) = &observations[a];
                let (cb, xb) = &observations[b];
                let v = self.joint_affinity(*ca, xa, *cb, xb, alpha_epi)?;
                m[a * n + b] = v;
                m[b * n + a] = v;
            }
        }
        Ok(EpipolarMatrix { n, values: m })
    }
}

/// Sum over joints valid in both poses of [`epipolar_joint_affinity`].
pub fn epipolar_pose_affinity<T: Scalar>(
    pose_a: &Pose2D<T>,
    cam_a: &CameraCalibration<T>,
    pose_b: &Pose2D<T>,
    cam_b: &CameraCalibration<T>,
    alpha_epi: T,
) -> Result<T, AffinityError> {
    if cam_a.id() == cam_b.id() {
        return Err(AffinityError::SameCamera);
    }
    let f_ab = fundamental_matrix(cam_a, cam_b)?;
    let f_ba = fundamental_matrix(cam_b, cam_a)?;
    let mut total = T::zero();
    for n in 0..pose_a.joints.len().min(pose_b.joints.len()) {
        if let (Some(a), Some(b)) = (pose_a.joint(n), pose_b.joint(n)) {
            total = total + epipolar_score(&f_ab, &f_ba, a, b, alpha_epi)?;
        }
    }
    Ok(total)
}

/// Symmetric matrix of epipolar joint scores for one joint.
#[derive(Debug, Clone, PartialEq)]
pub struct EpipolarMatrix<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> EpipolarMatrix<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    /// Most negative off-diagonal entry `(i, j, value)` with `i < j`, if any is negative.
    pub fn most_negative(&self) -> Option<(usize, usize, T)> {
        let mut best: Option<(usize, usize, T)> = None;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let v = self.get(i, j);
                if v < T::zero() && best.is_none_or(|(_, _, b)| v < b) {
                    best = Some((i, j, v));
                }
            }
        }
        best
    }

    /// Sum of row `i` over the other entries.
    pub fn row_sum(&self, i: usize) -> T {
        (0..self.n).filter(|&j| j != i).map(|j| self.get(i, j)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tests::look_at;
    use crate::geometry::{epipolar_line, CameraId, Point3};
    use crate::linalg::Vector3;
    use crate::pose::Joint2D;

    fn cfg(alpha_2d: f64, lambda_a: f64, epsilon: usize) -> AffinityConfig<f64> {
        AffinityConfig { alpha_2d, lambda_a, epsilon, alpha_epi: 60.0, tau: 3, frame_interval: 0.04, max_dt: None }
    }

    fn rig() -> (CameraCalibration<f64>, CameraCalibration<f64>) {
        (
            look_at(0, Vector3::new(6.0, 0.0, 2.0), Vector3::new(0.0, 0.0, 1.0), 700.0),
            look_at(1, Vector3::new(0.0, 6.0, 2.5), Vector3::new(0.0, 0.0, 1.0), 700.0),
        )
    }

    #[test]
    fn zero_displacement_is_time_penalty() {
        let c = cfg(70.0, 3.0, 10);
        let x = Point2::new(10.0, 20.0);
        for dt in [0.04, 0.08, 1.0] {
            assert_eq!(joint_affinity(&x, &x, dt, &c).unwrap(), (-3.0 * dt).exp());
        }
    }

    #[test]
    fn shelf_hand_evaluation() {
        let c = cfg(70.0, 3.0, 10);
        let a = joint_affinity(&Point2::new(1.4, 0.0), &Point2::new(0.0, 0.0), 0.04, &c).unwrap();
        let expected = 0.5 * (-0.12f64).exp();
        assert!((a - expected).abs() < 1e-15);
        assert!((a - 0.4435).abs() < 5e-5);
    }

    #[test]
    fn threshold_boundary_is_zero() {
        let c = cfg(70.0, 3.0, 10);
        let a = joint_affinity(&Point2::new(0.0, 2.8), &Point2::new(0.0, 0.0), 0.04, &c).unwrap();
        assert!(a.abs() < 1e-15);
    }

    #[test]
    fn interval_below_one_frame_rejected() {
        let c = cfg(70.0, 3.0, 10);
        let x = Point2::new(0.0, 0.0);
        assert!(matches!(joint_affinity(&x, &x, 0.0, &c), Err(AffinityError::InvalidInterval { .. })));
        assert!(matches!(joint_affinity(&x, &x, 0.02, &c), Err(AffinityError::InvalidInterval { .. })));
    }

    #[test]
    fn max_dt_clamp() {
        let mut c = cfg(70.0, 3.0, 10);
        c.max_dt = Some(0.08);
        let x = Point2::new(0.0, 0.0);
        let y = Point2::new(2.8, 0.0);
        let capped = joint_affinity(&y, &x, 0.4, &c).unwrap();
        let at_cap = joint_affinity(&y, &x, 0.08, &c).unwrap();
        assert_eq!(capped, at_cap);
    }

    fn pose_at(cam: &CameraCalibration<f64>, pts: &[Point3<f64>], t: f64) -> Pose2D<f64> {
        Pose2D {
            camera: cam.id(),
            timestamp: t,
            joints: pts
                .iter()
                .map(|p| {
                    let q = project(p, cam).unwrap();
                    Joint2D::with_floor(q.x, q.y, 1.0, 0.1)
                })
                .collect(),
        }
    }

    fn body(n: usize) -> Vec<Point3<f64>> {
        (0..n).map(|i| Point3::new(0.1 * (i as f64 % 3.0), 0.05 * i as f64, 0.1 * i as f64)).collect()
    }

    #[test]
    fn exact_match_scores_time_penalty() {
        let (cam, _) = rig();
        let pts = body(14);
        let skel = Skeleton3D::from_positions(0.0, &pts, JointFlag::Triangulated);
        let pose = pose_at(&cam, &pts, 0.04);
        let c = cfg(70.0, 3.0, 14);
        let g = pose_track_affinity(&pose, &skel, &cam, &c).unwrap();
        assert!((g - (-0.12f64).exp()).abs() < 1e-12);
        assert!((g - 0.8869).abs() < 1e-4);
        let b = body_aware_affinity(&pose, &skel, &cam, &c).unwrap();
        assert!((b - g).abs() < 1e-12);
    }

    #[test]
    fn epsilon_rejects_single_outlier_at_campus_strictness() {
        let (cam, _) = rig();
        let pts = body(14);
        let skel = Skeleton3D::from_positions(0.0, &pts, JointFlag::Triangulated);
        let mut pose = pose_at(&cam, &pts, 0.04);
        pose.joints[5].position.x += 500.0;
        let c = cfg(750.0, 75.0, 14);
        assert_eq!(pose_track_affinity(&pose, &skel, &cam, &c).unwrap(), 0.0);
        let relaxed = cfg(750.0, 75.0, 13);
        assert!(pose_track_affinity(&pose, &skel, &cam, &relaxed).unwrap() > 0.0);
    }

    #[test]
    fn no_valid_joints_is_error() {
        let (cam, _) = rig();
        let pts = body(3);
        let skel = Skeleton3D::from_positions(0.0, &pts, JointFlag::Triangulated);
        let mut pose = pose_at(&cam, &pts, 0.04);
        for j in &mut pose.joints {
            j.valid = false;
        }
        let c = cfg(70.0, 3.0, 2);
        assert_eq!(pose_track_affinity(&pose, &skel, &cam, &c).unwrap_err(), AffinityError::NoValidJoints);
    }

    #[test]
    fn body_aware_arithmetic_mean() {
        let mut a: Vec<Option<f64>> = vec![Some(0.8); 13];
        a.push(Some(-10.0));
        let mean = body_aware_score(&a);
        assert!((mean - (13.0 * 0.8 - 10.0) / 14.0).abs() < 1e-15);
        assert!((mean - 0.0286).abs() < 1e-4);
        // part-aware ignores the outlier when epsilon allows it
        assert!((part_aware_score(&a, 10) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn effective_epsilon_scales_with_visibility() {
        assert_eq!(effective_epsilon(14, 14, 14), 14);
        assert_eq!(effective_epsilon(14, 7, 14), 7);
        assert_eq!(effective_epsilon(10, 7, 14), 5);
        assert_eq!(effective_epsilon(10, 0, 14), 1);
    }

    #[test]
    fn epipolar_exact_is_one() {
        let (a, b) = rig();
        let p = Point3::new(0.3, -0.2, 1.4);
        let s = epipolar_joint_affinity(&project(&p, &a).unwrap(), &a, &project(&p, &b).unwrap(), &b, 15.0).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
        assert_eq!(
            epipolar_joint_affinity(&Point2::new(1.0, 1.0), &a, &Point2::new(1.0, 1.0), &a, 15.0).unwrap_err(),
            AffinityError::SameCamera
        );
    }

    #[test]
    fn epipolar_perpendicular_perturbation_hand_value() {
        let (a, b) = rig();
        let p = Point3::new(0.3, -0.2, 1.4);
        let xa = project(&p, &a).unwrap();
        let xb = project(&p, &b).unwrap();
        // move xb 5 px along the normal of the epipolar line of xa
        let line = epipolar_line(&xa, &a, &b).unwrap();
        let (na, nb, _) = line.coefficients();
        let xb2 = xb + Point2::new(na, nb) * 5.0;
        let back = epipolar_line(&xb2, &b, &a).unwrap();
        let d_a = point_line_distance_2d(&xa, &back);
        let expected = 1.0 - (5.0 + d_a) / (2.0 * 60.0);
        let got = epipolar_joint_affinity(&xa, &a, &xb2, &b, 60.0).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert!(got < 1.0);
    }

    #[test]
    fn pose_affinity_sums_joints() {
        let (a, b) = rig();
        let pts = body(14);
        let pa = pose_at(&a, &pts, 0.0);
        let mut pb = pose_at(&b, &pts, 0.0);
        let s = epipolar_pose_affinity(&pa, &a, &pb, &b, 15.0).unwrap();
        assert!((s - 14.0).abs() < 1e-6);
        for j in &mut pb.joints {
            j.valid = false;
        }
        assert_eq!(epipolar_pose_affinity(&pa, &a, &pb, &b, 15.0).unwrap(), 0.0);
        let rig = EpipolarRig::new(vec![a.clone(), b.clone()]).unwrap();
        let pb = pose_at(&b, &pts, 0.0);
        assert!((rig.pose_affinity(0, &pa, 1, &pb, 15.0).unwrap() - 14.0).abs() < 1e-6);
    }

    #[test]
    fn rig_rejects_duplicate_ids() {
        let (a, _) = rig();
        let mut b = look_at(0, Vector3::new(0.0, 6.0, 2.5), Vector3::new(0.0, 0.0, 1.0), 700.0);
        assert!(EpipolarRig::new(vec![a.clone(), b.clone()]).is_err());
        b = b.cast::<f64>().unwrap();
        assert_eq!(b.id(), CameraId(0));
    }
}
