//! Per-joint removal of cross-view observations that violate the epipolar
//! constraint.

use crate::affinity::{AffinityError, EpipolarRig};
use crate::geometry::{back_project_ray, point_ray_distance_3d, Point2, Point3};
use crate::Scalar;

/// One camera's observation of one joint: camera index into the rig, pixel.
pub type JointObservation<T> = (usize, Point2<T>);

/// Filter for tracked people. While some pair scores negative, take the most
/// negative pair and drop the member whose back-projected ray passes farther
/// from the predicted 3D joint. Returns the surviving observation indices in
/// input order.
pub fn joints_filter_tracked<T: Scalar>(
    obs: &[JointObservation<T>],
    predicted: &Point3<T>,
    rig: &EpipolarRig<T>,
    alpha_epi: T,
) -> Result<Vec<usize>, AffinityError> {
    let mut alive: Vec<usize> = (0..obs.len()).collect();
    let distances: Vec<T> = obs
        .iter()
        .map(|(cam, px)| back_project_ray(px, rig.camera(*cam)).map(|ray| point_ray_distance_3d(predicted, &ray)))
        .collect::<Result<_, _>>()?;
    while alive.len() >= 2 {
        let current: Vec<_> = alive.iter().map(|&k| obs[k]).collect();
        let e = rig.epipolar_matrix(&current, alpha_epi)?;
        let Some((i, j, _)) = e.most_negative() else { break };
        let drop = if distances[alive[i]] > distances[alive[j]] { i } else { j };
        alive.remove(drop);
    }
    Ok(alive)
}

/// Filter for new tracks, which have no 3D reference. While some pair scores
/// negative and at least three remain, drop the observation with the smallest
/// row sum; an inconsistent last pair is dropped entirely.
pub fn joints_filter_init<T: Scalar>(
    obs: &[JointObservation<T>],
    rig: &EpipolarRig<T>,
    alpha_epi: T,
) -> Result<Vec<usize>, AffinityError> {
    let mut alive: Vec<usize> = (0..obs.len()).collect();
    while alive.len() >= 2 {
        let current: Vec<_> = alive.iter().map(|&k| obs[k]).collect();
        let e = rig.epipolar_matrix(&current, alpha_epi)?;
        if e.most_negative().is_none() {
            break;
        }
        if alive.len() == 2 {
            alive.clear();
            break;
        }
        let weakest = (0..alive.len())
            .min_by(|&a, &b| e.row_sum(a).partial_cmp(&e.row_sum(b)).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty");
        alive.remove(weakest);
    }
    Ok(alive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;
    use crate::geometry::tests::look_at;
    use crate::linalg::Vector3;

    fn rig(n: usize) -> EpipolarRig<f64> {
        let cams = (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                look_at(i as u32, Vector3::new(6.0 * a.cos(), 6.0 * a.sin(), 2.2), Vector3::new(0.0, 0.0, 1.0), 700.0)
            })
            .collect();
        EpipolarRig::new(cams).unwrap()
    }

    fn observe(rig: &EpipolarRig<f64>, p: &Point3<f64>) -> Vec<JointObservation<f64>> {
        (0..rig.cameras().len()).map(|c| (c, project(p, rig.camera(c)).unwrap())).collect()
    }

    #[test]
    fn consistent_set_unchanged() {
        let rig = rig(4);
        let p = Point3::new(0.2, 0.1, 1.3);
        let obs = observe(&rig, &p);
        assert_eq!(joints_filter_tracked(&obs, &p, &rig, 15.0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(joints_filter_init(&obs, &rig, 15.0).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn removes_single_displaced_joint() {
        let rig = rig(3);
        let p = Point3::new(0.2, 0.1, 1.3);
        let mut obs = observe(&rig, &p);
        obs[1].1.x += 70.7;
        obs[1].1.y += 70.7;
        assert_eq!(joints_filter_tracked(&obs, &p, &rig, 15.0).unwrap(), vec![0, 2]);
    }

    #[test]
    fn init_drops_smallest_row_sum() {
        let rig = rig(4);
        let p = Point3::new(-0.3, 0.2, 0.9);
        let mut obs = observe(&rig, &p);
        obs[2].1.y += 120.0;
        obs[2].1.x -= 40.0;
        assert_eq!(joints_filter_init(&obs, &rig, 15.0).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn init_inconsistent_pair_is_emptied() {
        let rig = rig(2);
        let p = Point3::new(0.0, 0.0, 1.0);
        let mut obs = observe(&rig, &p);
        obs[0].1.y += 200.0;
        obs[0].1.x += 200.0;
        assert!(joints_filter_init(&obs, &rig, 15.0).unwrap().is_empty());
        // the tracked variant keeps the one nearer the prediction
        assert_eq!(joints_filter_tracked(&obs, &p, &rig, 15.0).unwrap(), vec![1]);
    }
}
