//! Pinhole camera model: projection, back-projection rays, epipolar lines,
//! point distances and weighted DLT triangulation.
//!
//! World-to-camera convention is `x_cam = R · (X − o)` with `o` the camera
//! center in world coordinates. No lens distortion is modelled.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{svd_m4, Matrix3, Vector2, Vector3};
use crate::Scalar;

/// Pixel coordinates.
pub type Point2<T> = Vector2<T>;
/// World coordinates in meters.
pub type Point3<T> = Vector3<T>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point has non-positive depth in camera frame ({depth})")]
    DepthNonPositive { depth: f64 },
    #[error("K·R is singular (|det| = {det})")]
    SingularProjection { det: f64 },
    #[error("camera centers coincide, epipolar geometry undefined")]
    DegenerateBaseline,
    #[error("pixel coincides with the epipole, epipolar line undefined")]
    DegenerateLine,
    #[error("triangulation needs at least 2 observations, got {0}")]
    InsufficientObservations(usize),
    #[error("triangulation weight {0} outside (0, 1]")]
    InvalidWeight(f64),
    #[error("design matrix is rank deficient")]
    DegenerateGeometry,
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CameraId(pub u32);

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cam{}", self.0)
    }
}

/// Calibrated pinhole camera.
///
/// Constructed through [`CameraCalibration::new`], which checks that `R` is a
/// proper rotation, `K` is upper triangular with positive focal lengths and
/// `fps` is positive. `K·R` and its inverse are cached.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration<T> {
    id: CameraId,
    k: Matrix3<T>,
    r: Matrix3<T>,
    center: Vector3<T>,
    image_size: (u32, u32),
    fps: T,
    kr: Matrix3<T>,
    kr_inv: Matrix3<T>,
}

impl<T: Scalar> CameraCalibration<T> {
    pub fn new(
        id: CameraId,
        k: Matrix3<T>,
        r: Matrix3<T>,
        center: Vector3<T>,
        image_size: (u32, u32),
        fps: T,
    ) -> Result<Self, GeometryError> {
        let invalid = |what: &str| GeometryError::InvalidCalibration(what.to_string());
        // 1e-9 for f64; f32 cannot hold a rotation that tightly
        let ortho_tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0));
        let rtr = r.transpose() * r;
        if (rtr - Matrix3::identity()).max_abs() >= ortho_tol {
            return Err(invalid("rotation orthonormality"));
        }
        if r.determinant() <= T::zero() {
            return Err(invalid("rotation determinant"));
        }
        if k[(1, 0)] != T::zero() || k[(2, 0)] != T::zero() || k[(2, 1)] != T::zero() {
            return Err(invalid("intrinsics not upper triangular"));
        }
        if !(k[(0, 0)] > T::zero() && k[(1, 1)] > T::zero()) {
            return Err(invalid("intrinsics focal length not positive"));
        }
        if k[(2, 2)] != T::one() {
            return Err(invalid("intrinsics K[2][2] must be 1"));
        }
        if !(fps > T::zero()) || !fps.is_finite() {
            return Err(invalid("fps not positive"));
        }
        if !(center.x.is_finite() && center.y.is_finite() && center.z.is_finite()) {
            return Err(invalid("camera center not finite"));
        }
        let kr = k * r;
        let det = kr.determinant();
        if det.abs() < T::lit(1e-12) {
            return Err(GeometryError::SingularProjection { det: det.as_f64() });
        }
        let kr_inv = kr.try_inverse().ok_or(GeometryError::SingularProjection { det: det.as_f64() })?;
        Ok(Self { id, k, r, center, image_size, fps, kr, kr_inv })
    }

    pub fn id(&self) -> CameraId {
        self.id
    }

    pub fn intrinsics(&self) -> &Matrix3<T> {
        &self.k
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.r
    }

    pub fn center(&self) -> Vector3<T> {
        self.center
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    pub fn fps(&self) -> T {
        self.fps
    }

    /// Seconds between two frames.
    pub fn frame_interval(&self) -> T {
        T::one() / self.fps
    }

    /// Whether `p` lies inside the image grown by `margin` pixels on each side.
    pub fn in_image(&self, p: &Point2<T>, margin: T) -> bool {
        let (w, h) = (T::lit(self.image_size.0 as f64), T::lit(self.image_size.1 as f64));
        p.x >= -margin && p.y >= -margin && p.x <= w + margin && p.y <= h + margin
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, point: &Point3<T>) -> T {
        self.r.row(2).dot(&(*point - self.center))
    }

    pub fn cast<U: Scalar>(&self) -> Result<CameraCalibration<U>, GeometryError> {
        CameraCalibration::new(
            self.id,
            self.k.cast(),
            self.r.cast(),
            self.center.cast(),
            self.image_size,
            U::lit(self.fps.as_f64()),
        )
    }
}

/// Half-line from a camera center through a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3D<T> {
    pub origin: Point3<T>,
    /// Unit length.
    pub direction: Vector3<T>,
}

/// Image line `a·u + b·v + c = 0`, stored with `a² + b² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line2D<T> {
    a: T,
    b: T,
    c: T,
}

impl<T: Scalar> Line2D<T> {
    /// Normalizes homogeneous line coefficients; `None` if `(a, b) = (0, 0)`.
    pub fn from_coefficients(a: T, b: T, c: T) -> Option<Self> {
        let n = a.hypot(b);
        if n > T::zero() && n.is_finite() {
            Some(Self { a: a / n, b: b / n, c: c / n })
        } else {
            None
        }
    }

    pub fn coefficients(&self) -> (T, T, T) {
        (self.a, self.b, self.c)
    }
}

pub fn project<T: Scalar>(point: &Point3<T>, cam: &CameraCalibration<T>) -> Result<Point2<T>, GeometryError> {
    let x_cam = cam.r * (*point - cam.center);
    if x_cam.z <= T::lit(1e-9) {
        return Err(GeometryError::DepthNonPositive { depth: x_cam.z.as_f64() });
    }
    let h = cam.k * x_cam;
    Ok(Point2::new(h.x / h.z, h.y / h.z))
}

pub fn back_project_ray<T: Scalar>(pixel: &Point2<T>, cam: &CameraCalibration<T>) -> Result<Ray3D<T>, GeometryError> {
    let det = cam.kr.determinant();
    if det.abs() < T::lit(1e-12) {
        return Err(GeometryError::SingularProjection { det: det.as_f64() });
    }
    let direction = (cam.kr_inv * pixel.homogeneous())
        .normalize()
        .ok_or(GeometryError::SingularProjection { det: det.as_f64() })?;
    Ok(Ray3D { origin: cam.center, direction })
}

/// Fundamental matrix mapping pixels of `src` to epipolar lines in `dst`,
/// built from the calibrations as `[e]ₓ · H` with `e` the epipole in `dst`
/// and `H` the infinite homography.
pub fn fundamental_matrix<T: Scalar>(
    src: &CameraCalibration<T>,
    dst: &CameraCalibration<T>,
) -> Result<Matrix3<T>, GeometryError> {
    let baseline = src.center - dst.center;
    if baseline.norm() < T::lit(1e-9) {
        return Err(GeometryError::DegenerateBaseline);
    }
    let epipole = dst.kr * baseline;
    let homography = dst.kr * src.kr_inv;
    Ok(Matrix3::skew(&epipole) * homography)
}

pub fn epipolar_line<T: Scalar>(
    pixel: &Point2<T>,
    src: &CameraCalibration<T>,
    dst: &CameraCalibration<T>,
) -> Result<Line2D<T>, GeometryError> {
    let f = fundamental_matrix(src, dst)?;
    epipolar_line_with(&f, pixel)
}

/// Epipolar line of `pixel` under a precomputed fundamental matrix.
pub fn epipolar_line_with<T: Scalar>(f: &Matrix3<T>, pixel: &Point2<T>) -> Result<Line2D<T>, GeometryError> {
    let l = *f * pixel.homogeneous();
    Line2D::from_coefficients(l.x, l.y, l.z).ok_or(GeometryError::DegenerateLine)
}

pub fn point_line_distance_2d<T: Scalar>(pixel: &Point2<T>, line: &Line2D<T>) -> T {
    (line.a * pixel.x + line.b * pixel.y + line.c).abs()
}

pub fn point_ray_distance_3d<T: Scalar>(point: &Point3<T>, ray: &Ray3D<T>) -> T {
    let d = *point - ray.origin;
    let along = d.dot(&ray.direction);
    (d - ray.direction * along).norm()
}

/// One weighted pixel observation for [`triangulate_dlt`].
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a, T> {
    pub pixel: Point2<T>,
    pub camera: &'a CameraCalibration<T>,
    /// In `(0, 1]`.
    pub weight: T,
}

type Row4<T> = [T; 4];

/// Weighted linear triangulation.
///
/// Each observation contributes the two rows `u·P₃ − P₁` and `v·P₃ − P₂` of
/// its projection matrix. World coordinates are conditioned by the centroid
/// and spread of the camera centers. Every row is scaled to unit norm, which
/// also absorbs any similarity conditioning of the pixel coordinates, and then
/// by its weight. The solution is the right singular vector of the smallest
/// singular value.
pub fn triangulate_dlt<T: Scalar>(obs: &[Observation<'_, T>]) -> Result<Point3<T>, GeometryError> {
    if obs.len() < 2 {
        return Err(GeometryError::InsufficientObservations(obs.len()));
    }
    for o in obs {
        if !(o.weight > T::zero() && o.weight <= T::one()) {
            return Err(GeometryError::InvalidWeight(o.weight.as_f64()));
        }
    }
    let n = T::lit(obs.len() as f64);

    let world_mean = obs.iter().fold(Vector3::zeros(), |acc, o| acc + o.camera.center) * (T::one() / n);
    let world_spread = obs.iter().map(|o| (o.camera.center - world_mean).norm()).sum::<T>() / n;
    let d = if world_spread > T::zero() { world_spread } else { T::one() };

    let mut rows: Vec<Row4<T>> = Vec::with_capacity(obs.len() * 2);
    for o in obs {
        // P·D with D = [[d·I, m], [0, 1]] and P = [KR | −KR·o]
        let kr = &o.camera.kr;
        let shift = o.camera.world_offset(&world_mean);
        let p: [Row4<T>; 3] = std::array::from_fn(|i| [kr.m[i][0] * d, kr.m[i][1] * d, kr.m[i][2] * d, shift[i]]);
        for (coord, pr) in [(o.pixel.x, p[0]), (o.pixel.y, p[1])] {
            let row: Row4<T> = std::array::from_fn(|j| coord * p[2][j] - pr[j]);
            let norm = row.iter().map(|x| *x * *x).sum::<T>().sqrt();
            if norm > T::zero() {
                rows.push(std::array::from_fn(|j| row[j] / norm * o.weight));
            }
        }
    }
    if rows.len() < 3 {
        return Err(GeometryError::DegenerateGeometry);
    }

    let svd = svd_m4(&rows);
    let tol = T::epsilon() * T::lit(1e3) * svd.values[0];
    if svd.values[2] <= tol {
        return Err(GeometryError::DegenerateGeometry);
    }
    let h = svd.vectors[3];
    let hn = h.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if h[3].abs() <= T::epsilon() * T::lit(16.0) * hn {
        return Err(GeometryError::DegenerateGeometry);
    }
    let inv_w = T::one() / h[3];
    Ok(Point3::new(h[0] * inv_w * d + world_mean.x, h[1] * inv_w * d + world_mean.y, h[2] * inv_w * d + world_mean.z))
}

impl<T: Scalar> CameraCalibration<T> {
    /// Fourth column of `[KR | −KR·o]·D` for a world shift `m`: `KR·(m − o)`.
    fn world_offset(&self, m: &Vector3<T>) -> [T; 3] {
        (self.kr * (*m - self.center)).to_array()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn identity_cam() -> CameraCalibration<f64> {
        CameraCalibration::new(
            CameraId(0),
            Matrix3::identity(),
            Matrix3::identity(),
            Vector3::zeros(),
            (640, 480),
            25.0,
        )
        .unwrap()
    }

    /// Camera at `center` looking at `target` with a y-down image convention.
    pub fn look_at(id: u32, center: Vector3<f64>, target: Vector3<f64>, f: f64) -> CameraCalibration<f64> {
        let z = (target - center).normalize().unwrap();
        let up = Vector3::new(0.0, 0.0, 1.0);
        let x = z.cross(&up).normalize().unwrap();
        let y = z.cross(&x);
        let r = Matrix3::from_rows([x.to_array(), y.to_array(), z.to_array()]);
        let k = Matrix3::from_rows([[f, 0.0, 640.0], [0.0, f, 480.0], [0.0, 0.0, 1.0]]);
        CameraCalibration::new(CameraId(id), k, r, center, (1280, 960), 25.0).unwrap()
    }

    #[test]
    fn project_principal_axis_and_dehomogenize() {
        let cam = identity_cam();
        let p = project(&Point3::new(0.0, 0.0, 1.0), &cam).unwrap();
        assert_eq!(p, Point2::new(0.0, 0.0));
        let p = project(&Point3::new(1.0, 1.0, 2.0), &cam).unwrap();
        assert_eq!(p, Point2::new(0.5, 0.5));
    }

    #[test]
    fn project_behind_camera_fails() {
        let cam = identity_cam();
        let err = project(&Point3::new(0.0, 0.0, -1.0), &cam).unwrap_err();
        assert!(matches!(err, GeometryError::DepthNonPositive { .. }));
        assert!(project(&Point3::new(0.0, 0.0, 0.0), &cam).is_err());
    }

    #[test]
    fn back_project_identity_camera() {
        let ray = back_project_ray(&Point2::new(0.0, 0.0), &identity_cam()).unwrap();
        assert_eq!(ray.origin, Point3::zeros());
        assert_eq!(ray.direction, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn tiny_focal_is_singular() {
        let k = Matrix3::<f64>::from_rows([[1e-7, 0.0, 0.0], [0.0, 1e-7, 0.0], [0.0, 0.0, 1.0]]);
        let err =
            CameraCalibration::new(CameraId(0), k, Matrix3::identity(), Vector3::zeros(), (1, 1), 25.0).unwrap_err();
        assert!(matches!(err, GeometryError::SingularProjection { .. }));
    }

    #[test]
    fn rejects_reflection() {
        let mut r = Matrix3::<f64>::identity();
        r[(2, 2)] = -1.0;
        let err =
            CameraCalibration::new(CameraId(0), Matrix3::identity(), r, Vector3::zeros(), (1, 1), 25.0).unwrap_err();
        assert_eq!(err, GeometryError::InvalidCalibration("rotation determinant".into()));
    }

    #[test]
    fn rejects_bad_intrinsics_and_fps() {
        let mut k = Matrix3::<f64>::identity();
        k[(1, 0)] = 0.5;
        assert!(CameraCalibration::new(CameraId(0), k, Matrix3::identity(), Vector3::zeros(), (1, 1), 25.0).is_err());
        let mut k = Matrix3::<f64>::identity();
        k[(0, 0)] = -1.0;
        assert!(CameraCalibration::new(CameraId(0), k, Matrix3::identity(), Vector3::zeros(), (1, 1), 25.0).is_err());
        assert!(CameraCalibration::new(
            CameraId(0),
            Matrix3::<f64>::identity(),
            Matrix3::identity(),
            Vector3::zeros(),
            (1, 1),
            0.0
        )
        .is_err());
    }

    #[test]
    fn line_distance_axis_aligned() {
        let line = Line2D::from_coefficients(1.0, 0.0, 0.0).unwrap();
        assert_eq!(point_line_distance_2d(&Point2::new(3.0, 7.0), &line), 3.0);
        assert_eq!(point_line_distance_2d(&Point2::new(0.0, -2.0), &line), 0.0);
        assert!(Line2D::from_coefficients(0.0, 0.0, 1.0).is_none());
    }

    #[test]
    fn line_is_normalized() {
        let l = Line2D::<f64>::from_coefficients(3.0, 4.0, 10.0).unwrap();
        let (a, b, c) = l.coefficients();
        assert!((a * a + b * b - 1.0).abs() < 1e-15);
        assert!((c - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ray_distance_pythagorean() {
        let ray = Ray3D { origin: Point3::zeros(), direction: Vector3::new(0.0, 0.0, 1.0) };
        assert_eq!(point_ray_distance_3d(&Point3::new(3.0, 4.0, 10.0), &ray), 5.0);
        assert_eq!(point_ray_distance_3d(&Point3::new(0.0, 0.0, 7.0), &ray), 0.0);
    }

    #[test]
    fn epipolar_degenerate_baseline() {
        let a = look_at(0, Vector3::new(5.0, 0.0, 2.0), Vector3::new(0.0, 0.0, 1.0), 700.0);
        let mut b = look_at(1, Vector3::new(5.0, 0.0, 2.0), Vector3::new(0.0, 1.0, 1.0), 700.0);
        b.id = CameraId(1);
        let err = epipolar_line(&Point2::new(100.0, 100.0), &a, &b).unwrap_err();
        assert_eq!(err, GeometryError::DegenerateBaseline);
    }

    #[test]
    fn epipole_lies_on_every_line() {
        let a = look_at(0, Vector3::new(5.0, 0.0, 2.0), Vector3::new(0.0, 0.0, 1.0), 700.0);
        let b = look_at(1, Vector3::new(0.0, 5.0, 2.5), Vector3::new(0.0, 0.0, 1.0), 700.0);
        let epipole = project(&a.center(), &b).unwrap();
        for px in [(10.0, 20.0), (640.0, 480.0), (1200.0, 50.0), (300.0, 900.0)] {
            let l = epipolar_line(&Point2::new(px.0, px.1), &a, &b).unwrap();
            assert!(point_line_distance_2d(&epipole, &l) < 1e-6);
        }
    }

    #[test]
    fn two_view_exact_triangulation() {
        let a = look_at(0, Vector3::new(6.0, 0.0, 2.0), Vector3::new(0.0, 0.0, 1.0), 700.0);
        let b = look_at(1, Vector3::new(0.0, 6.0, 2.5), Vector3::new(0.0, 0.0, 1.0), 700.0);
        let p = Point3::new(1.0, 2.0, 3.0);
        let obs = [
            Observation { pixel: project(&p, &a).unwrap(), camera: &a, weight: 1.0 },
            Observation { pixel: project(&p, &b).unwrap(), camera: &b, weight: 1.0 },
        ];
        let x = triangulate_dlt(&obs).unwrap();
        assert!(x.distance(&p) < 1e-9, "{x:?}");
    }

    #[test]
    fn triangulation_errors() {
        let a = look_at(0, Vector3::new(6.0, 0.0, 2.0), Vector3::new(0.0, 0.0, 1.0), 700.0);
        let p = Point3::new(0.5, 0.2, 1.0);
        let px = project(&p, &a).unwrap();
        let one = [Observation { pixel: px, camera: &a, weight: 1.0 }];
        assert_eq!(triangulate_dlt(&one).unwrap_err(), GeometryError::InsufficientObservations(1));
        let same =
            [Observation { pixel: px, camera: &a, weight: 1.0 }, Observation { pixel: px, camera: &a, weight: 0.5 }];
        assert_eq!(triangulate_dlt(&same).unwrap_err(), GeometryError::DegenerateGeometry);
        let bad =
            [Observation { pixel: px, camera: &a, weight: 0.0 }, Observation { pixel: px, camera: &a, weight: 1.0 }];
        assert!(matches!(triangulate_dlt(&bad).unwrap_err(), GeometryError::InvalidWeight(_)));
    }

    #[test]
    fn f32_projection_roundtrip() {
        let a = look_at(0, Vector3::new(6.0, 0.0, 2.0), Vector3::new(0.0, 0.0, 1.0), 700.0).cast::<f32>().unwrap();
        let p = Point3::new(0.3f32, -0.4, 1.2);
        let ray = back_project_ray(&project(&p, &a).unwrap(), &a).unwrap();
        assert!(point_ray_distance_3d(&p, &ray) < 1e-5);
    }
}
