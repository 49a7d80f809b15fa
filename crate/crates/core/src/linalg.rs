//! Fixed-size vectors and matrices used by the camera model, plus a small
//! one-sided Jacobi SVD for the homogeneous triangulation system.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::Scalar;

/// 2D vector, pixel coordinates in most of the crate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector2<T> {
    pub x: T,
    pub y: T,
}

/// 3D vector, world coordinates in meters in most of the crate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Matrix3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Scalar> Vector2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zeros() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(&self) -> T {
        self.x.hypot(self.y)
    }

    pub fn homogeneous(&self) -> Vector3<T> {
        Vector3::new(self.x, self.y, T::one())
    }

    pub fn cast<U: Scalar>(&self) -> Vector2<U> {
        Vector2::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

impl<T: Scalar> Vector3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zeros() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Self) -> Self {
        Self::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for a zero vector.
    pub fn normalize(&self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(*self * (T::one() / n))
        } else {
            None
        }
    }

    /// Dehomogenize; `None` when the last coordinate vanishes.
    pub fn dehomogenize(&self) -> Option<Vector2<T>> {
        if self.z == T::zero() {
            None
        } else {
            Some(Vector2::new(self.x / self.z, self.y / self.z))
        }
    }

    pub fn distance(&self, o: &Self) -> T {
        (*self - *o).norm()
    }

    pub fn cast<U: Scalar>(&self) -> Vector3<U> {
        Vector3::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()), U::lit(self.z.as_f64()))
    }
}

macro_rules! impl_vec_ops {
    ($v:ident, $($f:ident),+) => {
        impl<T: Scalar> Add for $v<T> {
            type Output = Self;
            fn add(self, o: Self) -> Self {
                $v { $($f: self.$f + o.$f),+ }
            }
        }
        impl<T: Scalar> Sub for $v<T> {
            type Output = Self;
            fn sub(self, o: Self) -> Self {
                $v { $($f: self.$f - o.$f),+ }
            }
        }
        impl<T: Scalar> Mul<T> for $v<T> {
            type Output = Self;
            fn mul(self, s: T) -> Self {
                $v { $($f: self.$f * s),+ }
            }
        }
        impl<T: Scalar> Neg for $v<T> {
            type Output = Self;
            fn neg(self) -> Self {
                $v { $($f: -self.$f),+ }
            }
        }
    };
}

impl_vec_ops!(Vector2, x, y);
impl_vec_ops!(Vector3, x, y, z);

impl<T: Scalar> Matrix3<T> {
    pub fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    /// Row-major slice of nine entries.
    pub fn from_row_slice(s: &[T]) -> Self {
        assert_eq!(s.len(), 9, "Matrix3 needs 9 entries");
        Self::from_rows([[s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7], s[8]]])
    }

    pub fn to_row_vec(&self) -> Vec<T> {
        self.m.iter().flat_map(|r| r.iter().copied()).collect()
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self::from_rows([[o, z, z], [z, o, z], [z, z, o]])
    }

    /// Cross-product matrix: `skew(v) * w == v × w`.
    pub fn skew(v: &Vector3<T>) -> Self {
        let z = T::zero();
        Self::from_rows([[z, -v.z, v.y], [v.z, z, -v.x], [-v.y, v.x, z]])
    }

    pub fn row(&self, i: usize) -> Vector3<T> {
        Vector3::from_array(self.m[i])
    }

    pub fn transpose(&self) -> Self {
        let mut t = *self;
        for i in 0..3 {
            for j in 0..3 {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse by adjugate; `None` if the determinant is exactly zero.
    pub fn try_inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let m = &self.m;
        let inv_det = T::one() / det;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        Some(Self::from_rows([
            [cof(1, 2, 1, 2) * inv_det, -cof(0, 2, 1, 2) * inv_det, cof(0, 1, 1, 2) * inv_det],
            [-cof(1, 2, 0, 2) * inv_det, cof(0, 2, 0, 2) * inv_det, -cof(0, 1, 0, 2) * inv_det],
            [cof(1, 2, 0, 1) * inv_det, -cof(0, 2, 0, 1) * inv_det, cof(0, 1, 0, 1) * inv_det],
        ]))
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.m.iter().flat_map(|r| r.iter()).fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> Matrix3<U> {
        let mut out = Matrix3::<U>::identity();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = U::lit(self.m[i][j].as_f64());
            }
        }
        out
    }
}

impl<T: Scalar> Index<(usize, usize)> for Matrix3<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.m[i][j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Matrix3<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.m[i][j]
    }
}

impl<T: Scalar> Mul for Matrix3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::from_rows([[T::zero(); 3]; 3]);
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        out
    }
}

impl<T: Scalar> Mul<Vector3<T>> for Matrix3<T> {
    type Output = Vector3<T>;
    fn mul(self, v: Vector3<T>) -> Vector3<T> {
        Vector3::new(self.row(0).dot(&v), self.row(1).dot(&v), self.row(2).dot(&v))
    }
}

impl<T: Scalar> Sub for Matrix3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[i][j] - o.m[i][j];
            }
        }
        out
    }
}

/// Singular values and right singular vectors of an `m × 4` matrix.
#[derive(Debug, Clone)]
pub(crate) struct Svd4<T> {
    /// Singular values, descending.
    pub values: [T; 4],
    /// `vectors[k]` is the right singular vector for `values[k]`.
    pub vectors: [[T; 4]; 4],
}

/// One-sided (Hestenes) Jacobi SVD of a row-major `m × 4` matrix.
///
/// Works directly on the columns of `a`, so it never forms `AᵀA` and keeps
/// full relative accuracy on the small singular values.
pub(crate) fn svd_m4<T: Scalar>(rows: &[[T; 4]]) -> Svd4<T> {
    let mut a: Vec<[T; 4]> = rows.to_vec();
    let mut v = [[T::zero(); 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..3 {
            for q in (p + 1)..4 {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for r in a.iter() {
                    alpha = alpha + r[p] * r[p];
                    beta = beta + r[q] * r[q];
                    gamma = gamma + r[p] * r[q];
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for r in a.iter_mut() {
                    let (ap, aq) = (r[p], r[q]);
                    r[p] = c * ap - s * aq;
                    r[q] = s * ap + c * aq;
                }
                for r in v.iter_mut() {
                    let (vp, vq) = (r[p], r[q]);
                    r[p] = c * vp - s * vq;
                    r[q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(T, usize)> = (0..4).map(|j| (a.iter().map(|r| r[j] * r[j]).sum::<T>().sqrt(), j)).collect();
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut values = [T::zero(); 4];
    let mut vectors = [[T::zero(); 4]; 4];
    for (k, &(sv, j)) in order.iter().enumerate() {
        values[k] = sv;
        for i in 0..4 {
            vectors[k][i] = v[i][j];
        }
    }
    Svd4 { values, vectors }
}
