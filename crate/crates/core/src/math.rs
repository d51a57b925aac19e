//! Small fixed-size geometry generic over the scalar type, so the same
//! kinematics code runs on plain `f64` and on the reverse-mode tape.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Scalar abstraction shared by `f64` and [`crate::autodiff::Var`].
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    /// Clamp to `[lo, hi]`; the derivative is zero outside the interval.
    fn clamp01(self) -> Self {
        let v = self.value();
        if v < 0.0 {
            Self::cst(0.0)
        } else if v > 1.0 {
            Self::cst(1.0)
        } else {
            self
        }
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }
}

impl<T: Real> Vec3<T> {
    pub fn zeros() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_f64(v: Vec3) -> Self {
        Vec3::new(T::cst(v.x), T::cst(v.y), T::cst(v.z))
    }

    pub fn value(&self) -> Vec3 {
        Vec3::new(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn scale(&self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Vec3 {
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn dist_sq(&self, o: &Vec3) -> f64 {
        (*self - *o).norm_sq()
    }

    pub fn min_elem(&self, o: &Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_elem(&self, o: &Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn get(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<f64> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Quaternion stored as `(x, y, z, w)`; identity is `(0, 0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub w: T,
}

impl<T: Real> Quat<T> {
    pub fn new(x: T, y: T, z: T, w: T) -> Self {
        Quat { x, y, z, w }
    }

    pub fn identity() -> Self {
        Quat::new(T::zero(), T::zero(), T::zero(), T::cst(1.0))
    }

    pub fn from_f64(q: Quat) -> Self {
        Quat::new(T::cst(q.x), T::cst(q.y), T::cst(q.z), T::cst(q.w))
    }

    pub fn value(&self) -> Quat {
        Quat::new(self.x.value(), self.y.value(), self.z.value(), self.w.value())
    }

    pub fn norm_sq(&self) -> T {
        self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w
    }

    pub fn normalized(&self) -> Self {
        let inv = T::cst(1.0) / self.norm_sq().sqrt();
        Quat::new(self.x * inv, self.y * inv, self.z * inv, self.w * inv)
    }

    pub fn conjugate(&self) -> Self {
        Quat::new(-self.x, -self.y, -self.z, self.w)
    }

    /// Hamilton product `self ∘ o` (apply `o` first).
    pub fn mul(&self, o: &Self) -> Self {
        Quat::new(
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
        )
    }

    /// Rotation matrix of a unit quaternion.
    pub fn to_mat3(&self) -> Mat3<T> {
        let (x, y, z, w) = (self.x, self.y, self.z, self.w);
        let one = T::cst(1.0);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        let (wx, wy, wz) = (w * x, w * y, w * z);
        Mat3 {
            m: [
                [one - (yy + zz) * 2.0, (xy - wz) * 2.0, (xz + wy) * 2.0],
                [(xy + wz) * 2.0, one - (xx + zz) * 2.0, (yz - wx) * 2.0],
                [(xz - wy) * 2.0, (yz + wx) * 2.0, one - (xx + yy) * 2.0],
            ],
        }
    }
}

impl Quat {
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        let a = axis * (1.0 / n);
        let (s, c) = (angle * 0.5).sin_cos();
        Quat::new(a.x * s, a.y * s, a.z * s, c)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        self.to_mat3().mul_vec(&v)
    }

    /// Unit quaternion of a rotation matrix (Shepperd's branch selection).
    pub fn from_mat3(r: &Mat3) -> Self {
        let m = &r.m;
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Quat::new((m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s, 0.25 * s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat::new(0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s, (m[2][1] - m[1][2]) / s)
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat::new((m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s, (m[0][2] - m[2][0]) / s)
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat::new((m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s, (m[1][0] - m[0][1]) / s)
        };
        q.normalized()
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T = f64> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, l) = (T::zero(), T::cst(1.0));
        Mat3 { m: [[l, o, o], [o, l, o], [o, o, l]] }
    }

    pub fn from_f64(a: &Mat3) -> Self {
        let mut m = [[T::zero(); 3]; 3];
        for (r, row) in a.m.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m[r][c] = T::cst(*v);
            }
        }
        Mat3 { m }
    }

    pub fn value(&self) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = self.m[r][c].value();
            }
        }
        Mat3 { m }
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut m = [[T::zero(); 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = self.m[r][0] * o.m[0][c] + self.m[r][1] * o.m[1][c] + self.m[r][2] * o.m[2][c];
            }
        }
        Mat3 { m }
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Mat3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn column(&self, c: usize) -> Vec3<T> {
        Vec3::new(self.m[0][c], self.m[1][c], self.m[2][c])
    }
}

/// Rigid transform `x ↦ R x + t` with the rotation kept as a quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rigid {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Default for Rigid {
    fn default() -> Self {
        Rigid::identity()
    }
}

impl Rigid {
    pub fn identity() -> Self {
        Rigid { rotation: Quat::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Quat, translation: Vec3) -> Self {
        Rigid { rotation, translation }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Rigid { rotation: Quat::identity(), translation: t }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.normalized().rotate(p) + self.translation
    }

    pub fn inverse(&self) -> Rigid {
        let inv = self.rotation.normalized().conjugate();
        Rigid { rotation: inv, translation: -inv.rotate(self.translation) }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Rigid) -> Rigid {
        let r = self.rotation.normalized();
        Rigid {
            rotation: r.mul(&other.rotation.normalized()),
            translation: r.rotate(other.translation) + self.translation,
        }
    }
}

/// Axis-aligned bounding box of a point set; `None` when empty.
pub fn bounding_box(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| (lo.min_elem(p), hi.max_elem(p))))
}
