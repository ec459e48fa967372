//! Quaternion algebra for poses and rotational task errors.
//!
//! Components are stored scalar first, `w + x î + y ĵ + z k̂`, everywhere in
//! the crate, including the `vec4` coordinate map.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Inputs claiming to be unit quaternions are renormalized when their norm is
/// within this distance of one and rejected otherwise.
pub const UNIT_INPUT_TOLERANCE: f64 = 1e-9;

/// `vec3` accepts a quaternion as pure when `|w|` is at most this.
pub const PURE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Quaternion<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quaternion<T> {
    #[inline]
    pub const fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    /// Pure quaternion `x î + y ĵ + z k̂`, the representation used for
    /// translations, axes and points.
    #[inline]
    pub fn pure(x: T, y: T, z: T) -> Self {
        Self::new(T::zero(), x, y, z)
    }

    #[inline]
    pub fn from_vec3(v: [T; 3]) -> Self {
        Self::pure(v[0], v[1], v[2])
    }

    #[inline]
    pub fn from_vec4(v: [T; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    #[inline]
    pub fn real(w: T) -> Self {
        Self::new(w, T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn zero() -> Self {
        Self::real(T::zero())
    }

    #[inline]
    pub fn one() -> Self {
        Self::real(T::one())
    }

    pub fn i() -> Self {
        Self::pure(T::one(), T::zero(), T::zero())
    }

    pub fn j() -> Self {
        Self::pure(T::zero(), T::one(), T::zero())
    }

    pub fn k() -> Self {
        Self::pure(T::zero(), T::zero(), T::one())
    }

    #[inline]
    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Four-dimensional Euclidean inner product.
    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Vector part, dropping the scalar.
    #[inline]
    pub fn imag(self) -> Self {
        Self::pure(self.x, self.y, self.z)
    }

    pub fn is_pure(self) -> bool {
        self.w.abs() <= T::lit(PURE_TOLERANCE)
    }

    /// `[x, y, z]` of a pure quaternion.
    pub fn vec3(self) -> Result<[T; 3]> {
        if !self.is_pure() {
            return Err(Error::NotPure(self.w.to_f64_lossy()));
        }
        Ok(self.imag_array())
    }

    /// `[x, y, z]` without the purity check.
    #[inline]
    pub fn imag_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn vec4(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// 3D cross product of the vector parts.
    #[inline]
    pub fn cross(self, other: Self) -> Self {
        Self::pure(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Matrix `M` with `vec4(self * b) = M vec4(b)`.
    pub fn left_matrix(self) -> [[T; 4]; 4] {
        let Self { w, x, y, z } = self;
        [[w, -x, -y, -z], [x, w, -z, y], [y, z, w, -x], [z, -y, x, w]]
    }

    /// Matrix `M` with `vec4(a * self) = M vec4(a)`.
    pub fn right_matrix(self) -> [[T; 4]; 4] {
        let Self { w, x, y, z } = self;
        [[w, -x, -y, -z], [x, w, z, -y], [y, -z, w, x], [z, y, -x, w]]
    }
}

impl<T: Real> Mul for Quaternion<T> {
    type Output = Self;

    /// Hamilton product.
    #[inline]
    fn mul(self, b: Self) -> Self {
        let a = self;
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl<T: Real> Mul<T> for Quaternion<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Add for Quaternion<T> {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        Self::new(self.w + b.w, self.x + b.x, self.y + b.y, self.z + b.z)
    }
}

impl<T: Real> Sub for Quaternion<T> {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        Self::new(self.w - b.w, self.x - b.x, self.y - b.y, self.z - b.z)
    }
}

impl<T: Real> Neg for Quaternion<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Rotation quaternion, norm one to within 1e-12.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct UnitQuaternion<T>(Quaternion<T>);

impl<T: Real> UnitQuaternion<T> {
    pub fn identity() -> Self {
        Self(Quaternion::one())
    }

    /// Accepts `q` if its norm is within [`UNIT_INPUT_TOLERANCE`] of one and
    /// renormalizes it. A norm within rounding of one (4 ulp) keeps `q` bit for
    /// bit, so normalized values survive a text round trip unchanged.
    pub fn from_quaternion(q: Quaternion<T>) -> Result<Self> {
        let n = q.norm();
        let off = (n - T::one()).abs();
        if !n.is_finite() || off > T::lit(UNIT_INPUT_TOLERANCE) {
            return Err(Error::NotUnit(n.to_f64_lossy()));
        }
        if off <= T::lit(4.0) * T::epsilon() {
            return Ok(Self(q));
        }
        Ok(Self(q * (T::one() / n)))
    }

    /// Normalizes any nonzero finite quaternion.
    pub fn normalize(q: Quaternion<T>) -> Result<Self> {
        let n = q.norm();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::NotUnit(n.to_f64_lossy()));
        }
        Ok(Self(q * (T::one() / n)))
    }

    pub fn from_vec4(v: [T; 4]) -> Result<Self> {
        Self::from_quaternion(Quaternion::from_vec4(v))
    }

    /// `cos(φ/2) + v sin(φ/2)` for the (normalized) axis `v`.
    pub fn from_axis_angle(axis: [T; 3], angle: T) -> Result<Self> {
        let a = Quaternion::from_vec3(axis);
        let n = a.norm();
        if !(n > T::zero()) {
            return Err(Error::InvalidParameter("zero rotation axis".into()));
        }
        let (s, c) = (angle * T::half()).sin_cos();
        let v = a * (s / n);
        Ok(Self(Quaternion::new(c, v.x, v.y, v.z)))
    }

    /// Exponential map of a rotation vector (axis times angle).
    pub fn from_rotation_vector(v: [T; 3]) -> Self {
        let q = Quaternion::from_vec3(v);
        let angle = q.norm();
        if angle <= T::epsilon() {
            return Self::normalize(Quaternion::new(T::one(), v[0] * T::half(), v[1] * T::half(), v[2] * T::half()))
                .unwrap_or_else(|_| Self::identity());
        }
        let (s, c) = (angle * T::half()).sin_cos();
        let axis = q * (s / angle);
        Self(Quaternion::new(c, axis.x, axis.y, axis.z))
    }

    pub fn rot_x(angle: T) -> Self {
        let (s, c) = (angle * T::half()).sin_cos();
        Self(Quaternion::new(c, s, T::zero(), T::zero()))
    }

    pub fn rot_z(angle: T) -> Self {
        let (s, c) = (angle * T::half()).sin_cos();
        Self(Quaternion::new(c, T::zero(), T::zero(), s))
    }

    #[inline]
    pub fn quaternion(self) -> Quaternion<T> {
        self.0
    }

    #[inline]
    pub fn vec4(self) -> [T; 4] {
        self.0.vec4()
    }

    /// Inverse rotation.
    #[inline]
    pub fn conj(self) -> Self {
        Self(self.0.conj())
    }

    /// Same rotation, other hemisphere.
    #[inline]
    pub fn antipode(self) -> Self {
        Self(-self.0)
    }

    /// Composition `self * other`, renormalized to hold the unit invariant.
    #[inline]
    pub fn compose(self, other: Self) -> Self {
        let q = self.0 * other.0;
        Self(q * (T::one() / q.norm()))
    }

    /// `r t r*` for a pure `t`.
    #[inline]
    pub fn rotate(self, t: Quaternion<T>) -> Quaternion<T> {
        rotate_point(self, t)
    }

    /// Flips to the hemisphere of `reference` (non-negative inner product).
    pub fn aligned_with(self, reference: Self) -> Self {
        if self.0.dot(reference.0) < T::zero() {
            self.antipode()
        } else {
            self
        }
    }

    /// Row-major 3×3 rotation matrix.
    pub fn to_rotation_matrix(self) -> [[T; 3]; 3] {
        let Quaternion { w, x, y, z } = self.0;
        let two = T::two();
        let one = T::one();
        [
            [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
            [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
            [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
        ]
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(self) -> T {
        let w = self.0.w.abs().min(T::one());
        T::two() * w.acos()
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for UnitQuaternion<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let q = Quaternion::<T>::deserialize(d)?;
        Self::from_quaternion(q).map_err(serde::de::Error::custom)
    }
}

impl<T: Real> Mul for UnitQuaternion<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        self.compose(rhs)
    }
}

impl<T: Real> From<UnitQuaternion<T>> for Quaternion<T> {
    fn from(u: UnitQuaternion<T>) -> Self {
        u.0
    }
}

/// Rotates the point `t` (pure quaternion) by `r`: `r t r*`.
///
/// The result is forced pure; the scalar part of `r t r*` is zero
/// analytically and only roundoff is discarded.
#[inline]
pub fn rotate_point<T: Real>(r: UnitQuaternion<T>, t: Quaternion<T>) -> Quaternion<T> {
    let q = r.0 * t * r.0.conj();
    Quaternion::pure(q.x, q.y, q.z)
}

/// Which of the two switching-error branches was selected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorBranch {
    /// `r* r_d − 1`
    Minus,
    /// `r* r_d + 1`
    Plus,
}

/// Switching rotational error between the current `r` and desired `r_d`.
///
/// Returns `r* r_d − 1` when `r* r_d` is closer to `1` and `r* r_d + 1` when it
/// is closer to `−1`, so an antipodal goal produces zero error. Exact ties
/// take the minus branch.
pub fn rotation_error_switching<T: Real>(r: UnitQuaternion<T>, r_d: UnitQuaternion<T>) -> Quaternion<T> {
    rotation_error_with_branch(r, r_d).0
}

pub fn rotation_error_with_branch<T: Real>(
    r: UnitQuaternion<T>,
    r_d: UnitQuaternion<T>,
) -> (Quaternion<T>, ErrorBranch) {
    let e = r.conj().0 * r_d.0;
    let minus = e - Quaternion::one();
    let plus = e + Quaternion::one();
    if minus.norm_squared() <= plus.norm_squared() {
        (minus, ErrorBranch::Minus)
    } else {
        (plus, ErrorBranch::Plus)
    }
}
