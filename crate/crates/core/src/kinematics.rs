//! Serial-chain kinematics for an arm carrying a long straight instrument.
//!
//! Joints are described by Denavit–Hartenberg rows. Poses are a unit
//! quaternion plus a pure translation quaternion. Angular velocities are
//! spatial (expressed in the base frame), and the orientation derivative
//! follows `ṙ = ½ ω r`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quaternion::{rotate_point, Quaternion, UnitQuaternion};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    #[default]
    Revolute,
    Prismatic,
}

/// Which Denavit–Hartenberg convention the rows of a model follow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DhConvention {
    /// `Rz(θ) Tz(d) Tx(a) Rx(α)`; joint `k` moves about the z-axis of frame `k-1`.
    #[default]
    Standard,
    /// `Rx(α) Tx(a) Rz(θ) Tz(d)`; joint `k` moves about the z-axis of frame `k`.
    Modified,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct DhJoint<T> {
    pub a: T,
    pub alpha: T,
    pub d: T,
    #[serde(default = "T::zero")]
    pub theta_offset: T,
    #[serde(default)]
    pub kind: JointKind,
}

impl<T: Real> DhJoint<T> {
    pub fn revolute(a: T, alpha: T, d: T, theta_offset: T) -> Self {
        Self { a, alpha, d, theta_offset, kind: JointKind::Revolute }
    }

    pub fn prismatic(a: T, alpha: T, d: T, theta_offset: T) -> Self {
        Self { a, alpha, d, theta_offset, kind: JointKind::Prismatic }
    }

    /// Frame transform contributed by this row at joint value `q`.
    pub fn transform(&self, convention: DhConvention, q: T) -> Pose<T> {
        let (theta, d) = match self.kind {
            JointKind::Revolute => (q + self.theta_offset, self.d),
            JointKind::Prismatic => (self.theta_offset, self.d + q),
        };
        let (st, ct) = theta.sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        match convention {
            DhConvention::Standard => Pose {
                r: UnitQuaternion::rot_z(theta).compose(UnitQuaternion::rot_x(self.alpha)),
                t: Quaternion::pure(self.a * ct, self.a * st, d),
            },
            DhConvention::Modified => Pose {
                r: UnitQuaternion::rot_x(self.alpha).compose(UnitQuaternion::rot_z(theta)),
                t: Quaternion::pure(self.a, -d * sa, d * ca),
            },
        }
    }
}

/// Rigid transform: rotation `r` followed by translation `t` (meters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "PoseRepr<T>",
    into = "PoseRepr<T>",
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct Pose<T> {
    pub r: UnitQuaternion<T>,
    pub t: Quaternion<T>,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct PoseRepr<T> {
    rotation: [T; 4],
    translation: [T; 3],
}

impl<T: Real> TryFrom<PoseRepr<T>> for Pose<T> {
    type Error = Error;
    fn try_from(p: PoseRepr<T>) -> Result<Self> {
        Ok(Pose { r: UnitQuaternion::from_vec4(p.rotation)?, t: Quaternion::from_vec3(p.translation) })
    }
}

impl<T: Real> From<Pose<T>> for PoseRepr<T> {
    fn from(p: Pose<T>) -> Self {
        PoseRepr { rotation: p.r.vec4(), translation: p.t.imag_array() }
    }
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self { r: UnitQuaternion::identity(), t: Quaternion::zero() }
    }

    pub fn new(r: UnitQuaternion<T>, t: Quaternion<T>) -> Self {
        Self { r, t: t.imag() }
    }

    pub fn from_translation(t: [T; 3]) -> Self {
        Self { r: UnitQuaternion::identity(), t: Quaternion::from_vec3(t) }
    }

    /// `self ∘ other`: applies `other` in the frame of `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self { r: self.r.compose(other.r), t: self.t + rotate_point(self.r, other.t) }
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.r.conj();
        Self { r: r_inv, t: -rotate_point(r_inv, self.t) }
    }

    /// Maps a point expressed in this frame to the parent frame.
    pub fn transform_point(&self, p: Quaternion<T>) -> Quaternion<T> {
        self.t + rotate_point(self.r, p)
    }

    /// z-axis of this frame in the parent frame.
    pub fn z_axis(&self) -> Quaternion<T> {
        rotate_point(self.r, Quaternion::k())
    }

    pub fn is_finite(&self) -> bool {
        self.r.quaternion().is_finite() && self.t.is_finite()
    }
}

/// Joint positions (rad for revolute joints, m for prismatic).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig<T>(pub Vec<T>);

impl<T: Real> JointConfig<T> {
    pub fn new(q: Vec<T>) -> Result<Self> {
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("joint configuration"));
        }
        Ok(Self(q))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T> std::ops::Deref for JointConfig<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Center line of the instrument shaft: point `p` and unit direction `l`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShaftLine<T> {
    pub p: Quaternion<T>,
    pub l: Quaternion<T>,
}

impl<T: Real> ShaftLine<T> {
    /// Normalizes `direction`.
    pub fn new(point: Quaternion<T>, direction: Quaternion<T>) -> Result<Self> {
        let n = direction.imag().norm();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::InvalidParameter("degenerate line direction".into()));
        }
        Ok(Self { p: point.imag(), l: direction.imag() * (T::one() / n) })
    }

    /// Point at arc length `s` from `p`.
    pub fn point_at(&self, s: T) -> Quaternion<T> {
        self.p + self.l * s
    }

    pub fn sq_distance_to(&self, c: Quaternion<T>) -> T {
        line_point_sq_distance(self, c)
    }
}

/// A serial chain with joint limits and a designated shaft frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Real + Serialize"))]
pub struct RobotModel<T> {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub convention: DhConvention,
    pub joints: Vec<DhJoint<T>>,
    pub q_min: Vec<T>,
    pub q_max: Vec<T>,
    #[serde(default)]
    pub base_pose: Pose<T>,
    /// Index of the frame (0 = base, k = after joint k) whose origin lies on
    /// the shaft and whose z-axis is the shaft direction.
    pub shaft_frame: usize,
    pub shaft_length: T,
    /// Leading joints that belong to the manipulator. The remainder belong to
    /// the instrument and are damped with a separate weight.
    #[serde(default = "default_arm_joints")]
    pub arm_joints: usize,
}

fn default_arm_joints() -> usize {
    6
}

impl<T: Real> RobotModel<T> {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dof();
        if n == 0 {
            return Err(Error::InvalidModel("no joints".into()));
        }
        if self.q_min.len() != n || self.q_max.len() != n {
            return Err(Error::InvalidModel(format!(
                "{} joints but {} lower and {} upper limits",
                n,
                self.q_min.len(),
                self.q_max.len()
            )));
        }
        for (k, (lo, hi)) in self.q_min.iter().zip(&self.q_max).enumerate() {
            if lo.is_nan() || hi.is_nan() || !(lo < hi) {
                return Err(Error::InvalidModel(format!("joint {k}: q_min {lo} must be below q_max {hi}")));
            }
        }
        if self.shaft_frame > n {
            return Err(Error::InvalidModel(format!("shaft frame {} beyond chain of {}", self.shaft_frame, n)));
        }
        if !(self.shaft_length > T::zero()) {
            return Err(Error::InvalidModel("shaft length must be positive".into()));
        }
        if self.arm_joints > n {
            return Err(Error::InvalidModel(format!("{} arm joints in a {} joint chain", self.arm_joints, n)));
        }
        let finite = self
            .joints
            .iter()
            .all(|j| j.a.is_finite() && j.alpha.is_finite() && j.d.is_finite() && j.theta_offset.is_finite());
        if !finite || !self.base_pose.is_finite() {
            return Err(Error::InvalidModel("non-finite kinematic parameter".into()));
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[T], tol: T) -> bool {
        q.iter().zip(&self.q_min).zip(&self.q_max).all(|((&v, &lo), &hi)| v >= lo - tol && v <= hi + tol)
    }

    pub fn clamp(&self, q: &mut [T]) {
        for ((v, &lo), &hi) in q.iter_mut().zip(&self.q_min).zip(&self.q_max) {
            *v = v.max(lo).min(hi);
        }
    }

    /// Frames and joint axes at `q`.
    pub fn chain(&self, q: &[T]) -> Result<ChainState<T>> {
        let n = self.dof();
        if q.len() != n {
            return Err(Error::Dimension(format!("{} joint values for {} joints", q.len(), n)));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("joint configuration"));
        }
        let mut frames = Vec::with_capacity(n + 1);
        let mut axes = Vec::with_capacity(n);
        frames.push(self.base_pose);
        for (joint, &qk) in self.joints.iter().zip(q) {
            let prev = *frames.last().expect("base frame present");
            let next = prev.compose(&joint.transform(self.convention, qk));
            let axis_frame = match self.convention {
                DhConvention::Standard => prev,
                DhConvention::Modified => next,
            };
            axes.push(JointAxis { kind: joint.kind, z: axis_frame.z_axis(), origin: axis_frame.t });
            frames.push(next);
        }
        Ok(ChainState { frames, axes, shaft_frame: self.shaft_frame })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct JointAxis<T> {
    pub kind: JointKind,
    /// Unit axis in the base frame.
    pub z: Quaternion<T>,
    /// A point on the axis.
    pub origin: Quaternion<T>,
}

impl<T: Real> JointAxis<T> {
    /// Velocity of point `p` per unit joint rate.
    fn point_velocity(&self, p: Quaternion<T>) -> Quaternion<T> {
        match self.kind {
            JointKind::Revolute => self.z.cross(p - self.origin),
            JointKind::Prismatic => self.z,
        }
    }

    /// Spatial angular velocity per unit joint rate.
    fn angular_velocity(&self) -> Quaternion<T> {
        match self.kind {
            JointKind::Revolute => self.z,
            JointKind::Prismatic => Quaternion::zero(),
        }
    }
}

/// Forward kinematics evaluated at one configuration.
#[derive(Clone, Debug)]
pub struct ChainState<T> {
    frames: Vec<Pose<T>>,
    axes: Vec<JointAxis<T>>,
    shaft_frame: usize,
}

impl<T: Real> ChainState<T> {
    pub fn frames(&self) -> &[Pose<T>] {
        &self.frames
    }

    pub fn axes(&self) -> &[JointAxis<T>] {
        &self.axes
    }

    pub fn end_effector(&self) -> Pose<T> {
        *self.frames.last().expect("chain has a base frame")
    }

    pub fn translation_jacobian(&self) -> Matrix<T> {
        let p = self.end_effector().t;
        let mut j = Matrix::zeros(3, self.axes.len());
        for (k, axis) in self.axes.iter().enumerate() {
            j.set_column(k, &axis.point_velocity(p).imag_array());
        }
        j
    }

    /// Columns are `vec4(½ ω_k r)`.
    pub fn rotation_jacobian(&self) -> Matrix<T> {
        let r = self.end_effector().r.quaternion();
        let mut j = Matrix::zeros(4, self.axes.len());
        for (k, axis) in self.axes.iter().enumerate() {
            let col = (axis.angular_velocity() * r) * T::half();
            j.set_column(k, &col.vec4());
        }
        j
    }

    pub fn shaft_line(&self) -> ShaftLine<T> {
        let f = self.frames[self.shaft_frame];
        ShaftLine { p: f.t, l: f.z_axis() }
    }

    /// Row `J_D` with `Ḋ = J_D q̇` for the squared distance between the shaft
    /// line and `c`.
    pub fn line_point_distance_jacobian(&self, c: Quaternion<T>) -> Matrix<T> {
        let line = self.shaft_line();
        let u = c - line.p;
        let along = u.dot(line.l);
        let perp = u - line.l * along;
        let two = T::two();
        let mut j = Matrix::zeros(1, self.axes.len());
        // joint k moves the shaft frame only if it precedes it in the chain
        for (k, axis) in self.axes.iter().enumerate().take(self.shaft_frame) {
            let p_dot = axis.point_velocity(line.p);
            let l_dot = axis.angular_velocity().cross(line.l);
            // D = |u|² - <u,l>², u̇ = -ṗ
            j[(0, k)] = -two * perp.dot(p_dot) - two * along * perp.dot(l_dot);
        }
        j
    }
}

pub fn fk_pose<T: Real>(model: &RobotModel<T>, q: &[T]) -> Result<Pose<T>> {
    Ok(model.chain(q)?.end_effector())
}

/// `J_t` with `d/dt vec3(t) = J_t q̇`.
pub fn translation_jacobian<T: Real>(model: &RobotModel<T>, q: &[T]) -> Result<Matrix<T>> {
    Ok(model.chain(q)?.translation_jacobian())
}

/// `J_r` with `d/dt vec4(r) = J_r q̇`.
pub fn rotation_jacobian<T: Real>(model: &RobotModel<T>, q: &[T]) -> Result<Matrix<T>> {
    Ok(model.chain(q)?.rotation_jacobian())
}

pub fn shaft_line<T: Real>(model: &RobotModel<T>, q: &[T]) -> Result<ShaftLine<T>> {
    Ok(model.chain(q)?.shaft_line())
}

/// Squared distance from `c` to the line: `‖(c − p) − ⟨c − p, l⟩ l‖²`.
pub fn line_point_sq_distance<T: Real>(line: &ShaftLine<T>, c: Quaternion<T>) -> T {
    let u = (c - line.p).imag();
    let perp = u - line.l * u.dot(line.l);
    perp.norm_squared()
}

pub fn line_point_distance_jacobian<T: Real>(
    model: &RobotModel<T>,
    q: &[T],
    c: Quaternion<T>,
) -> Result<Matrix<T>> {
    Ok(model.chain(q)?.line_point_distance_jacobian(c))
}

impl RobotModel<f64> {
    /// Nine-joint reference chain: an anthropomorphic 6R arm (standard DH)
    /// carrying a 0.20 m straight-shaft instrument with a roll joint about
    /// the shaft and a two-joint distal wrist. The instrument joint types are
    /// an arbitrary but representative choice. Frame 6 is the flange; its
    /// z-axis is the shaft center line.
    pub fn reference_instrument_arm() -> Self {
        let h = PI / 2.0;
        let joints = vec![
            DhJoint::revolute(0.0, -h, 0.345, PI),
            DhJoint::revolute(0.25, 0.0, 0.0, -h),
            DhJoint::revolute(0.01, -h, 0.0, h),
            DhJoint::revolute(0.0, h, 0.255, 0.0),
            DhJoint::revolute(0.0, -h, 0.0, 0.0),
            DhJoint::revolute(0.0, 0.0, 0.07, 0.0),
            // instrument: shaft roll, then two distal bends
            DhJoint::revolute(0.0, -h, 0.20, 0.0),
            DhJoint::revolute(0.008, h, 0.0, 0.0),
            DhJoint::revolute(0.01, 0.0, 0.0, 0.0),
        ];
        Self {
            name: "reference-9dof".into(),
            convention: DhConvention::Standard,
            joints,
            q_min: vec![-2.9, -2.0, -0.3, -4.7, -2.1, -6.2, -3.1, -1.4, -1.4],
            q_max: vec![2.9, 2.0, 2.6, 4.7, 2.1, 6.2, 3.1, 1.4, 1.4],
            base_pose: Pose::identity(),
            shaft_frame: 6,
            shaft_length: 0.20,
            arm_joints: 6,
        }
    }

    /// Home configuration of [`Self::reference_instrument_arm`]: the shaft
    /// points steeply downward in front of the base, well inside the limits
    /// and away from wrist singularities.
    pub fn reference_home() -> Vec<f64> {
        vec![0.0, -0.4, 1.7, 0.0, -1.5, 0.0, 0.0, 0.2, 0.2]
    }
}
