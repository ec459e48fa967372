//! Operator-side mapping: motion scaling and impedance force feedback.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Pose;
use crate::quaternion::{rotate_point, Quaternion, UnitQuaternion};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Real + Serialize")
)]
pub struct OperatorParams<T> {
    /// Stiffness `η_f`.
    pub stiffness: T,
    /// Viscosity `η_V`.
    pub viscosity: T,
    /// Patient-side displacement per unit operator-side displacement.
    pub motion_scaling: T,
}

impl<T: Real> Default for OperatorParams<T> {
    fn default() -> Self {
        Self { stiffness: T::lit(100.0), viscosity: T::lit(10.0), motion_scaling: T::one() }
    }
}

impl<T: Real> OperatorParams<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("stiffness", self.stiffness), ("viscosity", self.viscosity), ("motion_scaling", self.motion_scaling)]
        {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("operator {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// `Γ = −η_f t̃ − η_V ṫ` for pure quaternions `t̃`, `ṫ`.
pub fn impedance_force<T: Real>(error_os: Quaternion<T>, velocity_os: Quaternion<T>, params: &OperatorParams<T>) -> Quaternion<T> {
    (error_os * -params.stiffness - velocity_os * params.viscosity).imag()
}

/// `anchor_ps + MS (raw − anchor_os)`.
pub fn scale_target<T: Real>(raw_os: Quaternion<T>, motion_scaling: T, anchor_ps: Quaternion<T>, anchor_os: Quaternion<T>) -> Quaternion<T> {
    (anchor_ps + (raw_os - anchor_os) * motion_scaling).imag()
}

/// Map between one operator device and one patient-side arm.
///
/// `os_from_ps` rotates patient-side vectors into the operator frame; it is
/// the identity unless configured otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorMap<T> {
    pub motion_scaling: T,
    pub os_from_ps: UnitQuaternion<T>,
    pub anchor_ps: Quaternion<T>,
    pub anchor_os: Quaternion<T>,
}

impl<T: Real> OperatorMap<T> {
    /// Identity rotation with both anchors at `anchor`.
    pub fn anchored_at(anchor: Quaternion<T>, motion_scaling: T) -> Self {
        Self { motion_scaling, os_from_ps: UnitQuaternion::identity(), anchor_ps: anchor, anchor_os: anchor }
    }

    /// Operator-side device pose to patient-side target pose.
    pub fn to_patient(&self, os: &Pose<T>) -> Pose<T> {
        let ps_from_os = self.os_from_ps.conj();
        let delta = rotate_point(ps_from_os, os.t - self.anchor_os);
        let t = scale_target(self.anchor_ps + delta, self.motion_scaling, self.anchor_ps, self.anchor_ps);
        let r = ps_from_os.compose(os.r).compose(self.os_from_ps);
        Pose::new(r, t)
    }

    /// Patient-side point to where the device would sit.
    pub fn to_operator_point(&self, ps: Quaternion<T>) -> Quaternion<T> {
        (self.anchor_os + rotate_point(self.os_from_ps, ps - self.anchor_ps) * (T::one() / self.motion_scaling)).imag()
    }

    /// Patient-side vector to operator-side vector (rotation and scaling only).
    pub fn to_operator_vector(&self, ps: Quaternion<T>) -> Quaternion<T> {
        rotate_point(self.os_from_ps, ps) * (T::one() / self.motion_scaling)
    }
}
