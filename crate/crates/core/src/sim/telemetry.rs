//! Per-tick telemetry records.

use serde::{Deserialize, Serialize};

use crate::kinematics::Pose;
use crate::qp::SolverStatus;
use crate::scalar::Real;

/// State of one arm after a tick.
///
/// Joint values, pose errors and the shaft distance describe the state after
/// integration; `qdot`, `w_es`, `active_rows` and `status` come from the QP
/// solved at the start of the tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Real + Serialize"))]
pub struct ArmTelemetry<T> {
    pub arm: usize,
    /// Instrument tip pose.
    pub pose: Pose<T>,
    /// Target in effect during the tick.
    pub target: Pose<T>,
    /// Shaft center line: a point on it and its unit direction.
    pub shaft_point: [T; 3],
    pub shaft_direction: [T; 3],
    pub q: Vec<T>,
    pub qdot: Vec<T>,
    /// `vec3(t − t_d)` in meters.
    pub translation_error: [T; 3],
    pub translation_error_norm: T,
    pub rotation_error_norm: T,
    /// Squared shaft-to-center distance (m²), when an entry sphere is set.
    pub d_es: Option<T>,
    /// `√D_ES` (m).
    pub distance_es: Option<T>,
    pub w_es: Option<T>,
    pub active_rows: usize,
    /// `None` when the controller returned an error.
    pub status: Option<SolverStatus>,
    /// Operator-side force feedback.
    pub force: [T; 3],
    /// Largest change made by clamping `q` to its limits.
    pub clamp_correction: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Real + Serialize"))]
pub struct TelemetryRecord<T> {
    pub tick: u64,
    pub time: T,
    pub arms: Vec<ArmTelemetry<T>>,
}

impl<T: Real> TelemetryRecord<T> {
    pub fn max_d_es(&self) -> Option<T> {
        self.arms.iter().filter_map(|a| a.d_es).reduce(T::max)
    }

    pub fn all_optimal(&self) -> bool {
        self.arms.iter().all(|a| a.status == Some(SolverStatus::Optimal))
    }
}
