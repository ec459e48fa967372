//! Kinematic teleoperation control for instrument-carrying robot arms.
//!
//! Each arm is driven at velocity level by a small quadratic program that
//! tracks a desired instrument pose while keeping joints inside their limits
//! and the instrument shaft inside an entry sphere around the incision. The
//! [`sim`] module closes the loop in simulation, computes the operator-side
//! impedance force and records telemetry.
//!
//! The numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what tolerances and defaults assume.

pub mod constraints;
pub mod controller;
pub mod error;
pub mod kinematics;
pub mod linalg;
pub mod qp;
pub mod quaternion;
pub mod scalar;
pub mod sim;

pub use constraints::{entry_sphere_rows, joint_limit_rows, ConstraintRows, EntrySphere, RowKind};
pub use controller::{assemble_qp, control_step, ArmController, ControlOutput, ControllerParams, TaskErrors};
pub use error::{Error, Result};
pub use kinematics::{
    fk_pose, line_point_distance_jacobian, line_point_sq_distance, rotation_jacobian, shaft_line,
    translation_jacobian, ChainState, DhConvention, DhJoint, JointConfig, JointKind, Pose, RobotModel, ShaftLine,
};
pub use linalg::Matrix;
pub use qp::{solve_qp, ActiveSetSolver, QpProblem, SolverOptions, SolverStatus, VelocityCommand};
pub use quaternion::{rotate_point, rotation_error_switching, Quaternion, UnitQuaternion};
pub use scalar::Real;

pub type Quat = Quaternion<f64>;
pub type UnitQuat = UnitQuaternion<f64>;
pub type Pose64 = Pose<f64>;
pub type Model = RobotModel<f64>;
pub type Sphere = EntrySphere<f64>;
pub type Params = ControllerParams<f64>;
pub type Problem = QpProblem<f64>;
pub type Command = VelocityCommand<f64>;
pub type Mat = Matrix<f64>;
pub type Simulation = sim::Simulation<f64>;
pub type TelemetryRecord = sim::TelemetryRecord<f64>;
