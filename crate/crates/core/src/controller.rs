//! Per-step QP controller producing joint-velocity commands.
//!
//! Each step minimizes
//!
//! ```text
//!     α ‖J_t q̇ + η vec3(t̃)‖² + (1 − α) ‖J_r̃ q̇ + η vec4(r̃)‖² + ‖Λ q̇‖²
//! ```
//!
//! subject to the stacked joint-limit and entry-sphere rows, where
//! `t̃ = t − t_d`, `r̃` is the switching rotational error and `J_r̃` its
//! Jacobian. `J_r̃ = R(r_d) C J_r` is an orthogonal transform of the rotation
//! Jacobian (`C` conjugates, `R(r_d)` right-multiplies by `r_d`), so
//! `J_r̃ᵀ J_r̃ = J_rᵀ J_r` and the closed loop drives `r̃` itself to zero.
//!
//! The QP is handed to the solver as `½ q̇ᵀ H q̇ + gᵀ q̇` with
//! `H = 2(α J_tᵀJ_t + (1−α) J_rᵀJ_r + ΛᵀΛ) + ε I` and
//! `g = 2η(α J_tᵀ vec3(t̃) + (1−α) J_r̃ᵀ vec4(r̃))`, which differs from the
//! squared-norm objective by a constant and the factor of two.

use serde::{Deserialize, Serialize};

use crate::constraints::{entry_sphere_rows_from_chain, joint_limit_rows, ConstraintRows, EntrySphere, RowKind};
use crate::error::{Error, Result};
use crate::kinematics::{ChainState, Pose, RobotModel};
use crate::linalg::{dot, Matrix};
use crate::qp::{ActiveSetSolver, QpProblem, SolverOptions, VelocityCommand};
use crate::quaternion::{rotation_error_with_branch, ErrorBranch, Quaternion};
use crate::scalar::Real;

/// Weights and gains of the tracking QP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Real + Serialize")
)]
pub struct ControllerParams<T> {
    /// Soft priority of translation over rotation, in `[0, 1]`.
    pub alpha: T,
    /// Task-error gain (1/s).
    pub eta: T,
    /// Damping on manipulator joints.
    pub lambda_r: T,
    /// Damping on instrument joints.
    pub lambda_f: T,
    /// Ridge added to the Hessian; keeps it positive definite when the
    /// damping is only semidefinite.
    pub reg: T,
}

impl<T: Real> Default for ControllerParams<T> {
    fn default() -> Self {
        Self { alpha: T::lit(0.9999), eta: T::lit(120.0), lambda_r: T::lit(0.01), lambda_f: T::zero(), reg: T::lit(1e-10) }
    }
}

impl<T: Real> ControllerParams<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: T| Err(Error::InvalidParameter(format!("{what} = {v}")));
        if !(self.alpha >= T::zero() && self.alpha <= T::one()) {
            return bad("alpha outside [0, 1]", self.alpha);
        }
        if !(self.eta > T::zero()) || !self.eta.is_finite() {
            return bad("eta must be positive", self.eta);
        }
        if !(self.lambda_r >= T::zero()) || !self.lambda_r.is_finite() {
            return bad("lambda_r must be non-negative", self.lambda_r);
        }
        if !(self.lambda_f >= T::zero()) || !self.lambda_f.is_finite() {
            return bad("lambda_f must be non-negative", self.lambda_f);
        }
        if !(self.reg >= T::lit(1e-12) && self.reg <= T::lit(1e-6)) {
            return bad("reg outside [1e-12, 1e-6]", self.reg);
        }
        Ok(())
    }

    /// Diagonal of `Λ`: `λ_R` on the arm joints, `λ_F` on the rest.
    pub fn damping_diagonal(&self, dof: usize, arm_joints: usize) -> Vec<T> {
        (0..dof).map(|k| if k < arm_joints { self.lambda_r } else { self.lambda_f }).collect()
    }
}

/// Pose errors feeding the cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskErrors<T> {
    /// `t − t_d`
    pub translation: Quaternion<T>,
    /// Switching rotational error.
    pub rotation: Quaternion<T>,
    pub branch: ErrorBranch,
}

pub fn task_errors<T: Real>(pose: &Pose<T>, target: &Pose<T>) -> TaskErrors<T> {
    let (rotation, branch) = rotation_error_with_branch(pose.r, target.r);
    TaskErrors { translation: (pose.t - target.t).imag(), rotation, branch }
}

/// Jacobian of `vec4(r̃)` with respect to `q`.
pub fn rotation_error_jacobian<T: Real>(rotation_jacobian: &Matrix<T>, target: &Pose<T>) -> Matrix<T> {
    let right = target.r.quaternion().right_matrix();
    let n = rotation_jacobian.cols();
    let mut out = Matrix::zeros(4, n);
    let sign = [T::one(), -T::one(), -T::one(), -T::one()];
    for c in 0..n {
        for r in 0..4 {
            let mut acc = T::zero();
            for k in 0..4 {
                acc += right[r][k] * sign[k] * rotation_jacobian[(k, c)];
            }
            out[(r, c)] = acc;
        }
    }
    out
}

/// Builds the QP at configuration `q` (see module docs for `H` and `g`).
pub fn assemble_qp<T: Real>(
    model: &RobotModel<T>,
    q: &[T],
    target: &Pose<T>,
    params: &ControllerParams<T>,
    rows: &ConstraintRows<T>,
) -> Result<QpProblem<T>> {
    let chain = model.chain(q)?;
    assemble_from_chain(model, &chain, target, params, rows)
}

pub fn assemble_from_chain<T: Real>(
    model: &RobotModel<T>,
    chain: &ChainState<T>,
    target: &Pose<T>,
    params: &ControllerParams<T>,
    rows: &ConstraintRows<T>,
) -> Result<QpProblem<T>> {
    let n = model.dof();
    let jt = chain.translation_jacobian();
    let jr = chain.rotation_jacobian();
    if !jt.is_finite() || !jr.is_finite() {
        return Err(Error::NonFinite("task Jacobian"));
    }
    let err = task_errors(&chain.end_effector(), target);
    let jre = rotation_error_jacobian(&jr, target);

    let alpha = params.alpha;
    let beta = T::one() - alpha;
    let two = T::two();

    let mut h = jt.gram();
    h.scale(alpha);
    h.add_scaled(beta, &jr.gram());
    for (k, l) in params.damping_diagonal(n, model.arm_joints).into_iter().enumerate() {
        h[(k, k)] += l * l;
    }
    h.scale(two);
    h.add_diagonal(params.reg);

    let gt = jt.tr_mul_vec(&err.translation.imag_array());
    let gr = jre.tr_mul_vec(&err.rotation.vec4());
    let scale = two * params.eta;
    let gradient: Vec<T> = gt.iter().zip(&gr).map(|(&a, &b)| scale * (alpha * a + beta * b)).collect();

    if !rows.is_empty() && rows.matrix.cols() != n {
        return Err(Error::Dimension(format!("constraint rows have {} columns for {} joints", rows.matrix.cols(), n)));
    }
    Ok(QpProblem { hessian: h, gradient, constraints: rows.matrix.clone(), bounds: rows.bound.clone() })
}

/// Value of the squared-norm objective (without the ridge) at `qdot`.
pub fn tracking_objective<T: Real>(
    model: &RobotModel<T>,
    chain: &ChainState<T>,
    target: &Pose<T>,
    params: &ControllerParams<T>,
    qdot: &[T],
) -> T {
    let jt = chain.translation_jacobian();
    let jre = rotation_error_jacobian(&chain.rotation_jacobian(), target);
    let err = task_errors(&chain.end_effector(), target);
    let ft: T = jt
        .mul_vec(qdot)
        .iter()
        .zip(err.translation.imag_array())
        .map(|(&a, b)| (a + params.eta * b).powi(2))
        .sum();
    let fr: T = jre.mul_vec(qdot).iter().zip(err.rotation.vec4()).map(|(&a, b)| (a + params.eta * b).powi(2)).sum();
    let fl: T = params
        .damping_diagonal(model.dof(), model.arm_joints)
        .iter()
        .zip(qdot)
        .map(|(&l, &v)| (l * v).powi(2))
        .sum();
    params.alpha * ft + (T::one() - params.alpha) * fr + fl
}

/// Result of one control step with the quantities telemetry needs.
#[derive(Clone, Debug)]
pub struct ControlOutput<T> {
    pub command: VelocityCommand<T>,
    pub errors: TaskErrors<T>,
    /// Squared shaft distance to the entry-sphere center, if one is set.
    pub d_es: Option<T>,
    /// Entry-sphere bound `η_d (D_safe − D)`, if one is set.
    pub w_es: Option<T>,
    /// Rows in the working set at the solution.
    pub active_rows: usize,
    pub rows: ConstraintRows<T>,
}

impl<T: Real> ControlOutput<T> {
    /// `Ḋ = J_D q̇` for the entry-sphere row, if present.
    pub fn sphere_rate(&self) -> Option<T> {
        self.rows
            .kinds
            .iter()
            .position(|k| matches!(k, RowKind::EntrySphere(_)))
            .map(|i| dot(self.rows.matrix.row(i), &self.command.qdot))
    }
}

/// Per-arm controller owning its solver workspace.
#[derive(Clone, Debug)]
pub struct ArmController<T> {
    pub params: ControllerParams<T>,
    solver: ActiveSetSolver,
    warm_start: bool,
}

impl<T: Real> ArmController<T> {
    pub fn new(params: ControllerParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, solver: ActiveSetSolver::new(SolverOptions::default()), warm_start: true })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.solver.options = options;
        self
    }

    pub fn with_warm_start(mut self, enabled: bool) -> Self {
        self.warm_start = enabled;
        self
    }

    pub fn reset(&mut self) {
        self.solver.reset();
    }

    /// Joint limits and the optional entry sphere, then the QP.
    pub fn step(
        &mut self,
        model: &RobotModel<T>,
        q: &[T],
        target: &Pose<T>,
        sphere: Option<&EntrySphere<T>>,
    ) -> Result<ControlOutput<T>> {
        let chain = model.chain(q)?;
        self.step_with_chain(model, &chain, q, target, sphere)
    }

    pub fn step_with_chain(
        &mut self,
        model: &RobotModel<T>,
        chain: &ChainState<T>,
        q: &[T],
        target: &Pose<T>,
        sphere: Option<&EntrySphere<T>>,
    ) -> Result<ControlOutput<T>> {
        let mut rows = joint_limit_rows(q, model)?;
        let mut d_es = None;
        let mut w_es = None;
        if let Some(s) = sphere {
            let es = entry_sphere_rows_from_chain(chain, s, 0);
            d_es = Some(s.sq_distance(chain));
            w_es = Some(es.bound[0]);
            rows = rows.stack(es);
        }
        let problem = assemble_from_chain(model, chain, target, &self.params, &rows)?;
        if !self.warm_start {
            self.solver.reset();
        }
        let command = self.solver.solve(&problem)?;
        let active_rows = command.active_set.len();
        Ok(ControlOutput { errors: task_errors(&chain.end_effector(), target), command, d_es, w_es, active_rows, rows })
    }
}

/// Stateless control step: rows, QP, cold solve.
pub fn control_step<T: Real>(
    model: &RobotModel<T>,
    q: &[T],
    target: &Pose<T>,
    params: &ControllerParams<T>,
    sphere: Option<&EntrySphere<T>>,
) -> Result<ControlOutput<T>> {
    ArmController::new(*params)?.with_warm_start(false).step(model, q, target, sphere)
}
