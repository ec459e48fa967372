//! Linear velocity constraints `W q̇ ≤ w` for joint limits and entry spheres.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ChainState, RobotModel};
use crate::linalg::Matrix;
use crate::quaternion::Quaternion;
use crate::scalar::Real;

/// How far `q` may sit outside its limits before the rows are flagged.
pub const LIMIT_TOLERANCE: f64 = 1e-9;

/// Region around the incision the shaft center line must not leave.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Real + Serialize"))]
pub struct EntrySphere<T> {
    pub center: Quaternion<T>,
    /// Largest allowed squared distance (m²).
    pub d_safe: T,
    /// Approach gain (1/s).
    pub eta_d: T,
}

impl<T: Real> EntrySphere<T> {
    pub fn new(center: [T; 3], d_safe: T, eta_d: T) -> Result<Self> {
        let s = Self { center: Quaternion::from_vec3(center), d_safe, eta_d };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_safe > T::zero()) || !self.d_safe.is_finite() {
            return Err(Error::InvalidParameter(format!("entry sphere D_safe must be positive, got {}", self.d_safe)));
        }
        if !(self.eta_d > T::zero()) || !self.eta_d.is_finite() {
            return Err(Error::InvalidParameter(format!("entry sphere gain must be positive, got {}", self.eta_d)));
        }
        if !self.center.is_finite() {
            return Err(Error::NonFinite("entry sphere center"));
        }
        Ok(())
    }

    /// Sphere centered on the shaft line, `offset` meters from its origin.
    pub fn on_shaft(chain: &ChainState<T>, offset: T, d_safe: T, eta_d: T) -> Result<Self> {
        let line = chain.shaft_line();
        let s = Self { center: line.point_at(offset), d_safe, eta_d };
        s.validate()?;
        Ok(s)
    }

    /// Radius in meters, `√D_safe`.
    pub fn radius(&self) -> T {
        self.d_safe.sqrt()
    }

    /// Squared distance between the shaft center line and the center.
    pub fn sq_distance(&self, chain: &ChainState<T>) -> T {
        chain.shaft_line().sq_distance_to(self.center)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    JointLower(usize),
    JointUpper(usize),
    EntrySphere(usize),
}

/// Stacked inequality rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintRows<T> {
    pub matrix: Matrix<T>,
    pub bound: Vec<T>,
    pub kinds: Vec<RowKind>,
    /// Set when `q̇ = 0` violates some row beyond tolerance, i.e. the state
    /// already sits outside the safe set.
    pub infeasible_at_zero: bool,
}

impl<T: Real> ConstraintRows<T> {
    pub fn empty(dof: usize) -> Self {
        Self { matrix: Matrix::zeros(0, dof), bound: Vec::new(), kinds: Vec::new(), infeasible_at_zero: false }
    }

    pub fn len(&self) -> usize {
        self.bound.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bound.is_empty()
    }

    pub fn stack(mut self, other: ConstraintRows<T>) -> Self {
        self.matrix = if self.bound.is_empty() { other.matrix } else { self.matrix.vstack(&other.matrix) };
        self.bound.extend(other.bound);
        self.kinds.extend(other.kinds);
        self.infeasible_at_zero |= other.infeasible_at_zero;
        self
    }

    /// `max_i (W q̇ − w)_i`, or `-∞` without rows.
    pub fn max_violation(&self, qdot: &[T]) -> T {
        (0..self.len())
            .map(|i| crate::linalg::dot(self.matrix.row(i), qdot) - self.bound[i])
            .fold(T::neg_infinity(), T::max)
    }
}

/// `[−I; I] q̇ ≤ [q − q_min; q_max − q]`.
///
/// With an explicit Euler step of length `dt ≤ 1 s` any feasible `q̇` keeps
/// `q + q̇ dt` inside the limits.
pub fn joint_limit_rows<T: Real>(q: &[T], model: &RobotModel<T>) -> Result<ConstraintRows<T>> {
    let n = model.dof();
    if q.len() != n {
        return Err(Error::Dimension(format!("{} joint values for {} joints", q.len(), n)));
    }
    let mut matrix = Matrix::zeros(2 * n, n);
    let mut bound = Vec::with_capacity(2 * n);
    let mut kinds = Vec::with_capacity(2 * n);
    for k in 0..n {
        matrix[(k, k)] = -T::one();
        bound.push(q[k] - model.q_min[k]);
        kinds.push(RowKind::JointLower(k));
    }
    for k in 0..n {
        matrix[(n + k, k)] = T::one();
        bound.push(model.q_max[k] - q[k]);
        kinds.push(RowKind::JointUpper(k));
    }
    let tol = T::lit(LIMIT_TOLERANCE);
    let infeasible_at_zero = bound.iter().any(|&b| b < -tol);
    Ok(ConstraintRows { matrix, bound, kinds, infeasible_at_zero })
}

/// Single row `J_D q̇ ≤ η_d (D_safe − D)`.
pub fn entry_sphere_rows<T: Real>(model: &RobotModel<T>, q: &[T], sphere: &EntrySphere<T>) -> Result<ConstraintRows<T>> {
    let chain = model.chain(q)?;
    Ok(entry_sphere_rows_from_chain(&chain, sphere, 0))
}

/// Same as [`entry_sphere_rows`] for an already evaluated chain; `index`
/// labels the row.
pub fn entry_sphere_rows_from_chain<T: Real>(
    chain: &ChainState<T>,
    sphere: &EntrySphere<T>,
    index: usize,
) -> ConstraintRows<T> {
    let matrix = chain.line_point_distance_jacobian(sphere.center);
    let d = sphere.sq_distance(chain);
    let w = sphere.eta_d * (sphere.d_safe - d);
    ConstraintRows {
        matrix,
        bound: vec![w],
        kinds: vec![RowKind::EntrySphere(index)],
        infeasible_at_zero: w < -T::lit(crate::qp::FEASIBILITY_TOLERANCE),
    }
}
