//! Dense dual active-set solver for small strictly convex QPs.
//!
//! Solves
//!
//! ```text
//!     minimize    ½ xᵀ H x + gᵀ x
//!     subject to  W x ≤ w
//! ```
//!
//! with the Goldfarb–Idnani dual method: start at the unconstrained minimizer
//! and repeatedly add the most violated row while keeping the multipliers of
//! the working set non-negative. Iterates are dual feasible throughout, so no
//! primal feasible starting point is needed. Sizes targeted here are ~9
//! variables and a few dozen rows; the projected quantities are recomputed
//! from scratch every iteration rather than updated by rank-one factor
//! updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Cholesky, Matrix};
use crate::scalar::Real;

/// `q̇ = 0` counts as feasible when every bound is at least `-FEASIBILITY_TOLERANCE`.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem<T> {
    pub hessian: Matrix<T>,
    pub gradient: Vec<T>,
    pub constraints: Matrix<T>,
    pub bounds: Vec<T>,
}

impl<T: Real> QpProblem<T> {
    pub fn unconstrained(hessian: Matrix<T>, gradient: Vec<T>) -> Self {
        let n = gradient.len();
        Self { hessian, gradient, constraints: Matrix::zeros(0, n), bounds: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn num_rows(&self) -> usize {
        self.bounds.len()
    }

    pub fn objective(&self, x: &[T]) -> T {
        let hx = self.hessian.mul_vec(x);
        T::half() * dot(x, &hx) + dot(&self.gradient, x)
    }

    fn check(&self) -> Result<()> {
        let n = self.dim();
        if self.hessian.rows() != n || self.hessian.cols() != n {
            return Err(Error::Dimension(format!(
                "hessian {}x{} for {} variables",
                self.hessian.rows(),
                self.hessian.cols(),
                n
            )));
        }
        if self.num_rows() > 0 && (self.constraints.cols() != n || self.constraints.rows() != self.num_rows()) {
            return Err(Error::Dimension(format!(
                "constraint matrix {}x{} with {} bounds",
                self.constraints.rows(),
                self.constraints.cols(),
                self.num_rows()
            )));
        }
        if !self.hessian.is_finite() || self.gradient.iter().any(|v| !v.is_finite()) || !self.constraints.is_finite()
        {
            return Err(Error::NonFinite("QP data"));
        }
        if self.bounds.iter().any(|v| v.is_nan() || *v == T::neg_infinity()) {
            return Err(Error::NonFinite("QP bounds"));
        }
        Ok(())
    }

    /// KKT residuals of `(x, μ)`.
    pub fn kkt(&self, x: &[T], multipliers: &[T]) -> KktResiduals<T> {
        let mut stationarity = self.hessian.mul_vec(x);
        axpy(T::one(), &self.gradient, &mut stationarity);
        let mut primal = T::zero();
        let mut complementarity = T::zero();
        let mut dual = T::zero();
        for i in 0..self.num_rows() {
            let mu = multipliers.get(i).copied().unwrap_or_else(T::zero);
            axpy(mu, self.constraints.row(i), &mut stationarity);
            dual = dual.max(-mu);
            if self.bounds[i].is_finite() {
                let slack = dot(self.constraints.row(i), x) - self.bounds[i];
                primal = primal.max(slack);
                complementarity = complementarity.max((mu * slack).abs());
            }
        }
        KktResiduals { stationarity: norm(&stationarity), primal: primal.max(T::zero()), complementarity, dual }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResiduals<T> {
    /// `‖H x + g + Wᵀ μ‖`
    pub stationarity: T,
    /// `max(0, max_i (W x − w)_i)`
    pub primal: T,
    /// `max_i |μ_i (W x − w)_i|`
    pub complementarity: T,
    /// `max(0, max_i −μ_i)`
    pub dual: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    MaxIter,
    InfeasibleInput,
}

impl SolverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::MaxIter => "max_iter",
            SolverStatus::InfeasibleInput => "infeasible_input",
        }
    }
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Solver output: the joint-velocity command and its certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityCommand<T> {
    pub qdot: Vec<T>,
    pub status: SolverStatus,
    /// Rows held with equality at the solution.
    pub active_set: Vec<usize>,
    /// One multiplier per row, zero for inactive rows.
    pub multipliers: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> VelocityCommand<T> {
    pub fn zero(n: usize, m: usize, status: SolverStatus) -> Self {
        Self { qdot: vec![T::zero(); n], status, active_set: Vec::new(), multipliers: vec![T::zero(); m], iterations: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Relative primal tolerance for declaring a row satisfied.
    pub primal_tolerance: f64,
    /// See [`FEASIBILITY_TOLERANCE`].
    pub feasibility_tolerance: f64,
    /// Ridge used by the least-squares fallback on infeasible input.
    pub fallback_ridge: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            primal_tolerance: 1e-12,
            feasibility_tolerance: FEASIBILITY_TOLERANCE,
            fallback_ridge: 1e-10,
        }
    }
}

/// Active-set solver that remembers the working set of its last solve.
#[derive(Clone, Debug, Default)]
pub struct ActiveSetSolver {
    pub options: SolverOptions,
    warm: Vec<usize>,
}

impl ActiveSetSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self { options, warm: Vec::new() }
    }

    /// Solves warm-started from the previous active set.
    pub fn solve<T: Real>(&mut self, problem: &QpProblem<T>) -> Result<VelocityCommand<T>> {
        let hint = std::mem::take(&mut self.warm);
        let out = solve_with_hint(problem, &self.options, &hint)?;
        self.warm = out.active_set.clone();
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.warm.clear();
    }

    pub fn warm_set(&self) -> &[usize] {
        &self.warm
    }
}

/// Cold solve with default options.
pub fn solve_qp<T: Real>(problem: &QpProblem<T>) -> Result<VelocityCommand<T>> {
    solve_with_hint(problem, &SolverOptions::default(), &[])
}

/// Solves `problem`, seeding the working set with the rows in `hint` that are
/// linearly independent and keep the multipliers non-negative.
pub fn solve_with_hint<T: Real>(
    problem: &QpProblem<T>,
    options: &SolverOptions,
    hint: &[usize],
) -> Result<VelocityCommand<T>> {
    problem.check()?;
    let m = problem.num_rows();
    let n = problem.dim();
    let input_infeasible = problem.bounds.iter().any(|&b| b < -T::lit(options.feasibility_tolerance));

    let chol = Cholesky::factor(&problem.hessian)?;
    let mut ws = Workspace::new(problem, chol);
    let outcome = ws.run(options, hint);

    let cmd = match outcome {
        Outcome::Solved | Outcome::MaxIter => {
            let status = if input_infeasible {
                SolverStatus::InfeasibleInput
            } else if matches!(outcome, Outcome::MaxIter) {
                SolverStatus::MaxIter
            } else {
                SolverStatus::Optimal
            };
            let mut multipliers = vec![T::zero(); m];
            for (&i, &mu) in ws.active.iter().zip(&ws.mu) {
                multipliers[i] = mu;
            }
            let mut active_set = ws.active.clone();
            active_set.sort_unstable();
            VelocityCommand { qdot: ws.x, status, active_set, multipliers, iterations: ws.iterations }
        }
        Outcome::Infeasible => {
            let qdot = least_squares_restoring(problem, T::lit(options.fallback_ridge));
            VelocityCommand {
                qdot,
                status: SolverStatus::InfeasibleInput,
                active_set: Vec::new(),
                multipliers: vec![T::zero(); m],
                iterations: ws.iterations,
            }
        }
    };
    debug_assert_eq!(cmd.qdot.len(), n);
    Ok(cmd)
}

/// Minimum-norm `x` with `W_V x ≈ w_V` over the rows violated at `x = 0`.
fn least_squares_restoring<T: Real>(problem: &QpProblem<T>, ridge: T) -> Vec<T> {
    let n = problem.dim();
    let violated: Vec<usize> = (0..problem.num_rows()).filter(|&i| problem.bounds[i] < T::zero()).collect();
    if violated.is_empty() {
        return vec![T::zero(); n];
    }
    let k = violated.len();
    let mut gram = Matrix::zeros(k, k);
    for (a, &i) in violated.iter().enumerate() {
        for (b, &j) in violated.iter().enumerate() {
            gram[(a, b)] = dot(problem.constraints.row(i), problem.constraints.row(j));
        }
    }
    gram.add_diagonal(ridge);
    let rhs: Vec<T> = violated.iter().map(|&i| problem.bounds[i]).collect();
    let Ok(chol) = Cholesky::factor(&gram) else {
        return vec![T::zero(); n];
    };
    let y = chol.solve(&rhs);
    let mut x = vec![T::zero(); n];
    for (&i, &yi) in violated.iter().zip(&y) {
        axpy(yi, problem.constraints.row(i), &mut x);
    }
    x
}

enum Outcome {
    Solved,
    MaxIter,
    Infeasible,
}

struct Workspace<'a, T> {
    p: &'a QpProblem<T>,
    chol: Cholesky<T>,
    /// `H⁻¹ W_iᵀ` per row.
    hw: Vec<Vec<T>>,
    x: Vec<T>,
    active: Vec<usize>,
    mu: Vec<T>,
    iterations: usize,
}

impl<'a, T: Real> Workspace<'a, T> {
    fn new(p: &'a QpProblem<T>, chol: Cholesky<T>) -> Self {
        let hw = (0..p.num_rows()).map(|i| chol.solve(p.constraints.row(i))).collect();
        let mut x = chol.solve(&p.gradient);
        x.iter_mut().for_each(|v| *v = -*v);
        Self { p, chol, hw, x, active: Vec::new(), mu: Vec::new(), iterations: 0 }
    }

    fn row(&self, i: usize) -> &[T] {
        self.p.constraints.row(i)
    }

    fn violation(&self, i: usize) -> T {
        dot(self.row(i), &self.x) - self.p.bounds[i]
    }

    fn tolerance(&self, i: usize, rel: T) -> T {
        let scale: T = self.row(i).iter().zip(&self.x).map(|(&a, &b)| (a * b).abs()).sum();
        rel * (T::one() + self.p.bounds[i].abs() + scale)
    }

    /// Projected Gram matrix `N H⁻¹ Nᵀ` of the working set.
    fn projected_gram(&self, set: &[usize]) -> Matrix<T> {
        let k = set.len();
        let mut g = Matrix::zeros(k, k);
        for (a, &i) in set.iter().enumerate() {
            for (b, &j) in set.iter().enumerate().skip(a) {
                let v = dot(self.row(i), &self.hw[j]);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }

    /// Primal direction `z` and working-set multiplier direction `r` for a
    /// unit increase of the multiplier of row `p`.
    fn step_direction(&self, p: usize) -> Option<(Vec<T>, Vec<T>)> {
        let mut z: Vec<T> = self.hw[p].iter().map(|&v| -v).collect();
        if self.active.is_empty() {
            return Some((z, Vec::new()));
        }
        let gram = self.projected_gram(&self.active);
        let chol = Cholesky::factor(&gram).ok()?;
        let rhs: Vec<T> = self.active.iter().map(|&j| -dot(self.row(j), &self.hw[p])).collect();
        let r = chol.solve(&rhs);
        for (&j, &rj) in self.active.iter().zip(&r) {
            axpy(-rj, &self.hw[j], &mut z);
        }
        Some((z, r))
    }

    fn equality_multipliers(&self, set: &[usize]) -> Option<Vec<T>> {
        // N x = w_N with x = -H⁻¹(g + Nᵀ μ)  ⇒  (N H⁻¹ Nᵀ) μ = -w_N - N H⁻¹ g
        let gram = self.projected_gram(set);
        let chol = Cholesky::factor(&gram).ok()?;
        let hg = self.chol.solve(&self.p.gradient);
        let rhs: Vec<T> = set.iter().map(|&i| -self.p.bounds[i] - dot(self.row(i), &hg)).collect();
        Some(chol.solve(&rhs))
    }

    fn apply_equality_solution(&mut self, set: Vec<usize>, mu: Vec<T>) {
        let mut rhs = self.p.gradient.clone();
        for (&i, &m) in set.iter().zip(&mu) {
            axpy(m, self.row(i), &mut rhs);
        }
        self.x = self.chol.solve(&rhs);
        self.x.iter_mut().for_each(|v| *v = -*v);
        self.active = set;
        self.mu = mu;
    }

    fn seed(&mut self, hint: &[usize], independence_eps: T) {
        let mut set: Vec<usize> = Vec::new();
        for &i in hint {
            if i >= self.p.num_rows() || set.contains(&i) || !self.p.bounds[i].is_finite() || set.len() >= self.p.dim()
            {
                continue;
            }
            let mut trial = set.clone();
            trial.push(i);
            let gram = self.projected_gram(&trial);
            let diag_scale = (0..trial.len()).map(|a| gram[(a, a)]).fold(T::zero(), T::max);
            if let Ok(c) = Cholesky::factor(&gram) {
                let l = c.factor_l();
                let last = trial.len() - 1;
                if l[(last, last)] * l[(last, last)] > independence_eps * diag_scale {
                    set = trial;
                }
            }
        }
        // drop negative multipliers until the working set is dual feasible
        while !set.is_empty() {
            let Some(mu) = self.equality_multipliers(&set) else {
                set.clear();
                break;
            };
            let (worst, value) =
                mu.iter().enumerate().fold((0, T::zero()), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
            if value < T::zero() {
                set.remove(worst);
            } else {
                self.apply_equality_solution(set, mu);
                return;
            }
        }
        self.x = self.chol.solve(&self.p.gradient);
        self.x.iter_mut().for_each(|v| *v = -*v);
        self.active.clear();
        self.mu.clear();
    }

    fn most_violated(&self, rel: T) -> Option<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        for i in 0..self.p.num_rows() {
            if !self.p.bounds[i].is_finite() || self.active.contains(&i) {
                continue;
            }
            let v = self.violation(i);
            if v > self.tolerance(i, rel) && best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best
    }

    fn run(&mut self, options: &SolverOptions, hint: &[usize]) -> Outcome {
        let rel = T::lit(options.primal_tolerance);
        let eps = T::lit(1e-12);
        if !hint.is_empty() {
            self.seed(hint, eps);
        }
        loop {
            let Some((p, _)) = self.most_violated(rel) else {
                return Outcome::Solved;
            };
            let mut mu_p = T::zero();
            loop {
                self.iterations += 1;
                if self.iterations > options.max_iterations {
                    return Outcome::MaxIter;
                }
                let Some((z, r)) = self.step_direction(p) else {
                    return Outcome::Infeasible;
                };
                let wz = dot(self.row(p), &z);
                let curvature = dot(self.row(p), &self.hw[p]);
                let dependent = -wz <= eps * curvature;

                // largest dual step keeping working-set multipliers non-negative
                let mut t_dual = T::infinity();
                let mut blocking = None;
                for (k, (&rk, &mk)) in r.iter().zip(&self.mu).enumerate() {
                    if rk < T::zero() {
                        let t = mk / -rk;
                        if t < t_dual {
                            t_dual = t;
                            blocking = Some(k);
                        }
                    }
                }
                let t_primal = if dependent { T::infinity() } else { self.violation(p).max(T::zero()) / -wz };

                if t_dual.is_infinite() && t_primal.is_infinite() {
                    return Outcome::Infeasible;
                }
                if t_primal <= t_dual {
                    axpy(t_primal, &z, &mut self.x);
                    for (m, &rk) in self.mu.iter_mut().zip(&r) {
                        *m += t_primal * rk;
                    }
                    self.active.push(p);
                    self.mu.push(mu_p + t_primal);
                    break;
                }
                if !dependent {
                    axpy(t_dual, &z, &mut self.x);
                }
                for (m, &rk) in self.mu.iter_mut().zip(&r) {
                    *m += t_dual * rk;
                }
                mu_p += t_dual;
                let k = blocking.expect("finite dual step has a blocking row");
                self.active.remove(k);
                self.mu.remove(k);
            }
            for m in &mut self.mu {
                if *m < T::zero() {
                    *m = T::zero();
                }
            }
        }
    }
}
