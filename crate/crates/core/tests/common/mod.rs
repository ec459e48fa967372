//! Independent reference implementations used as test oracles. Nothing here
//! calls into the crate's kinematics or solver code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teleqp_core::{DhConvention, JointKind, Matrix, QpProblem, RobotModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform configuration strictly inside the limits (5% margin).
pub fn random_q(model: &RobotModel<f64>, rng: &mut impl Rng) -> Vec<f64> {
    model
        .q_min
        .iter()
        .zip(&model.q_max)
        .map(|(&lo, &hi)| {
            let m = 0.05 * (hi - lo);
            rng.gen_range(lo + m..hi - m)
        })
        .collect()
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box–Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn rot_x(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(1.0, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0)
}

fn rot_z(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
}

fn trans(x: f64, y: f64, z: f64) -> Matrix4<f64> {
    Matrix4::new_translation(&Vector3::new(x, y, z))
}

/// Rotation matrix of a scalar-first unit quaternion, written out.
pub fn quat_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Homogeneous transforms of every frame (base first), by matrix products.
pub fn fk_frames(model: &RobotModel<f64>, q: &[f64]) -> Vec<Matrix4<f64>> {
    let base_r = quat_matrix(model.base_pose.r.vec4());
    let bt = model.base_pose.t.imag_array();
    let mut base = Matrix4::identity();
    base.fixed_view_mut::<3, 3>(0, 0).copy_from(&base_r);
    base[(0, 3)] = bt[0];
    base[(1, 3)] = bt[1];
    base[(2, 3)] = bt[2];
    let mut frames = vec![base];
    for (j, &qk) in model.joints.iter().zip(q) {
        let (theta, d) = match j.kind {
            JointKind::Revolute => (j.theta_offset + qk, j.d),
            JointKind::Prismatic => (j.theta_offset, j.d + qk),
        };
        let link = match model.convention {
            DhConvention::Standard => rot_z(theta) * trans(0.0, 0.0, d) * trans(j.a, 0.0, 0.0) * rot_x(j.alpha),
            DhConvention::Modified => rot_x(j.alpha) * trans(j.a, 0.0, 0.0) * rot_z(theta) * trans(0.0, 0.0, d),
        };
        let next = frames.last().unwrap() * link;
        frames.push(next);
    }
    frames
}

pub fn fk_matrix(model: &RobotModel<f64>, q: &[f64]) -> Matrix4<f64> {
    *fk_frames(model, q).last().unwrap()
}

pub fn translation_of(m: &Matrix4<f64>) -> Vector3<f64> {
    Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)])
}

/// Squared distance from `c` to the line `p + s l` by brute-force sweep of
/// `s` followed by golden-section refinement.
pub fn sweep_sq_distance(p: Vector3<f64>, l: Vector3<f64>, c: Vector3<f64>, span: f64) -> f64 {
    let f = |s: f64| (c - (p + l * s)).norm_squared();
    let steps = 20_000;
    let (mut best_s, mut best) = (0.0, f64::INFINITY);
    for i in 0..=steps {
        let s = -span + 2.0 * span * i as f64 / steps as f64;
        let v = f(s);
        if v < best {
            best = v;
            best_s = s;
        }
    }
    let h = 2.0 * span / steps as f64;
    let (mut a, mut b) = (best_s - h, best_s + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if f(x1) < f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    f(0.5 * (a + b)).min(best)
}

pub fn to_dmatrix(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Random strictly convex QP in `n` variables with `m` rows whose bounds are
/// non-negative (the origin is feasible). About a fifth of the bounds are
/// exactly zero.
pub fn random_qp(rng: &mut impl Rng, n: usize, m: usize) -> QpProblem<f64> {
    let a: Vec<f64> = (0..n * n).map(|_| gaussian(rng)).collect();
    let a = DMatrix::from_row_slice(n, n, &a);
    let mu = rng.gen_range(0.1..1.0);
    let h = a.transpose() * &a + DMatrix::identity(n, n) * mu;
    let h = (&h + h.transpose()) * 0.5;
    let scale = rng.gen_range(0.1..10.0);
    let g: Vec<f64> = (0..n).map(|_| scale * gaussian(rng)).collect();
    let w_rows: Vec<f64> = (0..m * n).map(|_| gaussian(rng)).collect();
    let bounds: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..2.0) }).collect();
    let hess: Vec<f64> = h.transpose().iter().copied().collect();
    QpProblem {
        hessian: Matrix::from_row_major(n, n, hess),
        gradient: g,
        constraints: Matrix::from_row_major(m, n, w_rows),
        bounds,
    }
}

pub struct OracleSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Accelerated projected gradient on the dual of
/// `min ½xᵀHx + gᵀx  s.t.  Wx ≤ w`:
/// `min_{λ≥0} ½λᵀQλ + cᵀλ`, `Q = W H⁻¹ Wᵀ`, `c = w + W H⁻¹ g`,
/// with `x(λ) = −H⁻¹(g + Wᵀλ)`. Projection onto `λ ≥ 0` is exact, so the
/// iteration is a plain projected-gradient method; momentum is restarted
/// whenever the dual objective increases.
pub fn projected_gradient_qp(p: &QpProblem<f64>, tol: f64, max_iter: usize) -> OracleSolution {
    let n = p.gradient.len();
    let h = to_dmatrix(&p.hessian);
    let g = DVector::from_column_slice(&p.gradient);
    let chol = h.clone().cholesky().expect("oracle needs a positive definite Hessian");
    let m = p.bounds.len();
    if m == 0 {
        return OracleSolution { x: -chol.solve(&g), iterations: 0, converged: true };
    }
    let w_mat = DMatrix::from_row_slice(m, n, p.constraints.as_slice());
    let w = DVector::from_column_slice(&p.bounds);
    let hinv_wt = chol.solve(&w_mat.transpose());
    let hinv_g = chol.solve(&g);
    let q = &w_mat * &hinv_wt;
    let c = &w + &w_mat * &hinv_g;
    let lip = q.clone().symmetric_eigenvalues().max().max(1e-300);
    let step = 1.0 / lip;
    let dual = |l: &DVector<f64>| 0.5 * l.dot(&(&q * l)) + c.dot(l);

    let mut lam = DVector::zeros(m);
    let mut y = lam.clone();
    let mut t = 1.0f64;
    let mut f_prev = dual(&lam);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let grad = &q * &y + &c;
        let next = (&y - grad * step).map(|v| v.max(0.0));
        let f_next = dual(&next);
        if f_next > f_prev + 1e-14 * f_prev.abs() {
            // restart momentum
            y = lam.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &lam) * ((t - 1.0) / t_next);
        lam = next;
        t = t_next;
        f_prev = f_next;
        // natural residual: ∇ = w − W x(λ), so this is primal feasibility
        // plus complementarity
        let gl = &q * &lam + &c;
        let res = lam.zip_map(&gl, |l, g| l.min(g).abs()).amax();
        if res < tol {
            converged = true;
            break;
        }
    }
    let x = -(&hinv_g + &hinv_wt * &lam);
    OracleSolution { x, iterations, converged }
}

/// Damped least-squares tracker with the same cost as the controller and no
/// constraints: `q̇ = −(2(αJ_tᵀJ_t + (1−α)J_eᵀJ_e + ΛᵀΛ) + εI)⁻¹ · 2η(αJ_tᵀe_t + (1−α)J_eᵀe_r)`.
#[allow(clippy::too_many_arguments)]
pub fn dls_step(
    jt: &DMatrix<f64>,
    je: &DMatrix<f64>,
    et: &DVector<f64>,
    er: &DVector<f64>,
    damping: &[f64],
    alpha: f64,
    eta: f64,
    reg: f64,
) -> DVector<f64> {
    let n = jt.ncols();
    let lam = DMatrix::from_diagonal(&DVector::from_iterator(n, damping.iter().map(|l| l * l)));
    let h = (jt.transpose() * jt * alpha + je.transpose() * je * (1.0 - alpha) + lam) * 2.0
        + DMatrix::identity(n, n) * reg;
    let rhs = (jt.transpose() * et * alpha + je.transpose() * er * (1.0 - alpha)) * (2.0 * eta);
    -h.lu().solve(&rhs).expect("DLS system is nonsingular")
}
