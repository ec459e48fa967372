mod common;

use nalgebra::Vector3;
use rand::Rng;
use teleqp_core::{
    fk_pose, line_point_distance_jacobian, line_point_sq_distance, rotation_jacobian, shaft_line, translation_jacobian,
    DhConvention, DhJoint, Matrix, Pose, Quaternion, RobotModel, ShaftLine, UnitQuaternion,
};

const H: f64 = 1e-6;

fn reference() -> RobotModel<f64> {
    RobotModel::reference_instrument_arm()
}

/// Reference arm with a rotated, offset base and one prismatic joint, to
/// exercise every code path.
fn variant(convention: DhConvention) -> RobotModel<f64> {
    let mut m = reference();
    m.convention = convention;
    m.base_pose = Pose::new(UnitQuaternion::from_axis_angle([0.3, -0.2, 1.0], 0.9).unwrap(), Quaternion::pure(0.1, -0.3, 0.05));
    m.joints[7] = DhJoint::prismatic(0.008, 0.4, 0.01, 0.3);
    m.q_min[7] = -0.05;
    m.q_max[7] = 0.05;
    m
}

fn models() -> Vec<RobotModel<f64>> {
    vec![reference(), variant(DhConvention::Standard), variant(DhConvention::Modified)]
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

fn column(m: &Matrix<f64>, k: usize) -> Vec<f64> {
    m.column(k)
}

fn shifted(q: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut v = q.to_vec();
    v[k] += h;
    v
}

#[test]
fn fk_matches_homogeneous_matrix_chain() {
    let mut rng = common::rng(1);
    for model in models() {
        for _ in 0..200 {
            let q = common::random_q(&model, &mut rng);
            let pose = fk_pose(&model, &q).unwrap();
            let m = common::fk_matrix(&model, &q);
            let t = common::translation_of(&m);
            assert!((Vector3::from(pose.t.imag_array()) - t).norm() < 1e-12);
            let r = common::quat_matrix(pose.r.vec4());
            assert!((r - m.fixed_view::<3, 3>(0, 0)).amax() < 1e-12);
            // every intermediate frame, too
            let chain = model.chain(&q).unwrap();
            for (f, mf) in chain.frames().iter().zip(common::fk_frames(&model, &q)) {
                assert!((Vector3::from(f.t.imag_array()) - common::translation_of(&mf)).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn fk_simple_chains() {
    let zero = RobotModel {
        name: "zeros".into(),
        convention: DhConvention::Standard,
        joints: vec![DhJoint::revolute(0.0, 0.0, 0.0, 0.0); 3],
        q_min: vec![-1.0; 3],
        q_max: vec![1.0; 3],
        base_pose: Pose::identity(),
        shaft_frame: 0,
        shaft_length: 0.2,
        arm_joints: 3,
    };
    let pose = fk_pose(&zero, &[0.0; 3]).unwrap();
    assert_eq!(pose.t, Quaternion::zero());
    assert_eq!(pose.r.vec4(), [1.0, 0.0, 0.0, 0.0]);
    let line = shaft_line(&zero, &[0.0; 3]).unwrap();
    assert_eq!(line.p, Quaternion::zero());
    assert_eq!(line.l, Quaternion::k());

    let mut link = zero.clone();
    link.joints = vec![DhJoint::revolute(0.3, 0.0, 0.0, 0.0)];
    link.q_min = vec![-3.0];
    link.q_max = vec![3.0];
    link.arm_joints = 1;
    let pose = fk_pose(&link, &[std::f64::consts::FRAC_PI_2]).unwrap();
    assert!((pose.t - Quaternion::pure(0.0, 0.3, 0.0)).norm() < 1e-15);
    let jt = translation_jacobian(&link, &[0.0]).unwrap();
    assert!(rel_err(&jt.column(0), &[0.0, 0.3, 0.0]) < 1e-15);
    let jr = rotation_jacobian(&link, &[0.0]).unwrap();
    assert_eq!(jr.column(0), vec![0.0, 0.0, 0.0, 0.5]);

    let mut locked = reference();
    let q = RobotModel::reference_home();
    let before = translation_jacobian(&locked, &q).unwrap();
    locked.q_min[2] = q[2] - 1e-9;
    locked.q_max[2] = q[2] + 1e-9;
    assert_eq!(translation_jacobian(&locked, &q).unwrap(), before);
}

#[test]
fn translation_jacobian_finite_differences() {
    let mut rng = common::rng(2);
    for model in models() {
        for _ in 0..100 {
            let q = common::random_q(&model, &mut rng);
            let j = translation_jacobian(&model, &q).unwrap();
            for k in 0..model.dof() {
                let tp = fk_pose(&model, &shifted(&q, k, H)).unwrap().t;
                let tm = fk_pose(&model, &shifted(&q, k, -H)).unwrap().t;
                let fd = ((tp - tm) * (0.5 / H)).imag_array();
                assert!(rel_err(&column(&j, k), &fd) < 1e-5 || (column(&j, k).iter().all(|v| v.abs() < 1e-12) && fd.iter().all(|v| v.abs() < 1e-9)));
            }
        }
    }
}

#[test]
fn rotation_jacobian_finite_differences() {
    let mut rng = common::rng(3);
    for model in models() {
        for _ in 0..100 {
            let q = common::random_q(&model, &mut rng);
            let r0 = fk_pose(&model, &q).unwrap().r;
            let j = rotation_jacobian(&model, &q).unwrap();
            for k in 0..model.dof() {
                let rp = fk_pose(&model, &shifted(&q, k, H)).unwrap().r.aligned_with(r0);
                let rm = fk_pose(&model, &shifted(&q, k, -H)).unwrap().r.aligned_with(r0);
                let fd = ((rp.quaternion() - rm.quaternion()) * (0.5 / H)).vec4();
                let col = column(&j, k);
                let zero = col.iter().all(|v| *v == 0.0) && fd.iter().all(|v| v.abs() < 1e-9);
                assert!(zero || rel_err(&col, &fd) < 1e-5, "joint {k}: {col:?} vs {fd:?}");
            }
        }
    }
}

#[test]
fn distance_jacobian_finite_differences() {
    let mut rng = common::rng(4);
    for model in models() {
        for _ in 0..100 {
            let q = common::random_q(&model, &mut rng);
            let line = shaft_line(&model, &q).unwrap();
            let c = line.point_at(rng.gen_range(0.0..0.2))
                + Quaternion::pure(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02));
            let j = line_point_distance_jacobian(&model, &q, c).unwrap();
            let d = |q: &[f64]| line_point_sq_distance(&shaft_line(&model, q).unwrap(), c);
            let fd: Vec<f64> = (0..model.dof()).map(|k| (d(&shifted(&q, k, H)) - d(&shifted(&q, k, -H))) / (2.0 * H)).collect();
            assert!(rel_err(j.row(0), &fd) < 1e-5, "{:?} vs {fd:?}", j.row(0));
        }
    }
}

#[test]
fn translation_is_second_order_consistent() {
    let mut rng = common::rng(5);
    let model = variant(DhConvention::Standard);
    for _ in 0..50 {
        let q = common::random_q(&model, &mut rng);
        let mut v: Vec<f64> = (0..9).map(|_| common::gaussian(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        let t0 = fk_pose(&model, &q).unwrap().t;
        let jv = translation_jacobian(&model, &q).unwrap().mul_vec(&v);
        let residual = |h: f64| {
            let q1: Vec<f64> = q.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let dt = (fk_pose(&model, &q1).unwrap().t - t0).imag_array();
            (0..3).map(|i| (dt[i] - h * jv[i]).powi(2)).sum::<f64>().sqrt()
        };
        let (r4, r5) = (residual(1e-4), residual(1e-5));
        // O(h²): a tenfold smaller step shrinks the residual about a hundredfold
        assert!(r5 < r4 / 50.0, "{r4} {r5}");
        assert!(r4 < 1e-6);
    }
}

#[test]
fn rotation_jacobian_is_tangent_to_unit_sphere() {
    let mut rng = common::rng(6);
    for model in models() {
        for _ in 0..200 {
            let q = common::random_q(&model, &mut rng);
            let r = fk_pose(&model, &q).unwrap().r.vec4();
            let qdot: Vec<f64> = (0..9).map(|_| common::gaussian(&mut rng)).collect();
            let rdot = rotation_jacobian(&model, &q).unwrap().mul_vec(&qdot);
            let d = 2.0 * r.iter().zip(&rdot).map(|(a, b)| a * b).sum::<f64>();
            assert!(d.abs() < 1e-10);
        }
    }
}

#[test]
fn shaft_axis_matches_rotation_matrix_column() {
    let mut rng = common::rng(7);
    for model in models() {
        for _ in 0..100 {
            let q = common::random_q(&model, &mut rng);
            let line = shaft_line(&model, &q).unwrap();
            let frame = common::fk_frames(&model, &q)[model.shaft_frame];
            let z = Vector3::new(frame[(0, 2)], frame[(1, 2)], frame[(2, 2)]);
            assert!((Vector3::from(line.l.imag_array()) - z).norm() < 1e-12);
            assert!((line.l.norm() - 1.0).abs() < 1e-9);
            assert!((Vector3::from(line.p.imag_array()) - common::translation_of(&frame)).norm() < 1e-12);
        }
    }
}

#[test]
fn rotated_base_tilts_identity_shaft() {
    let mut m = RobotModel {
        name: "empty".into(),
        convention: DhConvention::Standard,
        joints: vec![DhJoint::revolute(0.0, 0.0, 0.0, 0.0)],
        q_min: vec![-1.0],
        q_max: vec![1.0],
        base_pose: Pose::identity(),
        shaft_frame: 0,
        shaft_length: 0.2,
        arm_joints: 1,
    };
    m.base_pose = Pose::new(UnitQuaternion::rot_x(-std::f64::consts::FRAC_PI_2), Quaternion::zero());
    assert!((shaft_line(&m, &[0.0]).unwrap().l - Quaternion::j()).norm() < 1e-15);
}

#[test]
fn sq_distance_matches_line_sweep() {
    let mut rng = common::rng(8);
    for _ in 0..200 {
        let p = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let l = Vector3::new(common::gaussian(&mut rng), common::gaussian(&mut rng), common::gaussian(&mut rng)).normalize();
        let c = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let line = ShaftLine::new(Quaternion::pure(p.x, p.y, p.z), Quaternion::pure(l.x, l.y, l.z)).unwrap();
        let d = line_point_sq_distance(&line, Quaternion::pure(c.x, c.y, c.z));
        let oracle = common::sweep_sq_distance(p, l, c, 2.0);
        assert!((d - oracle).abs() < 1e-8, "{d} vs {oracle}");
        assert!(d >= 0.0);
    }
}

#[test]
fn sq_distance_is_reparametrization_invariant() {
    let mut rng = common::rng(9);
    for _ in 0..200 {
        let p = Quaternion::pure(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let l = Quaternion::pure(common::gaussian(&mut rng), common::gaussian(&mut rng), common::gaussian(&mut rng));
        let l = l * (1.0 / l.norm());
        let c = Quaternion::pure(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let s = rng.gen_range(-3.0..3.0);
        let a = line_point_sq_distance(&ShaftLine::new(p, l).unwrap(), c);
        let b = line_point_sq_distance(&ShaftLine::new(p + l * s, l).unwrap(), c);
        assert!((a - b).abs() < 1e-12);
        assert!(line_point_sq_distance(&ShaftLine::new(p, l).unwrap(), p + l * s) < 1e-24);
    }
}

#[test]
fn distance_row_for_translating_line_through_center() {
    // single prismatic joint along z carrying a line along x; the center sits
    // on the line, so D = 0 and the row is 2(p − c)ᵀ ∂p/∂q = 0 at the center
    let m = RobotModel {
        name: "slider".into(),
        convention: DhConvention::Standard,
        joints: vec![DhJoint::prismatic(0.0, std::f64::consts::FRAC_PI_2, 0.0, std::f64::consts::FRAC_PI_2)],
        q_min: vec![-1.0],
        q_max: vec![1.0],
        base_pose: Pose::identity(),
        shaft_frame: 1,
        shaft_length: 0.2,
        arm_joints: 1,
    };
    m.validate().unwrap();
    let q = [0.1];
    let line = shaft_line(&m, &q).unwrap();
    let on_line = line.point_at(0.05);
    let j = line_point_distance_jacobian(&m, &q, on_line).unwrap();
    assert!(j.row(0)[0].abs() < 1e-15);
    // moving the center off the line along the sliding direction: D = (δ)², Ḋ = −2δ
    let dir = m.chain(&q).unwrap().axes()[0].z;
    let delta = 0.02;
    let j = line_point_distance_jacobian(&m, &q, on_line + dir * delta).unwrap();
    assert!((j.row(0)[0] + 2.0 * delta).abs() < 1e-12);
}
