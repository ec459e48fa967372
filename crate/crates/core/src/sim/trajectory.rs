//! Scripted target trajectories standing in for a human operator.
//!
//! All trajectories are pure functions of time, defined relative to the
//! arm's starting instrument pose and shaft direction.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Pose;
use crate::quaternion::{rotate_point, Quaternion, UnitQuaternion};
use crate::scalar::Real;

/// Identifiers accepted by [`TrajectorySpec::from_id`].
pub const TRAJECTORY_IDS: [&str; 6] = ["hold", "step", "circle-about-entry", "pivot-sweep", "suture-arc", "random-smooth"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Constant start pose.
    Hold,
    /// Translation jump by `offset` (m, world frame) at time `at`.
    Step {
        #[serde(default = "default_step_offset")]
        offset: [f64; 3],
        #[serde(default)]
        at: f64,
    },
    /// Circle around the starting tip in the plane normal to the shaft.
    CircleAboutEntry {
        #[serde(default = "default_circle_radius")]
        radius: f64,
        #[serde(default = "default_circle_frequency")]
        frequency: f64,
    },
    /// Sideways sweep normal to the shaft with the orientation held fixed.
    /// Following it exactly would drag the shaft laterally through the
    /// incision.
    PivotSweep {
        #[serde(default = "default_sweep_amplitude")]
        amplitude: f64,
        #[serde(default = "default_sweep_frequency")]
        frequency: f64,
    },
    /// Needle-driving arc: tip and orientation rotate together about an axis
    /// normal to the shaft, back and forth.
    SutureArc {
        #[serde(default = "default_arc_radius")]
        radius: f64,
        #[serde(default = "default_arc_period")]
        period: f64,
        #[serde(default = "default_arc_sweep")]
        sweep: f64,
    },
    /// Seeded sum of sinusoids in translation and rotation, starting at the
    /// start pose with bounded amplitude.
    RandomSmooth {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_random_amplitude")]
        amplitude: f64,
        #[serde(default = "default_random_rotation")]
        max_rotation: f64,
        #[serde(default = "default_random_components")]
        components: usize,
        #[serde(default = "default_random_frequency")]
        max_frequency: f64,
    },
}

fn default_step_offset() -> [f64; 3] {
    [0.005, 0.0, 0.0]
}
fn default_circle_radius() -> f64 {
    0.003
}
fn default_circle_frequency() -> f64 {
    0.2
}
fn default_sweep_amplitude() -> f64 {
    0.015
}
fn default_sweep_frequency() -> f64 {
    0.25
}
fn default_arc_radius() -> f64 {
    0.004
}
fn default_arc_period() -> f64 {
    4.0
}
fn default_arc_sweep() -> f64 {
    PI / 2.0
}
fn default_random_amplitude() -> f64 {
    0.008
}
fn default_random_rotation() -> f64 {
    0.3
}
fn default_random_components() -> usize {
    3
}
fn default_random_frequency() -> f64 {
    0.5
}

impl TrajectorySpec {
    /// Spec with default parameters for a named trajectory.
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(match id {
            "hold" => Self::Hold,
            "step" => Self::Step { offset: default_step_offset(), at: 0.0 },
            "circle-about-entry" => {
                Self::CircleAboutEntry { radius: default_circle_radius(), frequency: default_circle_frequency() }
            }
            "pivot-sweep" => {
                Self::PivotSweep { amplitude: default_sweep_amplitude(), frequency: default_sweep_frequency() }
            }
            "suture-arc" => {
                Self::SutureArc { radius: default_arc_radius(), period: default_arc_period(), sweep: default_arc_sweep() }
            }
            "random-smooth" => Self::random(0),
            other => return Err(Error::UnknownTrajectory(other.to_string())),
        })
    }

    pub fn random(seed: u64) -> Self {
        Self::RandomSmooth {
            seed,
            amplitude: default_random_amplitude(),
            max_rotation: default_random_rotation(),
            components: default_random_components(),
            max_frequency: default_random_frequency(),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Hold => "hold",
            Self::Step { .. } => "step",
            Self::CircleAboutEntry { .. } => "circle-about-entry",
            Self::PivotSweep { .. } => "pivot-sweep",
            Self::SutureArc { .. } => "suture-arc",
            Self::RandomSmooth { .. } => "random-smooth",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("trajectory {name} must be positive, got {v}")))
            }
        };
        match *self {
            Self::Hold => Ok(()),
            Self::Step { offset, at } => {
                if offset.iter().all(|v| v.is_finite()) && at.is_finite() {
                    Ok(())
                } else {
                    Err(Error::NonFinite("step trajectory"))
                }
            }
            Self::CircleAboutEntry { radius, frequency } => positive("radius", radius).and(positive("frequency", frequency)),
            Self::PivotSweep { amplitude, frequency } => {
                positive("amplitude", amplitude).and(positive("frequency", frequency))
            }
            Self::SutureArc { radius, period, sweep } => {
                positive("radius", radius).and(positive("period", period)).and(positive("sweep", sweep))
            }
            Self::RandomSmooth { amplitude, max_rotation, components, max_frequency, .. } => {
                positive("amplitude", amplitude)
                    .and(positive("max_frequency", max_frequency))
                    .and(if max_rotation >= 0.0 { Ok(()) } else { positive("max_rotation", max_rotation) })
                    .and(if components > 0 { Ok(()) } else { positive("components", 0.0) })
            }
        }
    }

    /// Binds the spec to one arm.
    pub fn instantiate<T: Real>(&self, arm: usize, start: Pose<T>, shaft_direction: Quaternion<T>) -> Result<ScriptedTrajectory<T>> {
        self.validate()?;
        let (e1, e2) = normal_basis(shaft_direction)?;
        let lit = T::lit;
        let motion = match *self {
            Self::Hold => Motion::Hold,
            Self::Step { offset, at } => Motion::Step { offset: Quaternion::pure(lit(offset[0]), lit(offset[1]), lit(offset[2])), at: lit(at) },
            Self::CircleAboutEntry { radius, frequency } => Motion::Circle { radius: lit(radius), omega: lit(2.0 * PI * frequency) },
            Self::PivotSweep { amplitude, frequency } => Motion::Sweep { amplitude: lit(amplitude), omega: lit(2.0 * PI * frequency) },
            Self::SutureArc { radius, period, sweep } => Motion::Arc {
                center: start.t + e1 * lit(radius),
                omega: lit(2.0 * PI / period),
                sweep: lit(sweep),
            },
            Self::RandomSmooth { seed, amplitude, max_rotation, components, max_frequency } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ arm as u64);
                let mut draw = |scale: f64| -> Vec<Sinusoid<T>> {
                    (0..components)
                        .map(|_| {
                            let dir = random_unit(&mut rng);
                            let share = rng.gen_range(0.5..1.0) * scale / components as f64;
                            Sinusoid {
                                direction: [lit(dir[0] * share), lit(dir[1] * share), lit(dir[2] * share)],
                                omega: lit(2.0 * PI * rng.gen_range(0.05..max_frequency.max(0.06))),
                                phase: lit(rng.gen_range(0.0..2.0 * PI)),
                            }
                        })
                        .collect()
                };
                let translation = draw(amplitude);
                let rotation = draw(max_rotation);
                Motion::Random { translation, rotation }
            }
        };
        Ok(ScriptedTrajectory { start, e1, e2, motion })
    }
}

/// Two unit vectors spanning the plane normal to `l`.
pub fn normal_basis<T: Real>(l: Quaternion<T>) -> Result<(Quaternion<T>, Quaternion<T>)> {
    let l = l.imag();
    let n = l.norm();
    if !(n > T::zero()) {
        return Err(Error::InvalidParameter("zero shaft direction".into()));
    }
    let l = l * (T::one() / n);
    let helper = if l.y.abs() < T::lit(0.9) { Quaternion::j() } else { Quaternion::i() };
    let e1 = l.cross(helper);
    let e1 = e1 * (T::one() / e1.norm());
    let e2 = l.cross(e1);
    Ok((e1, e2))
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Sinusoid<T> {
    direction: [T; 3],
    omega: T,
    phase: T,
}

impl<T: Real> Sinusoid<T> {
    /// Zero at `t = 0`.
    fn eval(&self, t: T) -> [T; 3] {
        let s = (self.omega * t + self.phase).sin() - self.phase.sin();
        [self.direction[0] * s, self.direction[1] * s, self.direction[2] * s]
    }
}

fn sum_sinusoids<T: Real>(terms: &[Sinusoid<T>], t: T) -> [T; 3] {
    terms.iter().fold([T::zero(); 3], |acc, s| {
        let v = s.eval(t);
        [acc[0] + v[0], acc[1] + v[1], acc[2] + v[2]]
    })
}

#[derive(Clone, Debug, PartialEq)]
enum Motion<T> {
    Hold,
    Step { offset: Quaternion<T>, at: T },
    Circle { radius: T, omega: T },
    Sweep { amplitude: T, omega: T },
    Arc { center: Quaternion<T>, omega: T, sweep: T },
    Random { translation: Vec<Sinusoid<T>>, rotation: Vec<Sinusoid<T>> },
}

/// A trajectory bound to one arm's start pose.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedTrajectory<T> {
    start: Pose<T>,
    e1: Quaternion<T>,
    e2: Quaternion<T>,
    motion: Motion<T>,
}

impl<T: Real> ScriptedTrajectory<T> {
    pub fn start(&self) -> Pose<T> {
        self.start
    }

    pub fn target(&self, time: T) -> Pose<T> {
        let s = self.start;
        match &self.motion {
            Motion::Hold => s,
            Motion::Step { offset, at } => {
                if time >= *at {
                    Pose::new(s.r, s.t + *offset)
                } else {
                    s
                }
            }
            Motion::Circle { radius, omega } => {
                let (sn, cs) = (*omega * time).sin_cos();
                Pose::new(s.r, s.t + (self.e1 * cs + self.e2 * sn) * *radius)
            }
            Motion::Sweep { amplitude, omega } => Pose::new(s.r, s.t + self.e1 * (*amplitude * (*omega * time).sin())),
            Motion::Arc { center, omega, sweep } => {
                let angle = *sweep * T::half() * (T::one() - (*omega * time).cos());
                let rot = UnitQuaternion::from_rotation_vector((self.e2 * angle).imag_array());
                let t = *center + rotate_point(rot, s.t - *center);
                Pose::new(rot.compose(s.r), t)
            }
            Motion::Random { translation, rotation } => {
                let dt = sum_sinusoids(translation, time);
                let dr = UnitQuaternion::from_rotation_vector(sum_sinusoids(rotation, time));
                Pose::new(dr.compose(s.r), s.t + Quaternion::from_vec3(dt))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> Pose<f64> {
        Pose::new(UnitQuaternion::from_axis_angle([0.2, 1.0, 0.0], 2.8).unwrap(), Quaternion::pure(0.3, 0.01, 0.25))
    }

    fn shaft() -> Quaternion<f64> {
        let l = Quaternion::pure(-0.25, 0.0, -0.97);
        l * (1.0 / l.norm())
    }

    #[test]
    fn hold_is_constant() {
        let tr = TrajectorySpec::Hold.instantiate(0, start(), shaft()).unwrap();
        for k in 0..50 {
            assert_eq!(tr.target(k as f64 * 0.37), start());
        }
    }

    #[test]
    fn circle_keeps_radius() {
        let tr = TrajectorySpec::from_id("circle-about-entry").unwrap().instantiate(1, start(), shaft()).unwrap();
        for k in 0..500 {
            let p = tr.target(k as f64 * 0.013);
            assert!(((p.t - start().t).norm() - 0.003).abs() < 1e-15);
            assert!((p.t - start().t).dot(shaft()).abs() < 1e-15);
        }
    }

    #[test]
    fn step_switches_at_time() {
        let spec = TrajectorySpec::Step { offset: [0.0, 0.0, 0.005], at: 0.5 };
        let tr = spec.instantiate(0, start(), shaft()).unwrap();
        assert_eq!(tr.target(0.49), start());
        assert!((tr.target(0.5).t - start().t - Quaternion::pure(0.0, 0.0, 0.005)).norm() < 1e-16);
    }

    #[test]
    fn random_starts_at_start_and_is_seeded() {
        let a = TrajectorySpec::random(7).instantiate(0, start(), shaft()).unwrap();
        let b = TrajectorySpec::random(7).instantiate(0, start(), shaft()).unwrap();
        let c = TrajectorySpec::random(8).instantiate(0, start(), shaft()).unwrap();
        let d = TrajectorySpec::random(7).instantiate(1, start(), shaft()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        let p0 = a.target(0.0);
        assert!((p0.t - start().t).norm() < 1e-15);
        assert!((p0.r.quaternion() - start().r.quaternion()).norm() < 1e-15);
        for k in 0..1000 {
            let p = a.target(k as f64 * 0.01);
            assert!((p.t - start().t).norm() <= 2.0 * 0.008);
        }
    }

    #[test]
    fn suture_arc_keeps_distance_to_center() {
        let tr = TrajectorySpec::from_id("suture-arc").unwrap().instantiate(0, start(), shaft()).unwrap();
        let (e1, _) = normal_basis(shaft()).unwrap();
        let center = start().t + e1 * 0.004;
        for k in 0..400 {
            let p = tr.target(k as f64 * 0.01);
            assert!(((p.t - center).norm() - 0.004).abs() < 1e-15);
        }
    }

    #[test]
    fn unknown_id_is_an_error() {
        assert!(matches!(TrajectorySpec::from_id("figure-eight"), Err(Error::UnknownTrajectory(_))));
        for id in TRAJECTORY_IDS {
            assert_eq!(TrajectorySpec::from_id(id).unwrap().id(), id);
        }
    }

    #[test]
    fn invalid_parameters() {
        let spec = TrajectorySpec::CircleAboutEntry { radius: -1.0, frequency: 0.2 };
        assert!(spec.instantiate(0, start(), shaft()).is_err());
    }
}
