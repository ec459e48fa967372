//! Closed-loop simulation of one or more instrument arms.
//!
//! Every tick, for each arm: read the target, solve the control QP at the
//! current configuration, integrate `q ← q + q̇ dt` (explicit Euler), clamp to
//! the joint limits, and record telemetry together with the operator-side
//! impedance force. The loop is single threaded and deterministic.

pub mod live;
pub mod operator;
pub mod telemetry;
pub mod trajectory;

pub use live::{command_channel, CommandLog, CommandReceiver, CommandSender, LiveCommand, LoggedCommand, SendRejected};
pub use operator::{impedance_force, scale_target, OperatorMap, OperatorParams};
pub use telemetry::{ArmTelemetry, TelemetryRecord};
pub use trajectory::{normal_basis, ScriptedTrajectory, TrajectorySpec, TRAJECTORY_IDS};

use crate::constraints::{EntrySphere, LIMIT_TOLERANCE};
use crate::controller::{task_errors, ArmController, ControllerParams};
use crate::error::{Error, Result};
use crate::kinematics::{Pose, RobotModel, ShaftLine};
use crate::qp::SolverStatus;
use crate::quaternion::{Quaternion, UnitQuaternion};
use crate::scalar::Real;

/// Static description of one arm.
#[derive(Clone, Debug)]
pub struct ArmSetup<T> {
    pub model: RobotModel<T>,
    pub q0: Vec<T>,
    pub sphere: Option<EntrySphere<T>>,
    /// Operator mapping; defaults to identity anchored at the start tip.
    pub operator_map: Option<OperatorMap<T>>,
}

/// Entry sphere parameters for the reference setup.
pub const REFERENCE_D_SAFE: f64 = 0.005 * 0.005;
pub const REFERENCE_ETA_D: f64 = 1.0;
/// Distance from the flange to the incision along the shaft (m).
pub const REFERENCE_SHAFT_OFFSET: f64 = 0.13;

impl ArmSetup<f64> {
    /// Reference arm at `base_pose` in its home configuration, with an entry
    /// sphere on the shaft when `with_sphere` is set.
    pub fn reference(base_pose: Pose<f64>, with_sphere: bool) -> Result<Self> {
        let mut model = RobotModel::reference_instrument_arm();
        model.base_pose = base_pose;
        let q0 = RobotModel::reference_home();
        let sphere = if with_sphere {
            let chain = model.chain(&q0)?;
            Some(EntrySphere::on_shaft(&chain, REFERENCE_SHAFT_OFFSET, REFERENCE_D_SAFE, REFERENCE_ETA_D)?)
        } else {
            None
        };
        Ok(Self { model, q0, sphere, operator_map: None })
    }

    /// Two reference arms facing each other across a 0.7 m gap.
    pub fn reference_pair(with_sphere: bool) -> Result<Vec<Self>> {
        let second = Pose::new(
            UnitQuaternion::rot_z(std::f64::consts::PI),
            Quaternion::pure(0.7, 0.0, 0.0),
        );
        Ok(vec![Self::reference(Pose::identity(), with_sphere)?, Self::reference(second, with_sphere)?])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig<T> {
    pub dt: T,
    pub controller: ControllerParams<T>,
    pub operator: OperatorParams<T>,
    pub warm_start: bool,
}

impl<T: Real> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(1e-3),
            controller: ControllerParams::default(),
            operator: OperatorParams::default(),
            warm_start: true,
        }
    }
}

/// Where an arm's target comes from.
#[derive(Clone, Debug)]
pub enum TargetSource<T> {
    Scripted(ScriptedTrajectory<T>),
    /// Zero-order hold of the last commanded target (live or replayed).
    Held,
}

/// Dynamic state of one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmState<T> {
    pub q: Vec<T>,
    pub qdot_last: Vec<T>,
    pub pose: Pose<T>,
    pub shaft: ShaftLine<T>,
    pub d_es: Option<T>,
    /// Target in effect (patient side).
    pub target: Pose<T>,
    /// Where the operator device sits for the current target.
    pub operator_position: Quaternion<T>,
    pub grip: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState<T> {
    pub arms: Vec<ArmState<T>>,
    pub tick: u64,
    pub dt: T,
}

impl<T: Real> SimState<T> {
    pub fn time(&self) -> T {
        T::from_u64(self.tick).expect("tick fits the scalar type") * self.dt
    }
}

struct ArmRuntime<T> {
    setup: ArmSetup<T>,
    controller: ArmController<T>,
    source: TargetSource<T>,
    map: OperatorMap<T>,
    start: Pose<T>,
    shaft_direction: Quaternion<T>,
}

pub struct Simulation<T> {
    config: SimConfig<T>,
    arms: Vec<ArmRuntime<T>>,
    state: SimState<T>,
}

impl<T: Real> Simulation<T> {
    /// Validates every arm and starts them holding their initial pose.
    pub fn new(config: SimConfig<T>, setups: Vec<ArmSetup<T>>) -> Result<Self> {
        if !(config.dt > T::zero()) || !config.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", config.dt)));
        }
        config.operator.validate()?;
        let mut arms = Vec::with_capacity(setups.len());
        let mut states = Vec::with_capacity(setups.len());
        for (i, setup) in setups.into_iter().enumerate() {
            setup.model.validate()?;
            if setup.q0.len() != setup.model.dof() {
                return Err(Error::Dimension(format!(
                    "arm {i}: q0 has {} entries for {} joints",
                    setup.q0.len(),
                    setup.model.dof()
                )));
            }
            if !setup.model.within_limits(&setup.q0, T::lit(LIMIT_TOLERANCE)) {
                return Err(Error::InvalidParameter(format!("arm {i}: q0 outside joint limits")));
            }
            if let Some(s) = &setup.sphere {
                s.validate()?;
            }
            let chain = setup.model.chain(&setup.q0)?;
            let start = chain.end_effector();
            let shaft_direction = chain.shaft_line().l;
            let d_es = setup.sphere.as_ref().map(|s| s.sq_distance(&chain));
            let map = setup
                .operator_map
                .unwrap_or_else(|| OperatorMap::anchored_at(start.t, config.operator.motion_scaling));
            let controller = ArmController::new(config.controller)?.with_warm_start(config.warm_start);
            states.push(ArmState {
                q: setup.q0.clone(),
                qdot_last: vec![T::zero(); setup.model.dof()],
                pose: start,
                shaft: chain.shaft_line(),
                d_es,
                target: start,
                operator_position: map.to_operator_point(start.t),
                grip: T::zero(),
            });
            arms.push(ArmRuntime { setup, controller, source: TargetSource::Held, map, start, shaft_direction });
        }
        Ok(Self { config, arms, state: SimState { arms: states, tick: 0, dt: config.dt } })
    }

    pub fn config(&self) -> &SimConfig<T> {
        &self.config
    }

    pub fn state(&self) -> &SimState<T> {
        &self.state
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn tick(&self) -> u64 {
        self.state.tick
    }

    pub fn start_pose(&self, arm: usize) -> Pose<T> {
        self.arms[arm].start
    }

    pub fn shaft_direction(&self, arm: usize) -> Quaternion<T> {
        self.arms[arm].shaft_direction
    }

    pub fn setup(&self, arm: usize) -> &ArmSetup<T> {
        &self.arms[arm].setup
    }

    pub fn operator_map(&self, arm: usize) -> &OperatorMap<T> {
        &self.arms[arm].map
    }

    /// Binds `spec` to every arm.
    pub fn set_trajectory(&mut self, spec: &TrajectorySpec) -> Result<()> {
        for (i, arm) in self.arms.iter_mut().enumerate() {
            arm.source = TargetSource::Scripted(spec.instantiate(i, arm.start, arm.shaft_direction)?);
        }
        Ok(())
    }

    pub fn set_source(&mut self, arm: usize, source: TargetSource<T>) -> Result<()> {
        let slot = self.arms.get_mut(arm).ok_or_else(|| Error::InvalidParameter(format!("no arm {arm}")))?;
        slot.source = source;
        Ok(())
    }

    /// Applies an operator-side command; the arm switches to holding it.
    pub fn apply_command(&mut self, cmd: &LiveCommand<T>) -> Result<()> {
        let n = self.arms.len();
        let arm = self.arms.get_mut(cmd.arm).ok_or_else(|| Error::InvalidParameter(format!("arm {} of {n}", cmd.arm)))?;
        if !cmd.pose.is_finite() || !cmd.grip.is_finite() {
            return Err(Error::NonFinite("command"));
        }
        arm.source = TargetSource::Held;
        let state = &mut self.state.arms[cmd.arm];
        state.target = arm.map.to_patient(&cmd.pose);
        state.grip = cmd.grip;
        Ok(())
    }

    /// Advances one tick.
    pub fn step(&mut self) -> TelemetryRecord<T> {
        let time = self.state.time();
        let dt = self.config.dt;
        let operator = self.config.operator;
        let mut records = Vec::with_capacity(self.arms.len());
        for (i, (arm, state)) in self.arms.iter_mut().zip(self.state.arms.iter_mut()).enumerate() {
            if let TargetSource::Scripted(tr) = &arm.source {
                state.target = tr.target(time);
            }
            let target = state.target;
            let model = &arm.setup.model;
            let n = model.dof();

            let outcome = model
                .chain(&state.q)
                .and_then(|chain| arm.controller.step_with_chain(model, &chain, &state.q, &target, arm.setup.sphere.as_ref()));
            let (qdot, status, w_es, active_rows) = match outcome {
                Ok(out) => {
                    let usable = matches!(out.command.status, SolverStatus::Optimal | SolverStatus::InfeasibleInput)
                        && out.command.qdot.iter().all(|v| v.is_finite());
                    let qdot = if usable { out.command.qdot } else { vec![T::zero(); n] };
                    (qdot, Some(out.command.status), out.w_es, out.active_rows)
                }
                Err(_) => (vec![T::zero(); n], None, None, 0),
            };

            let mut q_next: Vec<T> = state.q.iter().zip(&qdot).map(|(&q, &v)| q + v * dt).collect();
            let unclamped = q_next.clone();
            model.clamp(&mut q_next);
            let clamp_correction = q_next.iter().zip(&unclamped).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max);

            if let Ok(chain) = model.chain(&q_next) {
                let mut pose = chain.end_effector();
                pose.r = pose.r.aligned_with(state.pose.r);
                state.pose = pose;
                state.shaft = chain.shaft_line();
                state.d_es = arm.setup.sphere.as_ref().map(|s| s.sq_distance(&chain));
            }
            state.q = q_next;
            state.qdot_last = qdot.clone();

            let errors = task_errors(&state.pose, &target);
            let os_position = arm.map.to_operator_point(target.t);
            let os_velocity = (os_position - state.operator_position) * (T::one() / dt);
            state.operator_position = os_position;
            // the device sits at the target; its offset from the follower is t_d − t
            let os_error = arm.map.to_operator_vector(-errors.translation);
            let force = impedance_force(os_error, os_velocity, &operator);

            records.push(ArmTelemetry {
                arm: i,
                pose: state.pose,
                target,
                shaft_point: state.shaft.p.imag_array(),
                shaft_direction: state.shaft.l.imag_array(),
                q: state.q.clone(),
                qdot,
                translation_error: errors.translation.imag_array(),
                translation_error_norm: errors.translation.norm(),
                rotation_error_norm: errors.rotation.norm(),
                d_es: state.d_es,
                distance_es: state.d_es.map(|d| d.max(T::zero()).sqrt()),
                w_es,
                active_rows,
                status,
                force: force.imag_array(),
                clamp_correction,
            });
        }
        self.state.tick += 1;
        TelemetryRecord { tick: self.state.tick, time: self.state.time(), arms: records }
    }

    /// Runs `ticks` steps, handing each record to `sink`.
    pub fn run<F: FnMut(&TelemetryRecord<T>)>(&mut self, ticks: u64, mut sink: F) {
        for _ in 0..ticks {
            let rec = self.step();
            sink(&rec);
        }
    }
}
