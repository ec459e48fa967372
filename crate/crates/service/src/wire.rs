//! Frames exchanged with live clients: one JSON object per line, tagged by
//! `type`. Arm ids are 1-based on the wire.

use serde::{Deserialize, Serialize};
use teleqp_core::sim::{LiveCommand, LoggedCommand, TelemetryRecord};
use teleqp_core::{Pose, Quaternion, UnitQuaternion};

/// Accepted deviation of a command rotation from unit norm.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Command(CommandMessage),
    /// Exclusive write access to an arm.
    Claim { arm: usize },
    Release { arm: usize },
}

/// Operator-side target for one arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandMessage {
    pub arm: usize,
    /// Meters.
    pub translation: [f64; 3],
    /// Scalar-first.
    pub rotation: [f64; 4],
    #[serde(default)]
    pub grip: f64,
    /// Client clock in milliseconds; informational.
    #[serde(default)]
    pub timestamp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    /// Sent once on connect.
    Config(SessionInfo),
    Telemetry(TelemetryRecord<f64>),
    Claimed { arm: usize },
    Released { arm: usize },
    Error { code: ErrorCode, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub dt: f64,
    pub decimation: u64,
    pub arms: Vec<ArmInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmInfo {
    pub arm: usize,
    pub dof: usize,
    /// Where the device sits when the arm is at its start pose.
    pub operator_start: Pose<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub d_safe: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    InvalidCommand,
    UnknownArm,
    ArmClaimed,
    NotClaimed,
    QueueFull,
    ShuttingDown,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct FrameError {
    pub code: ErrorCode,
    pub message: String,
}

impl FrameError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn frame(&self) -> ServerFrame {
        ServerFrame::Error { code: self.code, message: self.message.clone() }
    }
}

impl ServerFrame {
    /// Newline-terminated JSON.
    pub fn encode(&self) -> String {
        let mut s = serde_json::to_string(self).expect("frames always serialize");
        s.push('\n');
        s
    }

    /// Telemetry frame with 1-based arm ids.
    pub fn telemetry(record: &TelemetryRecord<f64>) -> Self {
        let mut rec = record.clone();
        for a in &mut rec.arms {
            a.arm += 1;
        }
        ServerFrame::Telemetry(rec)
    }
}

/// Splits a text message into frames; blank lines are skipped.
pub fn parse_client_message(text: &str) -> Vec<Result<ClientFrame, FrameError>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| FrameError::new(ErrorCode::Malformed, e.to_string())))
        .collect()
}

/// 1-based wire id to 0-based index.
pub fn arm_index(arm: usize, num_arms: usize) -> Result<usize, FrameError> {
    if arm == 0 || arm > num_arms {
        return Err(FrameError::new(ErrorCode::UnknownArm, format!("arm {arm} not in 1..={num_arms}")));
    }
    Ok(arm - 1)
}

impl CommandMessage {
    /// Checks finiteness, unit rotation and grip range, then renormalizes.
    pub fn to_live(&self, num_arms: usize) -> Result<LiveCommand<f64>, FrameError> {
        let arm = arm_index(self.arm, num_arms)?;
        let invalid = |m: String| FrameError::new(ErrorCode::InvalidCommand, m);
        if !self.translation.iter().chain(&self.rotation).all(|v| v.is_finite()) || !self.grip.is_finite() {
            return Err(invalid("non-finite value".into()));
        }
        let q = Quaternion::from_vec4(self.rotation);
        let n = q.norm();
        if (n - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(invalid(format!("rotation norm {n} is not 1")));
        }
        if !(0.0..=1.0).contains(&self.grip) {
            return Err(invalid(format!("grip {} outside [0, 1]", self.grip)));
        }
        // exact when already unit to rounding, so logged commands replay bit for bit
        let r = UnitQuaternion::from_quaternion(q)
            .or_else(|_| UnitQuaternion::normalize(q))
            .map_err(|e| invalid(e.to_string()))?;
        Ok(LiveCommand { arm, pose: Pose::new(r, Quaternion::from_vec3(self.translation)), grip: self.grip })
    }

    pub fn from_live(cmd: &LiveCommand<f64>) -> Self {
        Self {
            arm: cmd.arm + 1,
            translation: cmd.pose.t.imag_array(),
            rotation: cmd.pose.r.vec4(),
            grip: cmd.grip,
            timestamp: None,
        }
    }
}

/// One line of a command log: a command as applied before tick `tick + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandLogLine {
    pub tick: u64,
    pub arm: usize,
    pub translation: [f64; 3],
    pub rotation: [f64; 4],
    pub grip: f64,
}

impl CommandLogLine {
    pub fn new(logged: &LoggedCommand<f64>) -> Self {
        let m = CommandMessage::from_live(&logged.command);
        Self { tick: logged.tick, arm: m.arm, translation: m.translation, rotation: m.rotation, grip: m.grip }
    }

    pub fn to_logged(&self, num_arms: usize) -> Result<LoggedCommand<f64>, FrameError> {
        let msg = CommandMessage {
            arm: self.arm,
            translation: self.translation,
            rotation: self.rotation,
            grip: self.grip,
            timestamp: None,
        };
        Ok(LoggedCommand { tick: self.tick, command: msg.to_live(num_arms)? })
    }
}
