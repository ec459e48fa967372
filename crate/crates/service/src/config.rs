//! Run configuration: one TOML file describing arms, gains, trajectory and
//! outputs. Every numeric field has a default; an empty file runs the
//! reference two-arm setup holding still.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use teleqp_core::sim::{
    ArmSetup, LoggedCommand, OperatorMap, SimConfig, Simulation, TrajectorySpec, REFERENCE_D_SAFE, REFERENCE_ETA_D,
    REFERENCE_SHAFT_OFFSET,
};
use teleqp_core::sim::OperatorParams;
use teleqp_core::{ControllerParams, EntrySphere, Pose, Quaternion, RobotModel, UnitQuaternion};

use crate::wire::CommandLogLine;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl From<teleqp_core::Error> for ConfigError {
    fn from(e: teleqp_core::Error) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

/// The file as written.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// Seed for `random-smooth` when the trajectory table gives none.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub warm_start: Option<bool>,
    #[serde(default)]
    pub controller: ControllerParams<f64>,
    #[serde(default)]
    pub operator: OperatorParams<f64>,
    #[serde(default)]
    pub trajectory: Option<toml::Table>,
    #[serde(default)]
    pub replay: Option<ReplaySection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub serve: ServeSection,
    #[serde(default, rename = "arm")]
    pub arms: Vec<ArmSection>,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_duration() -> f64 {
    10.0
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    /// Where `serve` records applied commands for later replay.
    pub command_log: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySection {
    pub commands: PathBuf,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeSection {
    pub bind: Option<String>,
    /// Telemetry is broadcast every `decimation` ticks.
    pub decimation: u64,
    /// Pending operator commands before new ones are rejected.
    pub queue_capacity: usize,
    /// Telemetry frames buffered per client; the oldest are dropped first.
    pub telemetry_buffer: usize,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self { bind: None, decimation: 10, queue_capacity: 256, telemetry_buffer: 64 }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSection {
    /// Robot model file; the built-in reference arm when absent.
    pub model: Option<PathBuf>,
    /// Overrides the model's base pose (scalar-first rotation).
    pub base_rotation: Option<[f64; 4]>,
    pub base_translation: Option<[f64; 3]>,
    /// Initial joint values; the model's `home` when absent.
    pub q0: Option<Vec<f64>>,
    pub entry_sphere: Option<SphereSection>,
    /// Rotation from patient-side to operator-side vectors.
    pub operator_rotation: Option<[f64; 4]>,
    /// Operator-side point matching the starting tip position.
    pub operator_anchor: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSection {
    /// Explicit center (m). Exclusive with `shaft_offset`.
    pub center: Option<[f64; 3]>,
    /// Center on the initial shaft line, this far from the shaft frame (m).
    pub shaft_offset: Option<f64>,
    #[serde(default = "default_d_safe")]
    pub d_safe: f64,
    #[serde(default = "default_eta_d")]
    pub eta_d: f64,
}

fn default_d_safe() -> f64 {
    REFERENCE_D_SAFE
}

fn default_eta_d() -> f64 {
    REFERENCE_ETA_D
}

/// A robot model file: the model plus an optional home configuration.
#[derive(Clone, Debug, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub model: RobotModel<f64>,
    pub home: Option<Vec<f64>>,
}

/// A configuration with files resolved and every parameter checked.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub source: PathBuf,
    pub sim: SimConfig<f64>,
    pub arms: Vec<ArmSetup<f64>>,
    pub trajectory: TrajectorySpec,
    pub replay: Option<Vec<LoggedCommand<f64>>>,
    pub duration: f64,
    pub ticks: u64,
    pub seed: u64,
    pub csv: Option<PathBuf>,
    pub command_log: Option<PathBuf>,
    pub serve: ServeSection,
}

impl LoadedConfig {
    /// Reads, resolves and validates `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let raw: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        raw.resolve(path, &base)
    }

    pub fn new_simulation(&self) -> Result<Simulation<f64>> {
        Ok(Simulation::new(self.sim, self.arms.clone())?)
    }

    /// Replaces the trajectory by the named one with default parameters.
    pub fn override_trajectory(&mut self, id: &str) -> Result<()> {
        let mut table = toml::Table::new();
        table.insert("id".into(), toml::Value::String(id.into()));
        self.trajectory = trajectory_from_table(table, self.seed)?;
        self.replay = None;
        Ok(())
    }
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn trajectory_from_table(mut table: toml::Table, seed: u64) -> Result<TrajectorySpec> {
    if table.get("id").and_then(|v| v.as_str()) == Some("random-smooth") && !table.contains_key("seed") {
        let seed = i64::try_from(seed).map_err(|_| ConfigError::Invalid(format!("seed {seed} too large")))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    let spec: TrajectorySpec = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Invalid(format!("trajectory: {}", e.message())))?;
    spec.validate()?;
    Ok(spec)
}

/// Reads a JSON-lines command log as written by `serve`.
pub fn read_command_log(path: &Path, num_arms: usize) -> Result<Vec<LoggedCommand<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |message: String| ConfigError::Parse { path: path.into(), message: format!("line {}: {message}", i + 1) };
            let line: CommandLogLine = serde_json::from_str(l).map_err(|e| bad(e.to_string()))?;
            line.to_logged(num_arms).map_err(|e| bad(e.message))
        })
        .collect()
}

fn unit(v: [f64; 4], what: &str) -> Result<UnitQuaternion<f64>> {
    UnitQuaternion::from_vec4(v).map_err(|e| ConfigError::Invalid(format!("{what}: {e}")))
}

impl RunConfig {
    pub fn resolve(self, source: &Path, base: &Path) -> Result<LoadedConfig> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ConfigError::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(ConfigError::Invalid(format!("duration must be positive, got {}", self.duration)));
        }
        self.controller.validate()?;
        self.operator.validate()?;
        if self.serve.decimation == 0 || self.serve.queue_capacity == 0 || self.serve.telemetry_buffer == 0 {
            return Err(ConfigError::Invalid("serve decimation, queue_capacity and telemetry_buffer must be positive".into()));
        }
        let mut sim = SimConfig { dt: self.dt, controller: self.controller, operator: self.operator, ..SimConfig::default() };
        if let Some(w) = self.warm_start {
            sim.warm_start = w;
        }

        let arms = if self.arms.is_empty() {
            ArmSetup::reference_pair(true)?
        } else {
            self.arms.iter().enumerate().map(|(i, a)| a.resolve(i, base, &self.operator)).collect::<Result<_>>()?
        };
        // full validation of models, limits and spheres
        Simulation::new(sim, arms.clone())?;

        let trajectory = match self.trajectory {
            Some(t) => trajectory_from_table(t, self.seed)?,
            None => TrajectorySpec::Hold,
        };
        let replay = match &self.replay {
            Some(r) => Some(read_command_log(&resolve_path(base, &r.commands), arms.len())?),
            None => None,
        };
        let ticks = (self.duration / self.dt).round() as u64;
        Ok(LoadedConfig {
            source: source.to_path_buf(),
            sim,
            arms,
            trajectory,
            replay,
            duration: self.duration,
            ticks,
            seed: self.seed,
            csv: self.output.csv.map(|p| resolve_path(base, &p)),
            command_log: self.output.command_log.map(|p| resolve_path(base, &p)),
            serve: self.serve,
        })
    }
}

impl ArmSection {
    fn resolve(&self, index: usize, base: &Path, operator: &OperatorParams<f64>) -> Result<ArmSetup<f64>> {
        let (mut model, home) = match &self.model {
            Some(p) => {
                let path = resolve_path(base, p);
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                let file: ModelFile =
                    toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.clone(), message: e.to_string() })?;
                (file.model, file.home)
            }
            None => (RobotModel::reference_instrument_arm(), Some(RobotModel::reference_home())),
        };
        model.validate().map_err(|e| ConfigError::Invalid(format!("arm {}: {e}", index + 1)))?;
        if self.base_rotation.is_some() || self.base_translation.is_some() {
            let r = match self.base_rotation {
                Some(v) => unit(v, "base_rotation")?,
                None => model.base_pose.r,
            };
            let t = self.base_translation.map(Quaternion::from_vec3).unwrap_or(model.base_pose.t);
            model.base_pose = Pose::new(r, t);
        }
        let q0 = match (&self.q0, home) {
            (Some(q), _) => q.clone(),
            (None, Some(h)) => h,
            (None, None) => model.q_min.iter().zip(&model.q_max).map(|(a, b)| 0.5 * (a + b)).collect(),
        };
        let chain = model.chain(&q0).map_err(|e| ConfigError::Invalid(format!("arm {}: {e}", index + 1)))?;
        let sphere = match &self.entry_sphere {
            None => None,
            Some(s) => Some(match (s.center, s.shaft_offset) {
                (Some(c), None) => EntrySphere::new(c, s.d_safe, s.eta_d)?,
                (None, Some(off)) => EntrySphere::on_shaft(&chain, off, s.d_safe, s.eta_d)?,
                (None, None) => EntrySphere::on_shaft(&chain, REFERENCE_SHAFT_OFFSET, s.d_safe, s.eta_d)?,
                (Some(_), Some(_)) => {
                    return Err(ConfigError::Invalid(format!("arm {}: give either center or shaft_offset", index + 1)))
                }
            }),
        };
        let operator_map = if self.operator_rotation.is_some() || self.operator_anchor.is_some() {
            let start = chain.end_effector().t;
            let mut map = OperatorMap::anchored_at(start, operator.motion_scaling);
            if let Some(r) = self.operator_rotation {
                map.os_from_ps = unit(r, "operator_rotation")?;
            }
            if let Some(a) = self.operator_anchor {
                map.anchor_os = Quaternion::from_vec3(a);
            }
            Some(map)
        } else {
            None
        };
        Ok(ArmSetup { model, q0, sphere, operator_map })
    }
}
