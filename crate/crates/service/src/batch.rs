//! Offline runs: scripted or replayed targets, CSV output and invariant
//! checks.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::{Duration, Instant};

use teleqp_core::constraints::LIMIT_TOLERANCE;
use teleqp_core::sim::{CommandLog, Simulation, TelemetryRecord};
use teleqp_core::SolverStatus;

use crate::config::LoadedConfig;
use crate::csv_log::CsvSink;

/// Allowed ratio of shaft distance to sphere radius.
pub const SPHERE_MARGIN: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ViolationKind {
    /// Solver status other than optimal, or `None` for a controller error.
    Solver(Option<SolverStatus>),
    /// `√D_ES` beyond [`SPHERE_MARGIN`] times the radius.
    EntrySphere { distance: f64, radius: f64 },
    JointLimit,
    Clamped(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub tick: u64,
    /// 0-based.
    pub arm: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick {} arm {}: ", self.tick, self.arm + 1)?;
        match self.kind {
            ViolationKind::Solver(Some(s)) => write!(f, "solver status {}", s.as_str()),
            ViolationKind::Solver(None) => write!(f, "controller error"),
            ViolationKind::EntrySphere { distance, radius } => {
                write!(f, "shaft {:.4} mm from sphere center, radius {:.4} mm", distance * 1e3, radius * 1e3)
            }
            ViolationKind::JointLimit => write!(f, "joint outside limits"),
            ViolationKind::Clamped(c) => write!(f, "joint clamped by {c:e}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArmSummary {
    pub start_distance_es: Option<f64>,
    pub max_distance_es: Option<f64>,
    pub final_translation_error: f64,
    pub final_rotation_error: f64,
    pub non_optimal_ticks: u64,
}

#[derive(Clone, Debug, Default)]
pub struct BatchSummary {
    pub ticks: u64,
    pub arms: Vec<ArmSummary>,
    pub first_violation: Option<Violation>,
    pub violations: u64,
    pub wall_time: Duration,
}

impl BatchSummary {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

impl fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ticks: {}  wall time: {:.3} s", self.ticks, self.wall_time.as_secs_f64())?;
        for (i, a) in self.arms.iter().enumerate() {
            let mm = |d: Option<f64>| d.map(|d| format!("{:.4} mm", d * 1e3)).unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "arm {}: max sqrt(D_ES) {} (start {})  final |t err| {:.3e} m  final |r err| {:.3e}  non-optimal ticks {}",
                i + 1,
                mm(a.max_distance_es),
                mm(a.start_distance_es),
                a.final_translation_error,
                a.final_rotation_error,
                a.non_optimal_ticks
            )?;
        }
        match &self.first_violation {
            None => write!(f, "result: ok"),
            Some(v) => write!(f, "result: {} violations, first at {v}", self.violations),
        }
    }
}

/// Tracks invariants over a run.
pub struct InvariantMonitor {
    radii: Vec<Option<f64>>,
    summary: BatchSummary,
}

impl InvariantMonitor {
    pub fn new(sim: &Simulation<f64>) -> Self {
        let n = sim.num_arms();
        let radii = (0..n).map(|i| sim.setup(i).sphere.map(|s| s.radius())).collect();
        let arms = (0..n)
            .map(|i| {
                let start = sim.state().arms[i].d_es.map(|d| d.max(0.0).sqrt());
                ArmSummary { start_distance_es: start, max_distance_es: start, ..ArmSummary::default() }
            })
            .collect();
        Self { radii, summary: BatchSummary { arms, ..BatchSummary::default() } }
    }

    pub fn observe(&mut self, sim: &Simulation<f64>, rec: &TelemetryRecord<f64>) {
        self.summary.ticks = rec.tick;
        for a in &rec.arms {
            let s = &mut self.summary.arms[a.arm];
            s.final_translation_error = a.translation_error_norm;
            s.final_rotation_error = a.rotation_error_norm;
            if let Some(d) = a.distance_es {
                s.max_distance_es = Some(s.max_distance_es.map_or(d, |m| m.max(d)));
            }
            let mut kinds = Vec::new();
            if a.status != Some(SolverStatus::Optimal) {
                s.non_optimal_ticks += 1;
                kinds.push(ViolationKind::Solver(a.status));
            }
            if let (Some(d), Some(r)) = (a.distance_es, self.radii[a.arm]) {
                if d > SPHERE_MARGIN * r {
                    kinds.push(ViolationKind::EntrySphere { distance: d, radius: r });
                }
            }
            if !sim.setup(a.arm).model.within_limits(&a.q, LIMIT_TOLERANCE) {
                kinds.push(ViolationKind::JointLimit);
            }
            if a.clamp_correction > 0.0 {
                kinds.push(ViolationKind::Clamped(a.clamp_correction));
            }
            self.summary.violations += kinds.len() as u64;
            if self.summary.first_violation.is_none() {
                if let Some(&kind) = kinds.first() {
                    self.summary.first_violation = Some(Violation { tick: rec.tick, arm: a.arm, kind });
                }
            }
        }
    }

    pub fn finish(mut self, wall_time: Duration) -> BatchSummary {
        self.summary.wall_time = wall_time;
        self.summary
    }
}

/// Runs the configured scenario for its full duration, writing CSV to `out`
/// when given. Only I/O failures are errors; invariant violations are
/// reported in the summary.
pub fn run_batch(cfg: &LoadedConfig, out: Option<&Path>) -> anyhow::Result<BatchSummary> {
    let mut sim = cfg.new_simulation()?;
    sim.set_trajectory(&cfg.trajectory)?;
    let mut replay = cfg.replay.clone().map(CommandLog::new);
    let dof = (0..sim.num_arms()).map(|i| sim.setup(i).model.dof()).max().unwrap_or(0);
    let mut sink = match out {
        Some(p) => Some(CsvSink::new(BufWriter::new(File::create(p)?), dof)?),
        None => None,
    };
    let mut monitor = InvariantMonitor::new(&sim);
    let started = Instant::now();
    for _ in 0..cfg.ticks {
        if let Some(log) = &mut replay {
            for entry in log.take_due(sim.tick()) {
                sim.apply_command(&entry.command)?;
            }
        }
        let rec = sim.step();
        monitor.observe(&sim, &rec);
        if let Some(s) = &mut sink {
            s.write(&rec)?;
        }
    }
    let wall = started.elapsed();
    if let Some(s) = &mut sink {
        s.flush()?;
    }
    Ok(monitor.finish(wall))
}
