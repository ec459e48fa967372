use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use teleqp_service::{exit, run_batch, start, LoadedConfig, ServeError};

/// Constrained teleoperation simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scripted or replayed scenario offline.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory id, overriding the config (default parameters).
        #[arg(long)]
        trajectory: Option<String>,
        /// CSV output, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Command log to replay, overriding the config.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Run live and accept WebSocket clients.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Listen address, overriding the config.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Validate a config file and print the resolved setup.
    CheckConfig { file: PathBuf },
}

fn load(path: &Path) -> Result<LoadedConfig, ExitCode> {
    LoadedConfig::load(path).map_err(|e| {
        eprintln!("config error: {e}");
        ExitCode::from(exit::CONFIG as u8)
    })
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TELEQP_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, trajectory, out, replay } => run(config, trajectory, out, replay),
        Command::Serve { config, bind } => serve(config, bind),
        Command::CheckConfig { file } => check(file),
    };
    result.unwrap_or_else(|c| c)
}

fn run(config: PathBuf, trajectory: Option<String>, out: Option<PathBuf>, replay: Option<PathBuf>) -> Result<ExitCode, ExitCode> {
    let mut cfg = load(&config)?;
    if let Some(id) = trajectory {
        cfg.override_trajectory(&id).map_err(|e| {
            eprintln!("config error: {e}");
            code(exit::CONFIG)
        })?;
    }
    if let Some(p) = replay {
        let log = teleqp_service::config::read_command_log(&p, cfg.arms.len()).map_err(|e| {
            eprintln!("config error: {e}");
            code(exit::CONFIG)
        })?;
        cfg.replay = Some(log);
    }
    let out = out.or_else(|| cfg.csv.clone());
    match run_batch(&cfg, out.as_deref()) {
        Ok(summary) => {
            println!("{summary}");
            Ok(code(summary.exit_code()))
        }
        Err(e) => {
            eprintln!("run failed: {e:#}");
            Err(code(exit::RUNTIME))
        }
    }
}

fn serve(config: PathBuf, bind: Option<String>) -> Result<ExitCode, ExitCode> {
    let cfg = load(&config)?;
    let Some(bind) = bind.or_else(|| cfg.serve.bind.clone()) else {
        eprintln!("config error: no bind address (use --bind or [serve] bind)");
        return Err(code(exit::CONFIG));
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| {
        eprintln!("cannot start runtime: {e}");
        code(exit::RUNTIME)
    })?;
    runtime.block_on(async move {
        let handle = match start(&cfg, &bind).await {
            Ok(h) => h,
            Err(e @ ServeError::Bind { .. }) => {
                eprintln!("{e}");
                return Err(code(exit::BIND));
            }
            Err(e) => {
                eprintln!("serve failed: {e}");
                return Err(code(exit::RUNTIME));
            }
        };
        log::info!("listening on ws://{}", handle.local_addr);
        if let Err(e) = tokio::signal::ctrl_c().await {
            log::warn!("cannot wait for interrupt: {e}");
        }
        log::info!("shutting down");
        match handle.shutdown().await {
            Ok(ticks) => {
                log::info!("ran {ticks} ticks");
                Ok(code(exit::OK))
            }
            Err(e) => {
                eprintln!("shutdown failed: {e:#}");
                Err(code(exit::RUNTIME))
            }
        }
    })
}

fn check(file: PathBuf) -> Result<ExitCode, ExitCode> {
    let cfg = load(&file)?;
    println!("config ok: {}", cfg.source.display());
    println!("dt {} s, duration {} s ({} ticks), trajectory {}", cfg.sim.dt, cfg.duration, cfg.ticks, cfg.trajectory.id());
    let c = &cfg.sim.controller;
    println!(
        "controller: alpha {} eta {} lambda_r {} lambda_f {}",
        c.alpha, c.eta, c.lambda_r, c.lambda_f
    );
    let o = &cfg.sim.operator;
    println!("operator: stiffness {} viscosity {} motion_scaling {}", o.stiffness, o.viscosity, o.motion_scaling);
    for (i, a) in cfg.arms.iter().enumerate() {
        let sphere = a
            .sphere
            .map(|s| format!("sphere radius {:.3} mm, eta_d {}", s.radius() * 1e3, s.eta_d))
            .unwrap_or_else(|| "no sphere".into());
        println!("arm {}: {} ({} joints), {sphere}", i + 1, a.model.name, a.model.dof());
    }
    if let Some(r) = &cfg.replay {
        println!("replay: {} commands", r.len());
    }
    Ok(code(exit::OK))
}
