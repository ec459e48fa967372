//! Live mode: the simulation runs in real time on its own thread, clients
//! connect over WebSocket to receive telemetry and steer arms.
//!
//! The loop thread never blocks on clients. Commands reach it through a
//! bounded queue drained at the start of each tick; telemetry leaves through
//! a broadcast buffer that drops the oldest frames for slow readers; CSV and
//! command-log output go to a separate writer thread.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, watch};
use tokio_tungstenite::tungstenite::Message;

use teleqp_core::sim::{command_channel, CommandLog, CommandReceiver, CommandSender, SendRejected, Simulation, TelemetryRecord};

use crate::config::LoadedConfig;
use crate::csv_log::CsvSink;
use crate::wire::{
    arm_index, parse_client_message, ArmInfo, ClientFrame, CommandLogLine, ErrorCode, FrameError, ServerFrame,
    SessionInfo,
};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("{0}")]
    Setup(String),
}

/// Counters shared with the loop thread.
#[derive(Debug, Default)]
pub struct LoopStats {
    ticks: AtomicU64,
    /// Ticks that started more than one period after their deadline.
    late_ticks: AtomicU64,
    commands: AtomicU64,
}

impl LoopStats {
    pub fn ticks(&self) -> u64 {
        self.ticks.load(Ordering::Acquire)
    }

    pub fn late_ticks(&self) -> u64 {
        self.late_ticks.load(Ordering::Relaxed)
    }

    /// Commands applied by the loop.
    pub fn commands(&self) -> u64 {
        self.commands.load(Ordering::Relaxed)
    }
}

pub struct ServerHandle {
    pub local_addr: SocketAddr,
    stats: Arc<LoopStats>,
    stop: Arc<AtomicBool>,
    closing: watch::Sender<bool>,
    sim_thread: Option<JoinHandle<u64>>,
    writer_thread: Option<JoinHandle<std::io::Result<()>>>,
    accept_task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub fn stats(&self) -> &LoopStats {
        &self.stats
    }

    /// Stops the loop, flushes outputs and returns the number of ticks run.
    pub async fn shutdown(mut self) -> anyhow::Result<u64> {
        self.stop.store(true, Ordering::Release);
        self.accept_task.abort();
        let _ = self.closing.send(true);
        let sim = self.sim_thread.take();
        let writer = self.writer_thread.take();
        tokio::task::spawn_blocking(move || {
            let ticks = sim.map(|h| h.join().expect("simulation thread panicked")).unwrap_or(0);
            if let Some(w) = writer {
                w.join().expect("writer thread panicked")?;
            }
            Ok(ticks)
        })
        .await?
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        self.accept_task.abort();
        let _ = self.closing.send(true);
    }
}

enum OutputMsg {
    Record(TelemetryRecord<f64>),
    Command(CommandLogLine),
}

struct Shared {
    num_arms: usize,
    info: SessionInfo,
    commands: CommandSender<f64>,
    telemetry: broadcast::Sender<Arc<TelemetryRecord<f64>>>,
    /// Connection id holding each arm.
    claims: Mutex<Vec<Option<u64>>>,
    next_client: AtomicU64,
    stop: Arc<AtomicBool>,
    closing: watch::Receiver<bool>,
}

fn session_info(sim: &Simulation<f64>, decimation: u64) -> SessionInfo {
    let arms = (0..sim.num_arms())
        .map(|i| {
            let setup = sim.setup(i);
            let map = sim.operator_map(i);
            let start = sim.start_pose(i);
            let r = map.os_from_ps.compose(start.r).compose(map.os_from_ps.conj());
            ArmInfo {
                arm: i + 1,
                dof: setup.model.dof(),
                operator_start: teleqp_core::Pose::new(r, map.to_operator_point(start.t)),
                q_min: setup.model.q_min.clone(),
                q_max: setup.model.q_max.clone(),
                d_safe: setup.sphere.map(|s| s.d_safe),
            }
        })
        .collect();
    SessionInfo { dt: sim.config().dt, decimation, arms }
}

/// Binds `bind` and starts the loop, the writer and the accept task.
pub async fn start(cfg: &LoadedConfig, bind: &str) -> Result<ServerHandle, ServeError> {
    let listener =
        TcpListener::bind(bind).await.map_err(|source| ServeError::Bind { addr: bind.to_string(), source })?;
    let local_addr = listener.local_addr().map_err(|source| ServeError::Bind { addr: bind.to_string(), source })?;

    let mut sim = cfg.new_simulation().map_err(|e| ServeError::Setup(e.to_string()))?;
    sim.set_trajectory(&cfg.trajectory).map_err(|e| ServeError::Setup(e.to_string()))?;
    let dof = (0..sim.num_arms()).map(|i| sim.setup(i).model.dof()).max().unwrap_or(0);

    let (out_tx, writer_thread) = if cfg.csv.is_some() || cfg.command_log.is_some() {
        let csv = match &cfg.csv {
            Some(p) => Some(CsvSink::new(BufWriter::new(create(p)?), dof).map_err(|e| ServeError::Setup(e.to_string()))?),
            None => None,
        };
        let log = match &cfg.command_log {
            Some(p) => Some(BufWriter::new(create(p)?)),
            None => None,
        };
        let (tx, rx) = mpsc::channel();
        let handle = std::thread::Builder::new()
            .name("teleqp-writer".into())
            .spawn(move || write_outputs(rx, csv, log))
            .map_err(|e| ServeError::Setup(e.to_string()))?;
        (Some(tx), Some(handle))
    } else {
        (None, None)
    };

    let (cmd_tx, cmd_rx) = command_channel(cfg.serve.queue_capacity);
    let (tele_tx, _) = broadcast::channel(cfg.serve.telemetry_buffer);
    let stop = Arc::new(AtomicBool::new(false));
    let stats = Arc::new(LoopStats::default());
    let (closing, closing_rx) = watch::channel(false);
    let shared = Arc::new(Shared {
        num_arms: sim.num_arms(),
        info: session_info(&sim, cfg.serve.decimation),
        commands: cmd_tx,
        telemetry: tele_tx.clone(),
        claims: Mutex::new(vec![None; sim.num_arms()]),
        next_client: AtomicU64::new(1),
        stop: stop.clone(),
        closing: closing_rx,
    });

    let period = Duration::from_secs_f64(cfg.sim.dt);
    let decimation = cfg.serve.decimation;
    let sim_thread = {
        let stop = stop.clone();
        let stats = stats.clone();
        std::thread::Builder::new()
            .name("teleqp-loop".into())
            .spawn(move || run_loop(sim, cmd_rx, tele_tx, out_tx, stop, stats, period, decimation))
            .map_err(|e| ServeError::Setup(e.to_string()))?
    };

    let accept_task = tokio::spawn(accept_loop(listener, shared));
    Ok(ServerHandle {
        local_addr,
        stats,
        stop,
        closing,
        sim_thread: Some(sim_thread),
        writer_thread,
        accept_task,
    })
}

fn create(p: &std::path::Path) -> Result<File, ServeError> {
    File::create(p).map_err(|e| ServeError::Setup(format!("cannot create {}: {e}", p.display())))
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    mut sim: Simulation<f64>,
    commands: CommandReceiver<f64>,
    telemetry: broadcast::Sender<Arc<TelemetryRecord<f64>>>,
    output: Option<mpsc::Sender<OutputMsg>>,
    stop: Arc<AtomicBool>,
    stats: Arc<LoopStats>,
    period: Duration,
    decimation: u64,
) -> u64 {
    let mut log = CommandLog::default();
    let mut deadline = Instant::now();
    while !stop.load(Ordering::Acquire) {
        let tick = sim.tick();
        for cmd in commands.drain() {
            match sim.apply_command(&cmd) {
                Ok(()) => {
                    log.push(tick, cmd);
                    stats.commands.fetch_add(1, Ordering::Relaxed);
                    if let Some(out) = &output {
                        let line = CommandLogLine::new(log.entries().last().expect("just pushed"));
                        let _ = out.send(OutputMsg::Command(line));
                    }
                }
                Err(e) => log::warn!("dropped command for arm {}: {e}", cmd.arm + 1),
            }
        }
        let rec = sim.step();
        if rec.tick.is_multiple_of(decimation) {
            // no receivers is not an error
            let _ = telemetry.send(Arc::new(rec.clone()));
        }
        if let Some(out) = &output {
            let _ = out.send(OutputMsg::Record(rec));
        }
        stats.ticks.store(sim.tick(), Ordering::Release);

        deadline += period;
        let now = Instant::now();
        if now < deadline {
            std::thread::sleep(deadline - now);
        } else if now - deadline > period {
            stats.late_ticks.fetch_add(1, Ordering::Relaxed);
            // too far behind to catch up without a burst
            if now - deadline > period * 50 {
                deadline = now;
            }
        }
    }
    sim.tick()
}

fn write_outputs(
    rx: mpsc::Receiver<OutputMsg>,
    mut csv: Option<CsvSink<BufWriter<File>>>,
    mut log: Option<BufWriter<File>>,
) -> std::io::Result<()> {
    for msg in rx {
        match msg {
            OutputMsg::Record(rec) => {
                if let Some(c) = &mut csv {
                    c.write(&rec)?;
                }
            }
            OutputMsg::Command(line) => {
                if let Some(l) = &mut log {
                    serde_json::to_writer(&mut *l, &line)?;
                    l.write_all(b"\n")?;
                }
            }
        }
    }
    if let Some(c) = &mut csv {
        c.flush()?;
    }
    if let Some(l) = &mut log {
        l.flush()?;
    }
    Ok(())
}

async fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                let shared = shared.clone();
                tokio::spawn(async move {
                    let id = shared.next_client.fetch_add(1, Ordering::Relaxed);
                    log::info!("client {id} connected from {peer}");
                    if let Err(e) = handle_client(stream, id, &shared).await {
                        log::info!("client {id}: {e}");
                    }
                    release_all(&shared, id);
                    log::info!("client {id} disconnected");
                });
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
}

fn release_all(shared: &Shared, client: u64) {
    let mut claims = shared.claims.lock().expect("claims lock");
    for c in claims.iter_mut().filter(|c| **c == Some(client)) {
        *c = None;
    }
}

async fn handle_client(stream: TcpStream, id: u64, shared: &Shared) -> anyhow::Result<()> {
    let mut ws = tokio_tungstenite::accept_async(stream).await?;
    let mut telemetry = shared.telemetry.subscribe();
    let mut closing = shared.closing.clone();
    ws.send(Message::text(ServerFrame::Config(shared.info.clone()).encode())).await?;
    loop {
        tokio::select! {
            _ = async { closing.wait_for(|c| *c).await.is_ok() } => {
                let _ = ws.close(None).await;
                return Ok(());
            }
            incoming = ws.next() => {
                let Some(msg) = incoming else { return Ok(()) };
                let replies = match msg? {
                    Message::Text(text) => handle_text(text.as_str(), id, shared),
                    Message::Binary(_) => vec![FrameError::new(ErrorCode::Malformed, "binary messages are not supported").frame()],
                    Message::Close(_) => return Ok(()),
                    _ => Vec::new(),
                };
                if !replies.is_empty() {
                    let text: String = replies.iter().map(ServerFrame::encode).collect();
                    ws.send(Message::text(text)).await?;
                }
            }
            rec = telemetry.recv() => match rec {
                Ok(rec) => ws.send(Message::text(ServerFrame::telemetry(&rec).encode())).await?,
                Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("client {id} skipped {n} telemetry frames"),
                Err(broadcast::error::RecvError::Closed) => {
                    let _ = ws.close(None).await;
                    return Ok(());
                }
            },
        }
    }
}

/// Processes every frame in one text message and returns the replies.
fn handle_text(text: &str, client: u64, shared: &Shared) -> Vec<ServerFrame> {
    parse_client_message(text)
        .into_iter()
        .filter_map(|frame| match frame.and_then(|f| handle_frame(f, client, shared)) {
            Ok(reply) => reply,
            Err(e) => Some(e.frame()),
        })
        .collect()
}

fn handle_frame(frame: ClientFrame, client: u64, shared: &Shared) -> Result<Option<ServerFrame>, FrameError> {
    if shared.stop.load(Ordering::Acquire) {
        return Err(FrameError::new(ErrorCode::ShuttingDown, "server is shutting down"));
    }
    match frame {
        ClientFrame::Claim { arm } => {
            let i = arm_index(arm, shared.num_arms)?;
            let mut claims = shared.claims.lock().expect("claims lock");
            match claims[i] {
                Some(owner) if owner != client => Err(claimed_error(arm)),
                _ => {
                    claims[i] = Some(client);
                    Ok(Some(ServerFrame::Claimed { arm }))
                }
            }
        }
        ClientFrame::Release { arm } => {
            let i = arm_index(arm, shared.num_arms)?;
            let mut claims = shared.claims.lock().expect("claims lock");
            if claims[i] != Some(client) {
                return Err(FrameError::new(ErrorCode::NotClaimed, format!("arm {arm} is not claimed by this client")));
            }
            claims[i] = None;
            Ok(Some(ServerFrame::Released { arm }))
        }
        ClientFrame::Command(msg) => {
            let cmd = msg.to_live(shared.num_arms)?;
            let newly_claimed = {
                let mut claims = shared.claims.lock().expect("claims lock");
                match claims[cmd.arm] {
                    Some(owner) if owner != client => return Err(claimed_error(msg.arm)),
                    Some(_) => false,
                    None => {
                        claims[cmd.arm] = Some(client);
                        true
                    }
                }
            };
            match shared.commands.try_send(cmd) {
                Ok(()) => {}
                Err(SendRejected::Full) => return Err(FrameError::new(ErrorCode::QueueFull, "command queue full, command dropped")),
                Err(SendRejected::Disconnected) => {
                    return Err(FrameError::new(ErrorCode::ShuttingDown, "simulation loop stopped"))
                }
            }
            Ok(newly_claimed.then_some(ServerFrame::Claimed { arm: msg.arm }))
        }
    }
}

fn claimed_error(arm: usize) -> FrameError {
    FrameError::new(ErrorCode::ArmClaimed, format!("arm {arm} is claimed by another client"))
}
