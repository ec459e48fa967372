mod support;

use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use teleqp_service::wire::{ClientFrame, CommandMessage, ErrorCode, ServerFrame, SessionInfo};
use teleqp_service::{run_batch, start, LoadedConfig};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn connect(addr: std::net::SocketAddr) -> (Ws, SessionInfo) {
    let (mut ws, _) = connect_async(format!("ws://{addr}")).await.unwrap();
    let ServerFrame::Config(info) = next_non_telemetry(&mut ws).await else { panic!("config frame expected first") };
    (ws, info)
}

async fn frames(ws: &mut Ws) -> Vec<ServerFrame> {
    let msg = timeout(Duration::from_secs(5), ws.next()).await.expect("no frame within 5 s").unwrap().unwrap();
    let text = msg.into_text().unwrap();
    assert!(text.ends_with('\n'));
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Non-telemetry frames of the next message that has any.
async fn replies(ws: &mut Ws) -> Vec<ServerFrame> {
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        assert!(Instant::now() < deadline, "only telemetry for 5 s");
        let r: Vec<_> = frames(ws).await.into_iter().filter(|f| !matches!(f, ServerFrame::Telemetry(_))).collect();
        if !r.is_empty() {
            return r;
        }
    }
}

async fn next_non_telemetry(ws: &mut Ws) -> ServerFrame {
    let mut r = replies(ws).await;
    assert_eq!(r.len(), 1, "{r:?}");
    r.remove(0)
}

async fn send(ws: &mut Ws, frames: &[ClientFrame]) {
    let text: String = frames.iter().map(|f| serde_json::to_string(f).unwrap() + "\n").collect();
    ws.send(Message::text(text)).await.unwrap();
}

fn command(info: &SessionInfo, arm: usize, offset: [f64; 3]) -> ClientFrame {
    let start = info.arms[arm - 1].operator_start;
    let t = start.t.imag_array();
    ClientFrame::Command(CommandMessage {
        arm,
        translation: [t[0] + offset[0], t[1] + offset[1], t[2] + offset[2]],
        rotation: start.r.vec4(),
        grip: 0.5,
        timestamp: None,
    })
}

fn live_config(dir: &std::path::Path, extra: &str) -> LoadedConfig {
    support::load(dir, "live.toml", &format!("[output]\ncsv = \"live.csv\"\ncommand_log = \"live.jsonl\"\n{extra}"))
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn idle_loop_holds_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = live_config(dir.path(), "");
    let server = start(&cfg, "127.0.0.1:0").await.unwrap();
    let (mut ws, info) = connect(server.local_addr).await;
    assert_eq!(info.arms.len(), 2);
    assert_eq!(info.decimation, 10);
    let sim = cfg.new_simulation().unwrap();
    let mut seen = 0;
    while seen < 5 {
        for f in frames(&mut ws).await {
            if let ServerFrame::Telemetry(rec) = f {
                assert_eq!(rec.tick % 10, 0);
                for a in &rec.arms {
                    assert!((1..=2).contains(&a.arm));
                    let q0 = &sim.setup(a.arm - 1).q0;
                    assert!(a.q.iter().zip(q0).all(|(x, y)| (x - y).abs() < 1e-12));
                }
                seen += 1;
            }
        }
    }
    drop(ws);
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn second_claimant_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = live_config(dir.path(), "");
    let server = start(&cfg, "127.0.0.1:0").await.unwrap();
    let (mut a, info) = connect(server.local_addr).await;
    let (mut b, _) = connect(server.local_addr).await;

    send(&mut a, &[ClientFrame::Claim { arm: 1 }]).await;
    assert_eq!(next_non_telemetry(&mut a).await, ServerFrame::Claimed { arm: 1 });
    send(&mut b, &[ClientFrame::Claim { arm: 1 }]).await;
    assert!(matches!(next_non_telemetry(&mut b).await, ServerFrame::Error { code: ErrorCode::ArmClaimed, .. }));
    send(&mut b, &[command(&info, 1, [0.0; 3])]).await;
    assert!(matches!(next_non_telemetry(&mut b).await, ServerFrame::Error { code: ErrorCode::ArmClaimed, .. }));
    send(&mut b, &[ClientFrame::Release { arm: 1 }]).await;
    assert!(matches!(next_non_telemetry(&mut b).await, ServerFrame::Error { code: ErrorCode::NotClaimed, .. }));
    // the other arm is free; a command claims it implicitly
    send(&mut b, &[command(&info, 2, [0.0; 3])]).await;
    assert_eq!(next_non_telemetry(&mut b).await, ServerFrame::Claimed { arm: 2 });

    // disconnecting releases the claim
    a.close(None).await.unwrap();
    drop(a);
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        send(&mut b, &[ClientFrame::Claim { arm: 1 }]).await;
        match next_non_telemetry(&mut b).await {
            ServerFrame::Claimed { arm: 1 } => break,
            ServerFrame::Error { code: ErrorCode::ArmClaimed, .. } if Instant::now() < deadline => {
                tokio::time::sleep(Duration::from_millis(20)).await
            }
            other => panic!("{other:?}"),
        }
    }
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn malformed_messages_get_error_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = live_config(dir.path(), "");
    let server = start(&cfg, "127.0.0.1:0").await.unwrap();
    let (mut ws, info) = connect(server.local_addr).await;
    let before = server.stats().ticks();

    ws.send(Message::text("this is not json\n")).await.unwrap();
    assert!(matches!(next_non_telemetry(&mut ws).await, ServerFrame::Error { code: ErrorCode::Malformed, .. }));
    ws.send(Message::binary(vec![1u8, 2, 3])).await.unwrap();
    assert!(matches!(next_non_telemetry(&mut ws).await, ServerFrame::Error { code: ErrorCode::Malformed, .. }));
    let mut bad = command(&info, 1, [0.0; 3]);
    if let ClientFrame::Command(c) = &mut bad {
        c.rotation = [0.9, 0.0, 0.0, 0.0];
    }
    send(&mut ws, &[bad]).await;
    assert!(matches!(next_non_telemetry(&mut ws).await, ServerFrame::Error { code: ErrorCode::InvalidCommand, .. }));
    send(&mut ws, &[ClientFrame::Claim { arm: 7 }]).await;
    assert!(matches!(next_non_telemetry(&mut ws).await, ServerFrame::Error { code: ErrorCode::UnknownArm, .. }));

    // one bad frame does not spoil the rest of the message
    let text = format!("{{\"type\":\"nope\"}}\n{}\n", serde_json::to_string(&command(&info, 1, [0.001, 0.0, 0.0])).unwrap());
    ws.send(Message::text(text)).await.unwrap();
    let r = replies(&mut ws).await;
    assert_eq!(r.len(), 2);
    assert!(matches!(r[0], ServerFrame::Error { code: ErrorCode::Malformed, .. }));
    assert_eq!(r[1], ServerFrame::Claimed { arm: 1 });

    tokio::time::sleep(Duration::from_millis(200)).await;
    assert!(server.stats().ticks() > before + 100);
    assert_eq!(server.stats().commands(), 1);
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn recorded_session_replays_in_batch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = live_config(dir.path(), "");
    let server = start(&cfg, "127.0.0.1:0").await.unwrap();
    let (mut ws, info) = connect(server.local_addr).await;
    for k in 0..40 {
        let s = k as f64 / 40.0;
        let arm = 1 + k % 2;
        let f = command(&info, arm, [0.003 * (6.0 * s).sin(), 0.002 * s, -0.002 * (4.0 * s).cos() + 0.002]);
        send(&mut ws, &[f]).await;
        tokio::time::sleep(Duration::from_millis(15)).await;
    }
    tokio::time::sleep(Duration::from_millis(200)).await;
    ws.close(None).await.unwrap();
    let ticks = server.shutdown().await.unwrap();
    assert!(ticks > 500);

    let log = std::fs::read_to_string(dir.path().join("live.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 40);
    let mut replay = support::load(dir.path(), "replay.toml", "[replay]\ncommands = \"live.jsonl\"\n");
    replay.ticks = ticks;
    let out = dir.path().join("replay.csv");
    let summary = run_batch(&replay, Some(&out)).unwrap();
    assert!(summary.passed(), "{summary}");

    let (h1, live_rows) = support::read_csv(&dir.path().join("live.csv"));
    let (h2, replay_rows) = support::read_csv(&out);
    assert_eq!(h1, h2);
    let diff = support::max_field_difference(&live_rows, &replay_rows);
    assert!(diff <= 1e-9, "live and replay differ by {diff}");
    // the commands moved the arms
    let col = h1.iter().position(|c| c == "tip_x").unwrap();
    let moved = live_rows.iter().zip(&live_rows[2..]).any(|(a, b)| a[col] != b[col]);
    assert!(moved);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn flooding_client_does_not_slow_the_loop() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = live_config(dir.path(), "[serve]\nqueue_capacity = 16\ntelemetry_buffer = 4\n");
    let server = start(&cfg, "127.0.0.1:0").await.unwrap();
    let (ws, info) = connect(server.local_addr).await;
    let (mut tx, mut rx) = ws.split();
    let batch: String = (0..200).map(|k| serde_json::to_string(&command(&info, 1, [1e-5 * (k % 7) as f64, 0.0, 0.0])).unwrap() + "\n").collect();
    let flood = tokio::spawn(async move {
        let end = Instant::now() + Duration::from_millis(2500);
        while Instant::now() < end {
            if tx.send(Message::text(batch.clone())).await.is_err() {
                break;
            }
        }
    });
    let reader = tokio::spawn(async move {
        let mut queue_full = 0usize;
        while let Some(Ok(msg)) = rx.next().await {
            if let Ok(text) = msg.into_text() {
                queue_full += text.matches("queue_full").count();
            }
        }
        queue_full
    });
    tokio::time::sleep(Duration::from_millis(300)).await;
    let (t0, w0) = (server.stats().ticks(), Instant::now());
    tokio::time::sleep(Duration::from_millis(2000)).await;
    let (t1, w1) = (server.stats().ticks(), Instant::now());
    flood.await.unwrap();
    let nominal = (w1 - w0).as_secs_f64() / cfg.sim.dt;
    let ratio = (t1 - t0) as f64 / nominal;
    assert!((ratio - 1.0).abs() < 0.1, "cadence ratio {ratio}");
    assert!(server.stats().commands() > 100);
    server.shutdown().await.unwrap();
    let rejected = timeout(Duration::from_secs(5), reader).await.unwrap().unwrap();
    assert!(rejected > 0, "flood never hit the queue bound");
}
