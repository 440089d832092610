use futures_util::{SinkExt, StreamExt};
use std::path::PathBuf;
use std::time::Duration;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

use cftamer::envs::Norms;
use cftamer::experiment::{setup_cell, ExperimentConfig};
use cftamer::tamer::{run_training, CfTarget, PendingPair, Progress};
use cftamer_session::protocol::{
    AwaitingFeedback, CfPayload, ClientMessage, FeedbackPayload, Speed, StepRef,
};
use cftamer_session::{serve, Health, Phase, ServeSettings, ServerMessage, Session};

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

const NORMS: Norms = Norms {
    random: 0.0,
    expert: 1.0,
};

fn config(extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "env = \"gridworld\"\nvariants = [\"cfa\"]\nseeds = [0]\n\
         trainer.episodes = 20\neval.seeds = [1000, 1001]\nserve.seed = 7\n{extra}"
    ))
    .unwrap()
}

struct Server {
    addr: std::net::SocketAddr,
    data: PathBuf,
    _dir: tempfile::TempDir,
}

async fn start(cfg: ExperimentConfig) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let mut settings = ServeSettings::new(cfg, NORMS);
    settings.data_dir = dir.path().to_path_buf();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, settings, std::future::pending()));
    Server {
        addr,
        data: dir.path().to_path_buf(),
        _dir: dir,
    }
}

async fn health(addr: std::net::SocketAddr) -> Health {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(b"GET /healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut text = String::new();
    s.read_to_string(&mut text).await.unwrap();
    let body = text.split("\r\n\r\n").nth(1).unwrap();
    serde_json::from_str(body).unwrap()
}

async fn connect(addr: std::net::SocketAddr, id: Option<&str>) -> Socket {
    let url = match id {
        Some(id) => format!("ws://{addr}/session?id={id}"),
        None => format!("ws://{addr}/session"),
    };
    tokio_tungstenite::connect_async(url).await.unwrap().0
}

async fn send(ws: &mut Socket, msg: ClientMessage) {
    ws.send(Message::Text(msg.to_json().into())).await.unwrap();
}

async fn recv(ws: &mut Socket) -> ServerMessage {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(30), ws.next())
            .await
            .expect("server answered")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = frame {
            return cftamer_session::protocol::parse_server(t.as_str()).unwrap();
        }
    }
}

/// Reads until the next feedback request (or the end of the session).
async fn next_request(ws: &mut Socket) -> (Option<AwaitingFeedback>, Vec<ServerMessage>) {
    let mut seen = Vec::new();
    loop {
        match recv(ws).await {
            ServerMessage::AwaitingFeedback(a) => return (Some(a), seen),
            m @ ServerMessage::SessionEnd(_) => {
                seen.push(m);
                return (None, seen);
            }
            m => seen.push(m),
        }
    }
}

fn session_id(seen: &[ServerMessage]) -> String {
    seen.iter()
        .find_map(|m| match m {
            ServerMessage::StateUpdate(u) => Some(u.session_id.clone()),
            _ => None,
        })
        .expect("state_update seen")
}

async fn wait_for_snapshot(server: &Server, id: &str) -> Session {
    let path = Session::snapshot_path(&server.data, id);
    for _ in 0..300 {
        if path.exists() && health(server.addr).await.sessions == 0 {
            return Session::load(&server.data, id).unwrap();
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("no snapshot at {}", path.display());
}

#[tokio::test]
async fn health_reports_version_and_session_count() {
    let server = start(config("")).await;
    let h = health(server.addr).await;
    assert_eq!((h.status.as_str(), h.sessions), ("ok", 0));
    assert_eq!(h.version, cftamer::VERSION);
    let mut ws = connect(server.addr, None).await;
    next_request(&mut ws).await;
    assert_eq!(health(server.addr).await.sessions, 1);
}

#[tokio::test]
async fn disconnect_after_five_skipped_steps_leaves_a_resumable_snapshot() {
    let server = start(config("")).await;
    let mut ws = connect(server.addr, None).await;
    let (mut req, seen) = next_request(&mut ws).await;
    let id = session_id(&seen);
    for _ in 0..5 {
        let step = req.unwrap().step;
        send(&mut ws, ClientMessage::Skip(StepRef { step })).await;
        req = next_request(&mut ws).await.0;
    }
    let pending = req.unwrap();
    ws.close(None).await.unwrap();
    drop(ws);

    let snap = wait_for_snapshot(&server, &id).await;
    assert_eq!(snap.phase(), Phase::Paused);
    assert_eq!(snap.run().total_steps(), 6);
    assert_eq!(snap.run().log().feedback_count, 0);

    // Reconnecting resumes at the same pending pair.
    let mut ws = connect(server.addr, Some(&id)).await;
    let (again, _) = next_request(&mut ws).await;
    assert_eq!(again.unwrap(), pending);
}

#[tokio::test]
async fn concurrent_sessions_are_independent() {
    let server = start(config("")).await;
    let mut a = connect(server.addr, None).await;
    let mut b = connect(server.addr, None).await;
    let (mut ra, sa) = next_request(&mut a).await;
    let (mut rb, sb) = next_request(&mut b).await;
    let (ida, idb) = (session_id(&sa), session_id(&sb));
    assert_ne!(ida, idb);
    assert_eq!(health(server.addr).await.sessions, 2);
    for _ in 0..8 {
        let step = ra.unwrap().step;
        let fb = FeedbackPayload {
            step,
            f: cftamer::tamer::Signal::Positive,
            cf: None,
        };
        send(&mut a, ClientMessage::Feedback(fb)).await;
        let step = rb.unwrap().step;
        send(&mut b, ClientMessage::Skip(StepRef { step })).await;
        ra = next_request(&mut a).await.0;
        rb = next_request(&mut b).await.0;
    }
    send(&mut a, ClientMessage::End).await;
    send(&mut b, ClientMessage::End).await;
    let (sa, sb) = (
        wait_for_snapshot(&server, &ida).await,
        wait_for_snapshot(&server, &idb).await,
    );
    assert_eq!(sa.run().log().feedback_count, 8);
    assert_eq!(sb.run().log().feedback_count, 0);
    assert_ne!(sa.run().model(), sb.run().model());
    let fresh = ServeSettings::new(config(""), NORMS).new_session("x".into()).unwrap();
    assert_eq!(sb.run().model(), fresh.run().model());
}

#[tokio::test]
async fn feedback_for_a_timed_out_step_is_rejected() {
    let server = start(config("serve.feedback_timeout_ms = 60\n")).await;
    let mut ws = connect(server.addr, None).await;
    let (first, _) = next_request(&mut ws).await;
    let stale = first.unwrap().step;
    // Let the window close; the loop moves on by itself.
    let (next, _) = next_request(&mut ws).await;
    assert!(next.unwrap().step > stale);
    send(&mut ws, ClientMessage::SetSpeed(Speed { feedback_timeout_ms: 10_000 })).await;
    send(
        &mut ws,
        ClientMessage::Feedback(FeedbackPayload {
            step: stale,
            f: cftamer::tamer::Signal::Positive,
            cf: None,
        }),
    )
    .await;
    loop {
        match recv(&mut ws).await {
            ServerMessage::Error(e) => {
                assert_eq!(e.step, Some(stale));
                break;
            }
            ServerMessage::StateUpdate(_) | ServerMessage::AwaitingFeedback(_) => {}
            other => panic!("{other:?}"),
        }
    }
    // A malformed frame is answered and the session carries on.
    ws.send(Message::Text("{\"kind\":\"skip\"}".into())).await.unwrap();
    assert!(matches!(recv(&mut ws).await, ServerMessage::Error(_)));
    send(&mut ws, ClientMessage::End).await;
    assert!(matches!(recv(&mut ws).await, ServerMessage::SessionEnd(_)));
}

#[tokio::test]
async fn edited_states_are_validated_on_the_server() {
    let server = start(config("")).await;
    let mut ws = connect(server.addr, None).await;
    let (req, seen) = next_request(&mut ws).await;
    let id = session_id(&seen);
    let req = req.unwrap();
    let cftamer::envs::EnvState::Grid(g) = &req.state else {
        unreachable!()
    };
    let mut grid = cftamer_session::protocol::StateEdit {
        width: g.width,
        height: g.height,
        cells: g.cells.clone(),
        agent_pos: g.agent_pos,
        agent_dir: g.agent_dir,
    };
    let valid = grid.clone();
    grid.agent_pos = (0, 0);
    let edit = |grid| {
        ClientMessage::Feedback(FeedbackPayload {
            step: req.step,
            f: cftamer::tamer::Signal::Negative,
            cf: Some(CfPayload::State { grid }),
        })
    };
    send(&mut ws, edit(grid)).await;
    match recv(&mut ws).await {
        ServerMessage::Error(e) => assert_eq!(e.rule.map(|r| r.name()), Some("agent_in_wall")),
        other => panic!("{other:?}"),
    }
    send(&mut ws, edit(valid)).await;
    let (after, _) = next_request(&mut ws).await;
    assert!(after.unwrap().step > req.step);
    send(&mut ws, ClientMessage::End).await;
    let snap = wait_for_snapshot(&server, &id).await;
    assert_eq!(snap.run().log().cf_count, 1);
}

fn to_message(query: &PendingPair, event: Option<cftamer::tamer::FeedbackEvent>) -> ClientMessage {
    let Some(event) = event else {
        return ClientMessage::Skip(StepRef { step: query.step });
    };
    let cf = event.cf.map(|cf| match cf.target {
        CfTarget::Action { action } => CfPayload::Action { action },
        other => panic!("scripted client only replays action counterfactuals: {other:?}"),
    });
    ClientMessage::Feedback(FeedbackPayload {
        step: query.step,
        f: event.f,
        cf,
    })
}

fn pending_from(a: &AwaitingFeedback) -> PendingPair {
    PendingPair {
        step: a.step,
        episode: a.episode,
        state: a.state.encode(),
        hidden: a.state.clone(),
        action: a.action,
        terminal: a.terminal,
    }
}

/// A client replaying an oracle's answers trains exactly the model the
/// offline loop trains.
#[tokio::test]
async fn scripted_session_matches_the_offline_run() {
    let cfg = config("oracle.feedback_quality = 0.75\noracle.feedback_frequency = 0.8\n");
    let seed = cfg.serve.seed;
    let server = start(cfg.clone()).await;

    let mut oracle = setup_cell(&cfg, NORMS, cfg.serve.variant, seed).unwrap().oracle;
    let mut ws = connect(server.addr, None).await;
    let (mut req, seen) = next_request(&mut ws).await;
    let id = session_id(&seen);
    while let Some(a) = req {
        let query = pending_from(&a);
        let event = oracle.query(&query).unwrap();
        send(&mut ws, to_message(&query, event)).await;
        req = next_request(&mut ws).await.0;
    }
    let session = wait_for_snapshot(&server, &id).await;
    assert_eq!(session.phase(), Phase::Ended);

    let setup = setup_cell(&cfg, NORMS, cfg.serve.variant, seed).unwrap();
    let (mut run, mut oracle) = (setup.run, setup.oracle);
    let offline_log = run_training(
        run.config().clone(),
        run.env().clone(),
        run.evaluator().cloned(),
        &mut oracle.clone(),
    )
    .unwrap();
    while run.advance().unwrap() == Progress::AwaitingFeedback {
        let q = run.pending().unwrap().clone();
        run.submit_feedback(oracle.query(&q).unwrap()).unwrap();
    }
    assert!(session.run().log().feedback_count > 0);
    assert!(session.run().log().cf_count > 0);
    assert_eq!(session.run().log().to_json(), offline_log.to_json());
    assert_eq!(session.run().model(), run.model());
    assert_eq!(
        serde_json::to_string(session.run().model()).unwrap(),
        serde_json::to_string(run.model()).unwrap()
    );
}
