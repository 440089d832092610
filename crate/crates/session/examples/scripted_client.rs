//! Host sessions in-process and connect a WebSocket client that answers
//! every request with the synthetic oracle's decision.
//!
//! ```text
//! cargo run --release -p cftamer-session --example scripted_client
//! ```

use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

use cftamer::experiment::{calibrate, setup_cell, ExperimentConfig};
use cftamer::tamer::{CfTarget, PendingPair};
use cftamer_session::protocol::{parse_server, CfPayload, ClientMessage, FeedbackPayload, StepRef};
use cftamer_session::{serve, ServeSettings, ServerMessage};

#[tokio::main]
async fn main() {
    let config = ExperimentConfig::parse(
        "env = \"gridworld\"\nvariants = [\"cfa\"]\nseeds = [0]\n\
         trainer.episodes = 20\nserve.eval_interval = 200\n",
    )
    .expect("config");
    let norms = calibrate(&config).expect("calibration");
    let data = tempfile::tempdir().expect("temp dir");
    let mut settings = ServeSettings::new(config.clone(), norms);
    settings.data_dir = data.path().to_path_buf();

    let listener = TcpListener::bind("127.0.0.1:0").await.expect("bind");
    let addr = listener.local_addr().expect("address");
    tokio::spawn(serve(listener, settings, std::future::pending()));

    let mut oracle = setup_cell(&config, norms, config.serve.variant, config.serve.seed)
        .expect("oracle")
        .oracle;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/session"))
        .await
        .expect("connect");
    while let Some(Ok(frame)) = ws.next().await {
        let Message::Text(text) = frame else { continue };
        match parse_server(text.as_str()).expect("valid server message") {
            ServerMessage::AwaitingFeedback(a) => {
                let query = PendingPair {
                    step: a.step,
                    episode: a.episode,
                    state: a.state.encode(),
                    hidden: a.state.clone(),
                    action: a.action,
                    terminal: a.terminal,
                };
                let reply = match oracle.query(&query).expect("oracle") {
                    None => ClientMessage::Skip(StepRef { step: a.step }),
                    Some(event) => ClientMessage::Feedback(FeedbackPayload {
                        step: a.step,
                        f: event.f,
                        cf: event.cf.map(|cf| match cf.target {
                            CfTarget::Action { action } => CfPayload::Action { action },
                            other => unreachable!("cfa oracle produced {other:?}"),
                        }),
                    }),
                };
                ws.send(Message::Text(reply.to_json().into())).await.expect("send");
            }
            ServerMessage::EvalReport(r) => println!("step {:5}  score {:.3}", r.step, r.score),
            ServerMessage::SessionEnd(end) => {
                println!(
                    "session over after {} steps: {} feedback, {} counterfactuals",
                    end.total_steps, end.feedback_count, end.cf_count
                );
                break;
            }
            _ => {}
        }
    }
}
