//! Drive a session without a socket: answer a few requests, pause, snapshot,
//! restore and carry on where it stopped.
//!
//! ```text
//! cargo run -p cftamer-session --example offline_session
//! ```

use cftamer::envs::Norms;
use cftamer::experiment::ExperimentConfig;
use cftamer::tamer::Signal;
use cftamer_session::protocol::{CfPayload, ClientMessage, FeedbackPayload, StepRef};
use cftamer_session::{ServeSettings, ServerMessage, Session};

fn show(out: &[ServerMessage]) -> Option<u64> {
    let mut awaiting = None;
    for m in out {
        match m {
            ServerMessage::AwaitingFeedback(a) => {
                println!("  awaiting feedback on step {} (action {})", a.step, a.action);
                awaiting = Some(a.step);
            }
            ServerMessage::StateUpdate(u) => println!("  state_update {:?} step {} h {:?}", u.phase, u.step, u.h_values),
            other => println!("  {}", other.kind()),
        }
    }
    awaiting
}

fn main() {
    let config = ExperimentConfig::parse(
        "env = \"gridworld\"\nvariants = [\"cfa\"]\nseeds = [0]\ntrainer.episodes = 3\n",
    )
    .expect("config");
    let norms = Norms { random: 0.0, expert: 1.0 };
    let mut session = ServeSettings::new(config, norms).new_session("demo".into()).expect("session");

    println!("connect");
    let mut step = show(&session.connect()).expect("first request");
    println!("-1 with turn_left as the better action");
    let reply = ClientMessage::Feedback(FeedbackPayload {
        step,
        f: Signal::Negative,
        cf: Some(CfPayload::Action { action: 0 }),
    });
    step = show(&session.handle(reply)).expect("next request");
    println!("skip");
    step = show(&session.handle(ClientMessage::Skip(StepRef { step }))).expect("next request");
    println!("pause");
    show(&session.handle(ClientMessage::Pause));

    let snapshot = session.snapshot_json();
    let mut restored = Session::restore_json(&snapshot).expect("restore");
    assert_eq!(restored, session);
    println!("restored from {} bytes; resume", snapshot.len());
    let again = show(&restored.handle(ClientMessage::Resume)).expect("same request");
    assert_eq!(again, step);
    let log = restored.run().log();
    println!("feedback {} counterfactuals {}", log.feedback_count, log.cf_count);
}
