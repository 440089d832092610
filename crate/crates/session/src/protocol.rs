//! Wire format. Every frame is one JSON object with a `kind`, an optional
//! `payload` and `"schema_version": 1`.

use serde::{Deserialize, Serialize};

use cftamer::envs::{Cell, Direction, EnvState, GridRule};
use cftamer::tamer::Signal;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingFeedback,
    Stepping,
    Paused,
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub session_id: String,
    pub phase: Phase,
    pub episode: usize,
    /// Environment steps taken so far.
    pub step: u64,
    /// Full render: grid layout and agent pose, or the physics state.
    pub state: Option<EnvState>,
    pub last_action: Option<usize>,
    pub action_names: Vec<String>,
    /// `H(s, a)` for every action at `state`.
    pub h_values: Vec<f64>,
}

/// The pair the learner wants feedback on: `action` taken in `state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwaitingFeedback {
    pub step: u64,
    pub episode: usize,
    pub state: EnvState,
    pub action: usize,
    pub terminal: bool,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub step: u64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// The episode budget or horizon was used up.
    Finished,
    /// The client asked to end.
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEnd {
    pub reason: EndReason,
    pub total_steps: u64,
    pub feedback_count: u64,
    pub cf_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
    /// Name of the grid rule an edit broke.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<GridRule>,
    /// The step the rejected message referred to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum ServerMessage {
    StateUpdate(StateUpdate),
    AwaitingFeedback(AwaitingFeedback),
    EvalReport(EvalReport),
    SessionEnd(SessionEnd),
    Error(ErrorPayload),
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error(ErrorPayload {
            message: message.into(),
            rule: None,
            step: None,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServerMessage::StateUpdate(_) => "state_update",
            ServerMessage::AwaitingFeedback(_) => "awaiting_feedback",
            ServerMessage::EvalReport(_) => "eval_report",
            ServerMessage::SessionEnd(_) => "session_end",
            ServerMessage::Error(_) => "error",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Envelope {
            schema_version: SCHEMA_VERSION,
            message: self,
        })
        .expect("server messages serialise")
    }
}

/// A gridworld layout and agent pose drawn by the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEdit {
    pub width: usize,
    pub height: usize,
    /// Row-major, `cells[y * width + x]`; exactly one `goal`.
    pub cells: Vec<Cell>,
    pub agent_pos: (usize, usize),
    pub agent_dir: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CfPayload {
    /// "This action would have been right here."
    Action { action: usize },
    /// "Your action would have been right in this state."
    State { grid: StateEdit },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPayload {
    pub step: u64,
    pub f: Signal,
    #[serde(default)]
    pub cf: Option<CfPayload>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRef {
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Speed {
    /// How long each step waits for feedback before moving on; small values
    /// give an auto-skipping, free-running agent.
    pub feedback_timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum ClientMessage {
    Feedback(FeedbackPayload),
    Skip(StepRef),
    Pause,
    Resume,
    SetSpeed(Speed),
    End,
}

impl ClientMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&Envelope {
            schema_version: SCHEMA_VERSION,
            message: self,
        })
        .expect("client messages serialise")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub message: T,
}

fn check_frame(text: &str) -> Result<serde_json::Value, String> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value.as_object().ok_or("a frame must be a JSON object")?;
    if !obj.get("kind").is_some_and(|k| k.is_string()) {
        return Err("missing string field `kind`".into());
    }
    match obj.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => Ok(value),
        Some(v) => Err(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}")),
        None => Err("missing numeric field `schema_version`".into()),
    }
}

/// Parses one client frame, with a readable reason on failure.
pub fn parse_client(text: &str) -> Result<ClientMessage, String> {
    let value = check_frame(text)?;
    serde_json::from_value::<Envelope<ClientMessage>>(value)
        .map(|e| e.message)
        .map_err(|e| format!("invalid message: {e}"))
}

pub fn parse_server(text: &str) -> Result<ServerMessage, String> {
    let value = check_frame(text)?;
    serde_json::from_value::<Envelope<ServerMessage>>(value)
        .map(|e| e.message)
        .map_err(|e| format!("invalid message: {e}"))
}
