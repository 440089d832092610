//! One live training session as a synchronous state machine. The socket
//! layer feeds it client messages and timeouts and forwards what it returns.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use cftamer::envs::{EnvState, Environment, GridRule, GridState, Observation};
use cftamer::tamer::{
    CfTarget, Counterfactual, FeedbackEvent, PendingPair, Progress, Signal, TrainingRun,
};

use crate::protocol::{
    AwaitingFeedback, CfPayload, ClientMessage, EndReason, ErrorPayload, EvalReport,
    FeedbackPayload, Phase, ServerMessage, SessionEnd, StateEdit, StateUpdate, SCHEMA_VERSION,
};
use crate::SessionError;

/// Re-encodes an edited layout from the edited agent pose. Step counters and
/// view size come from `base`, the state the edit started from.
pub fn apply_state_edit(base: &GridState, edit: &StateEdit) -> Result<Observation, GridRule> {
    if edit.width != base.width || edit.height != base.height {
        return Err(GridRule::Dimensions);
    }
    if edit.cells.len() != edit.width * edit.height {
        return Err(GridRule::Dimensions);
    }
    let mut goals = edit
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == cftamer::envs::Cell::Goal)
        .map(|(i, _)| i);
    let goal = match (goals.next(), goals.next()) {
        (Some(g), None) => g,
        _ => return Err(GridRule::SingleGoal),
    };
    let state = GridState {
        width: edit.width,
        height: edit.height,
        cells: edit.cells.clone(),
        agent_pos: edit.agent_pos,
        agent_dir: edit.agent_dir,
        goal_pos: (goal % edit.width, goal / edit.width),
        steps_taken: base.steps_taken,
        max_steps: base.max_steps,
        view_size: base.view_size,
    };
    state.validate()?;
    Ok(state.encode())
}

/// Why a feedback message was not applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub message: String,
    pub rule: Option<GridRule>,
}

impl Rejection {
    fn new(message: impl Into<String>) -> Self {
        Rejection {
            message: message.into(),
            rule: None,
        }
    }
}

/// Turns a client answer into a feedback event on `pending`. Counterfactuals
/// are always upward: they need `f = -1` and are applied with `f_cf = +1`.
pub fn build_event(
    pending: &PendingPair,
    n_actions: usize,
    f: Signal,
    cf: Option<&CfPayload>,
) -> Result<FeedbackEvent, Rejection> {
    let Some(cf) = cf else {
        return Ok(FeedbackEvent::plain(f, pending.state.clone(), pending.action));
    };
    if f != Signal::Negative {
        return Err(Rejection::new("counterfactuals are only accepted with f = -1"));
    }
    let target = match cf {
        CfPayload::Action { action } => {
            if *action >= n_actions {
                return Err(Rejection::new(format!(
                    "action {action} is out of range (0..{n_actions})"
                )));
            }
            if *action == pending.action {
                return Err(Rejection::new(
                    "the counterfactual action must differ from the action taken",
                ));
            }
            CfTarget::Action { action: *action }
        }
        CfPayload::State { grid } => {
            let EnvState::Grid(base) = &pending.hidden else {
                return Err(Rejection::new("state edits are supported for gridworld only"));
            };
            let state = apply_state_edit(base, grid).map_err(|rule| Rejection {
                message: format!("edited grid violates rule `{rule}`"),
                rule: Some(rule),
            })?;
            CfTarget::State { state }
        }
    };
    Ok(FeedbackEvent::with_counterfactual(
        f,
        pending.state.clone(),
        pending.action,
        Counterfactual {
            f_cf: Signal::Positive,
            target,
        },
        true,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub schema_version: u32,
    id: String,
    phase: Phase,
    feedback_timeout_ms: u64,
    /// Send an eval report every this many env steps; 0 disables them.
    eval_interval: u64,
    last_action: Option<usize>,
    run: TrainingRun,
}

impl Session {
    pub fn new(id: String, run: TrainingRun, feedback_timeout_ms: u64, eval_interval: u64) -> Self {
        Session {
            schema_version: SCHEMA_VERSION,
            id,
            phase: Phase::Stepping,
            feedback_timeout_ms,
            eval_interval,
            last_action: None,
            run,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn run(&self) -> &TrainingRun {
        &self.run
    }

    pub fn feedback_timeout_ms(&self) -> u64 {
        self.feedback_timeout_ms
    }

    /// Step of the pair feedback is wanted for, while awaiting it.
    pub fn awaiting_step(&self) -> Option<u64> {
        match self.phase {
            Phase::AwaitingFeedback => self.run.pending().map(|p| p.step),
            _ => None,
        }
    }

    fn state_update(&self) -> ServerMessage {
        let current = self.run.current();
        let h_values = current
            .and_then(|(obs, _)| self.run.model().h_values(obs).ok())
            .unwrap_or_else(|| vec![0.0; self.run.env().action_count()]);
        ServerMessage::StateUpdate(StateUpdate {
            session_id: self.id.clone(),
            phase: self.phase,
            episode: self.run.episode(),
            step: self.run.total_steps(),
            state: current.map(|(_, s)| s.clone()),
            last_action: self.last_action,
            action_names: self
                .run
                .env()
                .id()
                .action_names()
                .iter()
                .map(|s| s.to_string())
                .collect(),
            h_values,
        })
    }

    fn awaiting(&self) -> Option<ServerMessage> {
        let p = self.run.pending()?;
        Some(ServerMessage::AwaitingFeedback(AwaitingFeedback {
            step: p.step,
            episode: p.episode,
            state: p.hidden.clone(),
            action: p.action,
            terminal: p.terminal,
            timeout_ms: self.feedback_timeout_ms,
        }))
    }

    fn session_end(&self, reason: EndReason) -> ServerMessage {
        let log = self.run.log();
        ServerMessage::SessionEnd(SessionEnd {
            reason,
            total_steps: log.total_steps,
            feedback_count: log.feedback_count,
            cf_count: log.cf_count,
        })
    }

    /// Runs the loop to the next feedback request (or the end) and reports.
    fn step(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        match self.run.advance() {
            Ok(Progress::AwaitingFeedback) => {
                self.phase = Phase::AwaitingFeedback;
                self.last_action = self.run.pending().map(|p| p.action);
                let step = self.run.total_steps();
                if self.eval_interval > 0 && step % self.eval_interval == 0 {
                    if let Some(ev) = self.run.evaluator() {
                        match ev.evaluate(self.run.model()) {
                            Ok(score) => out.push(ServerMessage::EvalReport(EvalReport { step, score })),
                            Err(e) => out.push(ServerMessage::error(format!("evaluation failed: {e}"))),
                        }
                    }
                }
                out.push(self.state_update());
                out.extend(self.awaiting());
            }
            Ok(Progress::Finished) => {
                self.phase = Phase::Ended;
                out.push(self.state_update());
                out.push(self.session_end(EndReason::Finished));
            }
            Err(e) => {
                self.phase = Phase::Ended;
                out.push(ServerMessage::error(format!("training stopped: {e}")));
                out.push(self.session_end(EndReason::Finished));
            }
        }
        out
    }

    /// Messages for a freshly (re)connected client. A paused session resumes.
    pub fn connect(&mut self) -> Vec<ServerMessage> {
        if self.phase == Phase::Paused {
            self.resume_phase();
        }
        match self.phase {
            Phase::Stepping => self.step(),
            Phase::AwaitingFeedback => {
                let mut out = vec![self.state_update()];
                out.extend(self.awaiting());
                out
            }
            Phase::Ended | Phase::Paused => vec![self.state_update(), self.session_end(EndReason::Ended)],
        }
    }

    fn resume_phase(&mut self) {
        self.phase = if self.run.pending().is_some() {
            Phase::AwaitingFeedback
        } else if self.run.is_finished() {
            Phase::Ended
        } else {
            Phase::Stepping
        };
    }

    /// The client went away: park the session.
    pub fn disconnect(&mut self) {
        if self.phase != Phase::Ended {
            self.phase = Phase::Paused;
        }
    }

    /// The feedback window for `step` closed. Same as a skip.
    pub fn timeout(&mut self, step: u64) -> Vec<ServerMessage> {
        if self.awaiting_step() != Some(step) {
            return Vec::new();
        }
        self.answer(step, None)
    }

    fn answer(&mut self, step: u64, feedback: Option<(Signal, Option<CfPayload>)>) -> Vec<ServerMessage> {
        let reject = |message: String, rule: Option<GridRule>| {
            vec![ServerMessage::Error(ErrorPayload {
                message,
                rule,
                step: Some(step),
            })]
        };
        if self.phase != Phase::AwaitingFeedback {
            return reject(format!("not awaiting feedback (phase {:?})", self.phase), None);
        }
        let Some(pending) = self.run.pending() else {
            return reject("not awaiting feedback".into(), None);
        };
        if pending.step != step {
            return reject(
                format!("stale step {step}: feedback is pending for step {}", pending.step),
                None,
            );
        }
        let event = match feedback {
            None => None,
            Some((f, cf)) => {
                let n = self.run.env().action_count();
                match build_event(pending, n, f, cf.as_ref()) {
                    Ok(e) => Some(e),
                    Err(r) => return reject(r.message, r.rule),
                }
            }
        };
        if let Err(e) = self.run.submit_feedback(event) {
            return reject(e.to_string(), None);
        }
        self.phase = Phase::Stepping;
        self.step()
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Feedback(FeedbackPayload { step, f, cf }) => self.answer(step, Some((f, cf))),
            ClientMessage::Skip(s) => self.answer(s.step, None),
            ClientMessage::Pause => match self.phase {
                Phase::Ended => vec![ServerMessage::error("session has ended")],
                _ => {
                    self.phase = Phase::Paused;
                    vec![self.state_update()]
                }
            },
            ClientMessage::Resume => match self.phase {
                Phase::Paused => {
                    self.resume_phase();
                    self.connect()
                }
                _ => vec![ServerMessage::error("session is not paused")],
            },
            ClientMessage::SetSpeed(s) => {
                self.feedback_timeout_ms = s.feedback_timeout_ms;
                let mut out = vec![self.state_update()];
                if self.phase == Phase::AwaitingFeedback {
                    out.extend(self.awaiting());
                }
                out
            }
            ClientMessage::End => {
                self.phase = Phase::Ended;
                vec![self.session_end(EndReason::Ended)]
            }
        }
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string(self).expect("session serialises")
    }

    pub fn restore_json(text: &str) -> Result<Self, SessionError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SessionError::Corrupt(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            found => return Err(SessionError::Version(found)),
        }
        let session: Session =
            serde_json::from_value(value).map_err(|e| SessionError::Corrupt(e.to_string()))?;
        let pending = session.run.pending().is_some();
        let consistent = match session.phase {
            Phase::AwaitingFeedback => pending,
            Phase::Stepping => !pending,
            Phase::Paused | Phase::Ended => true,
        };
        if !consistent {
            return Err(SessionError::Corrupt(format!(
                "phase {:?} does not match the pending pair",
                session.phase
            )));
        }
        Ok(session)
    }

    pub fn snapshot_path(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.json"))
    }

    /// Writes `<dir>/<id>.json` via a temporary file and rename.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, SessionError> {
        fs::create_dir_all(dir).map_err(|e| SessionError::io(dir, e))?;
        let path = Self::snapshot_path(dir, &self.id);
        let tmp = dir.join(format!(".{}.tmp", self.id));
        fs::write(&tmp, self.snapshot_json()).map_err(|e| SessionError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| SessionError::io(&path, e))?;
        Ok(path)
    }

    pub fn load(dir: &Path, id: &str) -> Result<Self, SessionError> {
        let path = Self::snapshot_path(dir, id);
        let text = fs::read_to_string(&path).map_err(|e| SessionError::io(&path, e))?;
        Self::restore_json(&text)
    }
}
