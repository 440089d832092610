//! Live training sessions over a WebSocket.
//!
//! Each connection drives one [`Session`]: after every environment step the
//! server sends the new state and asks for feedback on the previous pair. The
//! client answers with `+1`/`-1` (optionally with a counterfactual action or
//! an edited gridworld state), skips, or lets the timeout expire. Sessions are
//! snapshotted to `<data_dir>/<id>.json` on disconnect and resume from there.

pub mod protocol;
pub mod server;
pub mod session;

use std::path::{Path, PathBuf};
use thiserror::Error;

pub use protocol::{ClientMessage, Phase, ServerMessage, SCHEMA_VERSION};
pub use server::{router, serve, AppState, Health, ServeSettings};
pub use session::{apply_state_edit, build_event, Session};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("snapshot schema_version {0:?} is not supported")]
    Version(Option<u64>),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot set up session: {0}")]
    Setup(String),
}

impl SessionError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        SessionError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
