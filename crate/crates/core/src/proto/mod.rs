//! Lockstep dual-team wire protocol. Newline-delimited JSON over TCP: a
//! server owns the environment and two team slots, clients submit one joint
//! action per observation. The global state never leaves the server.

mod client;
mod server;

pub use client::{client_loop, ClientConfig, ClientReport, EpisodeResult};
pub use server::{bind, episode_seed, serve, ServeConfig, ServeReport, SessionReport, Shutdown};

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Team;
use crate::env::{ActionMask, EnvError, TeamOutcome};
use crate::learners::LearnerError;

pub const PROTOCOL_VERSION: u32 = 1;
/// Environment variable consulted when no endpoint flag is given.
pub const ENDPOINT_ENV: &str = "MIRRORWAR_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "127.0.0.1:7878";

/// Flag value, else `$MIRRORWAR_ENDPOINT`, else the default address.
pub fn resolve_endpoint(flag: Option<&str>) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    HandshakeVersionMismatch,
    TeamSlotTaken,
    MalformedMessage,
    ActTimeout,
    UnavailableAction,
    ProtocolViolation,
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub red_units: usize,
    pub blue_units: usize,
    pub symmetric: bool,
    pub episode_step_limit: u32,
}

/// One protocol message. On the wire each is a single JSON line carrying
/// `"v":1` and a `type` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    Hello {
        /// Requested team; the first free slot when absent.
        #[serde(default)]
        team: Option<Team>,
        name: String,
    },
    Assign {
        team: Team,
        scenario: ScenarioSummary,
        obs_len: usize,
        n_actions: usize,
        n_agents: usize,
    },
    Obs {
        episode: u64,
        step: u32,
        observations: Vec<Vec<f64>>,
        masks: Vec<ActionMask>,
        reward: f64,
        terminated: bool,
        #[serde(default)]
        outcome: Option<TeamOutcome>,
    },
    Act {
        actions: Vec<usize>,
        /// Echo of the observation being answered; stale answers are dropped.
        #[serde(default)]
        episode: Option<u64>,
        #[serde(default)]
        step: Option<u32>,
    },
    ResetAck {
        episode: u64,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
    Bye {
        #[serde(default)]
        reason: Option<String>,
    },
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    v: u32,
    #[serde(flatten)]
    msg: Message,
}

#[derive(Debug, Error)]
pub enum ProtoError {
    #[error("protocol version mismatch: expected {expected}, got {got}")]
    HandshakeVersionMismatch { expected: u32, got: u32 },
    #[error("{0} slot is already taken")]
    TeamSlotTaken(Team),
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("{0} missed the action deadline")]
    ActTimeout(Team),
    #[error("connection lost after {completed} complete episodes")]
    ConnectionLost { completed: usize },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("server error {code}: {message}")]
    Server { code: ErrorCode, message: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Encodes `msg` as one line, without the trailing newline.
pub fn encode(msg: &Message) -> String {
    serde_json::to_string(&Envelope {
        v: PROTOCOL_VERSION,
        msg: msg.clone(),
    })
    .expect("messages always serialize")
}

/// Decodes one line. A well-formed message with the wrong `v` is reported as
/// a version mismatch, anything unparseable as malformed.
pub fn decode(line: &str) -> Result<Message, ProtoError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| ProtoError::MalformedMessage(e.to_string()))?;
    let v = value
        .get("v")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ProtoError::MalformedMessage("missing protocol version".into()))?;
    if v != u64::from(PROTOCOL_VERSION) {
        return Err(ProtoError::HandshakeVersionMismatch {
            expected: PROTOCOL_VERSION,
            got: u32::try_from(v).unwrap_or(u32::MAX),
        });
    }
    let env: Envelope = serde_json::from_value(value).map_err(|e| ProtoError::MalformedMessage(e.to_string()))?;
    Ok(env.msg)
}

pub(crate) fn write_message(w: &mut impl Write, msg: &Message) -> std::io::Result<()> {
    let mut line = encode(msg);
    line.push('\n');
    w.write_all(line.as_bytes())?;
    w.flush()
}

/// Next non-empty line, `None` at end of stream.
pub(crate) fn read_line(r: &mut impl BufRead) -> std::io::Result<Option<String>> {
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        let t = line.trim();
        if !t.is_empty() {
            return Ok(Some(t.to_string()));
        }
    }
}
