use std::io::{BufReader, Write};
use std::net::TcpStream;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{decode, read_line, ErrorCode, Envelope, Message, ProtoError, ScenarioSummary, PROTOCOL_VERSION};
use crate::engine::Team;
use crate::env::TeamOutcome;
use crate::learners::Learner;
use crate::rng::{derived_rng, streams};

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub name: String,
    /// Requested team; any free slot when absent.
    pub team: Option<Team>,
    /// Seeds the policy stream of the assigned team.
    pub seed: u64,
    pub epsilon: f64,
    /// Leave with `bye` after this many complete episodes.
    pub max_episodes: Option<u64>,
    /// Version announced in `hello`.
    pub version: u32,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            name: "mirrorwar-client".into(),
            team: None,
            seed: 0,
            epsilon: 0.0,
            max_episodes: None,
            version: PROTOCOL_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: u64,
    pub outcome: TeamOutcome,
    pub steps: u32,
    /// Reward received after each step.
    pub rewards: Vec<f64>,
}

impl EpisodeResult {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub team: Team,
    pub scenario: ScenarioSummary,
    pub episodes: Vec<EpisodeResult>,
}

struct Current {
    episode: u64,
    steps: u32,
    rewards: Vec<f64>,
    last: Vec<Option<usize>>,
}

fn send(w: &mut TcpStream, version: u32, msg: &Message) -> Result<(), ProtoError> {
    let mut line = serde_json::to_string(&Envelope { v: version, msg: msg.clone() }).expect("messages always serialize");
    line.push('\n');
    w.write_all(line.as_bytes())?;
    Ok(w.flush()?)
}

/// Connects to `endpoint`, plays `policy` on the assigned team until the
/// server says `bye` (or `max_episodes` complete) and returns the finished
/// episodes. A connection that drops without `bye` discards the running
/// episode and surfaces [`ProtoError::ConnectionLost`].
pub fn client_loop(policy: &dyn Learner, endpoint: &str, config: &ClientConfig) -> Result<ClientReport, ProtoError> {
    let mut stream = TcpStream::connect(endpoint)?;
    let _ = stream.set_nodelay(true);
    let mut reader = BufReader::new(stream.try_clone()?);
    let hello = Message::Hello {
        team: config.team,
        name: config.name.clone(),
    };
    send(&mut stream, config.version, &hello)?;

    let lost = |completed: usize| ProtoError::ConnectionLost { completed };
    let first = read_line(&mut reader)?.ok_or(lost(0))?;
    let (team, scenario, n_agents) = match decode(&first)? {
        Message::Assign {
            team,
            scenario,
            n_agents,
            ..
        } => (team, scenario, n_agents),
        Message::Error { code, message } => {
            return Err(match code {
                ErrorCode::HandshakeVersionMismatch => ProtoError::HandshakeVersionMismatch {
                    expected: PROTOCOL_VERSION,
                    got: config.version,
                },
                ErrorCode::TeamSlotTaken if config.team.is_some() => {
                    ProtoError::TeamSlotTaken(config.team.expect("checked"))
                }
                code => ProtoError::Server { code, message },
            })
        }
        other => return Err(ProtoError::ProtocolViolation(format!("expected assign, got {other:?}"))),
    };
    debug!("{} assigned {team} on {}", config.name, scenario.name);
    let stream_id = match team {
        Team::Red => streams::RED_POLICY,
        Team::Blue => streams::BLUE_POLICY,
    };
    let mut rng = derived_rng(config.seed, stream_id, 0);
    let mut report = ClientReport {
        team,
        scenario,
        episodes: Vec::new(),
    };
    let mut current: Option<Current> = None;
    loop {
        let Some(line) = read_line(&mut reader)? else {
            return Err(lost(report.episodes.len()));
        };
        match decode(&line)? {
            Message::ResetAck { episode } => {
                current = Some(Current {
                    episode,
                    steps: 0,
                    rewards: Vec::new(),
                    last: vec![None; n_agents],
                });
            }
            Message::Obs {
                episode,
                step,
                observations,
                masks,
                reward,
                terminated,
                outcome,
            } => {
                let cur = current
                    .as_mut()
                    .filter(|c| c.episode == episode)
                    .ok_or_else(|| ProtoError::ProtocolViolation(format!("obs for episode {episode} without reset_ack")))?;
                if step > 0 {
                    cur.rewards.push(reward);
                }
                cur.steps = step;
                if terminated {
                    let outcome = outcome.ok_or_else(|| ProtoError::ProtocolViolation("terminal obs without outcome".into()))?;
                    let cur = current.take().expect("checked above");
                    report.episodes.push(EpisodeResult {
                        episode: cur.episode,
                        outcome,
                        steps: cur.steps,
                        rewards: cur.rewards,
                    });
                    if config.max_episodes.is_some_and(|n| report.episodes.len() as u64 >= n) {
                        send(&mut stream, config.version, &Message::Bye { reason: Some("done".into()) })?;
                        return Ok(report);
                    }
                    continue;
                }
                let actions = policy.act(&observations, &masks, &cur.last, config.epsilon, &mut rng)?;
                cur.last = actions.iter().copied().map(Some).collect();
                let act = Message::Act {
                    actions,
                    episode: Some(episode),
                    step: Some(step),
                };
                send(&mut stream, config.version, &act)?;
            }
            Message::Error {
                code: ErrorCode::ActTimeout,
                message,
            } => warn!("{message}"),
            Message::Error { code, message } => return Err(ProtoError::Server { code, message }),
            Message::Bye { reason } => {
                debug!("server closed the session: {reason:?}");
                return Ok(report);
            }
            other => return Err(ProtoError::ProtocolViolation(format!("unexpected {other:?}"))),
        }
    }
}
