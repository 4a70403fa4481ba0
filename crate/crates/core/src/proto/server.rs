use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown as NetShutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde_json::json;

use super::{decode, read_line, write_message, ErrorCode, Message, ProtoError, ScenarioSummary};
use crate::engine::{EngineConfig, Outcome, Team};
use crate::env::{Env, EnvError, RewardConfig, TeamStepResult};
use crate::learners::{Learner, ScriptedBot};
use crate::rng::{derive_seed, derived_rng, streams, Rng};
use crate::scenario::ScenarioSpec;

const POLL: Duration = Duration::from_millis(20);

/// Layout seed of episode `index` in a session started from `seed`. An
/// in-process loop using the same seeds replays a served session exactly.
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, streams::EPISODE_LAYOUT, index)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub scenario: ScenarioSpec,
    pub engine: EngineConfig,
    pub reward: RewardConfig,
    pub seed: u64,
    /// Episodes per session; unbounded when absent.
    pub episodes: Option<u64>,
    /// Team played by an in-process scripted bot instead of a client.
    pub internal_bot: Option<Team>,
    /// Per-step deadline for `act`; a team that misses it forfeits the episode.
    pub act_timeout: Option<Duration>,
    /// Stop after this many sessions; serve forever when absent.
    pub max_sessions: Option<usize>,
    /// NDJSON log of every message in and out.
    pub transcript: Option<PathBuf>,
}

impl ServeConfig {
    pub fn new(scenario: ScenarioSpec) -> Self {
        ServeConfig {
            scenario,
            engine: EngineConfig::default(),
            reward: RewardConfig::default(),
            seed: 0,
            episodes: None,
            internal_bot: None,
            act_timeout: None,
            max_sessions: None,
            transcript: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionReport {
    pub outcomes: Vec<Outcome>,
    pub forfeits: usize,
    pub env_steps: u64,
    pub end_reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServeReport {
    pub sessions: Vec<SessionReport>,
}

/// Cooperative stop signal for [`serve`].
#[derive(Debug, Clone, Default)]
pub struct Shutdown(Arc<AtomicBool>);

impl Shutdown {
    pub fn trigger(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_triggered(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

pub fn bind(addr: impl ToSocketAddrs) -> Result<TcpListener, ProtoError> {
    Ok(TcpListener::bind(addr)?)
}

enum Event {
    Connected(u64, TcpStream),
    Line(u64, String),
    Closed(u64),
}

enum Poll {
    Event(Event),
    Timeout,
    Shutdown,
}

enum SessionEnd {
    Finished(String),
    Shutdown,
}

fn spawn_acceptor(listener: TcpListener, tx: Sender<Event>, stop: Arc<AtomicBool>) -> Result<(), ProtoError> {
    listener.set_nonblocking(true)?;
    thread::spawn(move || {
        let mut next_id = 0u64;
        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    debug!("connection from {peer}");
                    let id = next_id;
                    next_id += 1;
                    let (Ok(()), Ok(read_half)) = (stream.set_nonblocking(false), stream.try_clone()) else {
                        continue;
                    };
                    let _ = stream.set_nodelay(true);
                    if tx.send(Event::Connected(id, stream)).is_err() {
                        return;
                    }
                    let tx = tx.clone();
                    thread::spawn(move || {
                        let mut r = BufReader::new(read_half);
                        while let Ok(Some(line)) = read_line(&mut r) {
                            if tx.send(Event::Line(id, line)).is_err() {
                                return;
                            }
                        }
                        let _ = tx.send(Event::Closed(id));
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
                Err(e) => {
                    warn!("accept failed: {e}");
                    thread::sleep(Duration::from_millis(20));
                }
            }
        }
    });
    Ok(())
}

struct StopOnDrop(Arc<AtomicBool>);

impl Drop for StopOnDrop {
    fn drop(&mut self) {
        self.0.store(true, Ordering::SeqCst);
    }
}

/// Runs sessions on `listener` until `max_sessions` have finished or
/// `shutdown` is triggered. Each session pairs two clients (or one client and
/// the internal bot), then plays episodes back to back, resetting
/// automatically after each terminal step.
pub fn serve(listener: TcpListener, config: &ServeConfig, shutdown: &Shutdown) -> Result<ServeReport, ProtoError> {
    if config.act_timeout.is_some_and(|t| t.is_zero()) {
        return Err(ProtoError::InvalidConfig("act timeout must be positive".into()));
    }
    let env = Env::new(config.scenario.clone(), config.engine.clone(), config.reward.clone())?;
    let stop = Arc::new(AtomicBool::new(false));
    let _guard = StopOnDrop(stop.clone());
    let (tx, rx) = channel();
    spawn_acceptor(listener, tx, stop)?;
    let transcript = match &config.transcript {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let mut server = Server {
        cfg: config,
        rx,
        shutdown,
        env,
        conns: HashMap::new(),
        slots: [None, None],
        transcript,
        session: 0,
    };
    let mut report = ServeReport::default();
    while config.max_sessions.is_none_or(|m| report.sessions.len() < m) {
        let (session, end) = server.run_session()?;
        let stopping = matches!(end, SessionEnd::Shutdown);
        report.sessions.push(session);
        server.session += 1;
        if stopping {
            break;
        }
    }
    if let Some(t) = &mut server.transcript {
        t.flush()?;
    }
    Ok(report)
}

struct Server<'a> {
    cfg: &'a ServeConfig,
    rx: Receiver<Event>,
    shutdown: &'a Shutdown,
    env: Env,
    conns: HashMap<u64, TcpStream>,
    slots: [Option<u64>; 2],
    transcript: Option<BufWriter<File>>,
    session: usize,
}

impl Server<'_> {
    fn log(&mut self, dir: &str, id: u64, msg: &Message) {
        let team = self.team_of(id).map(|t| t.as_str());
        if let Some(t) = &mut self.transcript {
            let rec = json!({"session": self.session, "dir": dir, "conn": id, "team": team, "msg": msg});
            if writeln!(t, "{rec}").is_err() {
                warn!("transcript write failed");
            }
        }
    }

    fn team_of(&self, id: u64) -> Option<Team> {
        Team::BOTH.into_iter().find(|t| self.slots[t.index()] == Some(id))
    }

    fn send(&mut self, id: u64, msg: &Message) {
        self.log("out", id, msg);
        if let Some(s) = self.conns.get_mut(&id) {
            if let Err(e) = write_message(s, msg) {
                debug!("write to {id} failed: {e}");
            }
        }
    }

    fn send_error(&mut self, id: u64, code: ErrorCode, message: impl Into<String>) {
        self.send(
            id,
            &Message::Error {
                code,
                message: message.into(),
            },
        );
    }

    fn drop_conn(&mut self, id: u64) {
        if let Some(s) = self.conns.remove(&id) {
            let _ = s.shutdown(NetShutdown::Both);
        }
        for slot in &mut self.slots {
            if *slot == Some(id) {
                *slot = None;
            }
        }
    }

    fn poll(&mut self, deadline: Option<Instant>) -> Poll {
        loop {
            if self.shutdown.is_triggered() {
                return Poll::Shutdown;
            }
            let wait = match deadline {
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Poll::Timeout;
                    }
                    (d - now).min(POLL)
                }
                None => POLL,
            };
            match self.rx.recv_timeout(wait) {
                Ok(ev) => return Poll::Event(ev),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return Poll::Shutdown,
            }
        }
    }

    fn remote(&self, team: Team) -> bool {
        self.cfg.internal_bot != Some(team)
    }

    fn seated(&self) -> bool {
        Team::BOTH
            .into_iter()
            .all(|t| !self.remote(t) || self.slots[t.index()].is_some())
    }

    fn summary(&self) -> ScenarioSummary {
        let s = self.env.scenario();
        ScenarioSummary {
            name: s.name.clone(),
            red_units: s.team_size(Team::Red),
            blue_units: s.team_size(Team::Blue),
            symmetric: s.symmetric,
            episode_step_limit: s.episode_step_limit,
        }
    }

    /// Handles a line from a connection that has not been seated yet.
    fn handshake(&mut self, id: u64, line: &str) {
        let msg = match decode(line) {
            Ok(m) => m,
            Err(ProtoError::HandshakeVersionMismatch { expected, got }) => {
                self.send_error(
                    id,
                    ErrorCode::HandshakeVersionMismatch,
                    format!("server speaks v{expected}, client sent v{got}"),
                );
                return self.drop_conn(id);
            }
            Err(e) => {
                self.send_error(id, ErrorCode::MalformedMessage, e.to_string());
                return self.drop_conn(id);
            }
        };
        self.log("in", id, &msg);
        let Message::Hello { team, name } = msg else {
            self.send_error(id, ErrorCode::ProtocolViolation, "expected hello");
            return self.drop_conn(id);
        };
        let free = |t: Team| self.remote(t) && self.slots[t.index()].is_none();
        let seat = match team {
            Some(t) if free(t) => Some(t),
            Some(_) => None,
            None => Team::BOTH.into_iter().find(|&t| free(t)),
        };
        let Some(seat) = seat else {
            let what = team.map_or("no team slot is free".to_string(), |t| format!("{t} slot is taken"));
            self.send_error(id, ErrorCode::TeamSlotTaken, what);
            return self.drop_conn(id);
        };
        info!("client {name:?} seated as {seat}");
        self.slots[seat.index()] = Some(id);
        let ti = self.env.team_info(seat);
        let assign = Message::Assign {
            team: seat,
            scenario: self.summary(),
            obs_len: ti.obs_len,
            n_actions: ti.n_actions,
            n_agents: ti.n_agents,
        };
        self.send(id, &assign);
    }

    /// Common handling of connection events. Returns the seated team and
    /// message for lines from seated clients.
    fn route(&mut self, ev: Event) -> Result<Option<(Team, Message)>, SessionEnd> {
        match ev {
            Event::Connected(id, stream) => {
                self.conns.insert(id, stream);
                Ok(None)
            }
            Event::Closed(id) => match self.team_of(id) {
                Some(t) => {
                    self.drop_conn(id);
                    Err(SessionEnd::Finished(format!("{t} disconnected")))
                }
                None => {
                    self.drop_conn(id);
                    Ok(None)
                }
            },
            Event::Line(id, line) => {
                let Some(team) = self.team_of(id) else {
                    if self.conns.contains_key(&id) {
                        self.handshake(id, &line);
                    }
                    return Ok(None);
                };
                match decode(&line) {
                    Ok(Message::Bye { reason }) => {
                        self.log("in", id, &Message::Bye { reason: reason.clone() });
                        self.drop_conn(id);
                        Err(SessionEnd::Finished(format!("{team} left")))
                    }
                    Ok(msg) => {
                        self.log("in", id, &msg);
                        Ok(Some((team, msg)))
                    }
                    Err(ProtoError::HandshakeVersionMismatch { got, .. }) => {
                        self.send_error(id, ErrorCode::HandshakeVersionMismatch, format!("unsupported version {got}"));
                        Ok(None)
                    }
                    Err(e) => {
                        self.send_error(id, ErrorCode::MalformedMessage, e.to_string());
                        Ok(None)
                    }
                }
            }
        }
    }

    fn close_session(&mut self, reason: &str) {
        for team in Team::BOTH {
            if let Some(id) = self.slots[team.index()] {
                self.send(
                    id,
                    &Message::Bye {
                        reason: Some(reason.to_string()),
                    },
                );
                self.drop_conn(id);
            }
        }
    }

    fn run_session(&mut self) -> Result<(SessionReport, SessionEnd), ProtoError> {
        let mut report = SessionReport::default();
        while !self.seated() {
            match self.poll(None) {
                Poll::Shutdown => {
                    self.close_session("server shutting down");
                    report.end_reason = "shutdown".into();
                    return Ok((report, SessionEnd::Shutdown));
                }
                Poll::Timeout => {}
                Poll::Event(ev) => match self.route(ev) {
                    Ok(Some((team, _))) => {
                        let id = self.slots[team.index()].expect("seated");
                        self.send_error(id, ErrorCode::ProtocolViolation, "waiting for the opponent");
                    }
                    Ok(None) => {}
                    // a seated client left before the first episode; keep waiting
                    Err(SessionEnd::Finished(why)) => debug!("{why} before start"),
                    Err(SessionEnd::Shutdown) => unreachable!("route never requests shutdown"),
                },
            }
        }
        let end = self.play(&mut report)?;
        let reason = match &end {
            SessionEnd::Finished(r) => r.clone(),
            SessionEnd::Shutdown => "server shutting down".to_string(),
        };
        self.close_session(&reason);
        report.end_reason = reason;
        Ok((report, end))
    }

    fn send_obs(&mut self, episode: u64, step: u32, results: [&TeamStepResult; 2]) {
        for team in Team::BOTH {
            if let Some(id) = self.slots[team.index()] {
                let r = results[team.index()];
                let msg = Message::Obs {
                    episode,
                    step,
                    observations: r.observations.clone(),
                    masks: r.masks.clone(),
                    reward: r.reward,
                    terminated: r.terminated,
                    outcome: r.outcome,
                };
                self.send(id, &msg);
            }
        }
    }

    fn play(&mut self, report: &mut SessionReport) -> Result<SessionEnd, ProtoError> {
        let bot_team = self.cfg.internal_bot;
        let bot = bot_team.map(|t| ScriptedBot::new(self.env.obs_layout(t).clone()));
        let mut bot_rng: Option<Rng> = bot_team.map(|t| {
            let stream = match t {
                Team::Red => streams::RED_POLICY,
                Team::Blue => streams::BLUE_POLICY,
            };
            derived_rng(self.cfg.seed, stream, 0)
        });
        let mut episode = 0u64;
        loop {
            if self.cfg.episodes.is_some_and(|n| episode >= n) {
                return Ok(SessionEnd::Finished("episodes complete".into()));
            }
            let (r, b) = self.env.reset(episode_seed(self.cfg.seed, episode))?;
            for id in self.slots.into_iter().flatten() {
                self.send(id, &Message::ResetAck { episode });
            }
            self.send_obs(episode, 0, [&r, &b]);
            let mut views = [r, b];
            let mut bot_last: Vec<Option<usize>> = bot_team.map_or(vec![], |t| vec![None; self.env.team_info(t).n_agents]);
            let mut step = 0u32;
            loop {
                let mut pending: [Option<Vec<usize>>; 2] = [None, None];
                if let (Some(t), Some(bot), Some(rng)) = (bot_team, &bot, &mut bot_rng) {
                    let v = &views[t.index()];
                    let a = bot.act(&v.observations, &v.masks, &bot_last, 0.0, rng)?;
                    bot_last = a.iter().copied().map(Some).collect();
                    pending[t.index()] = Some(a);
                }
                let deadline = self.cfg.act_timeout.map(|t| Instant::now() + t);
                let mut timed_out = false;
                while pending.iter().any(Option::is_none) {
                    let ev = match self.poll(deadline) {
                        Poll::Shutdown => return Ok(SessionEnd::Shutdown),
                        Poll::Timeout => {
                            timed_out = true;
                            break;
                        }
                        Poll::Event(ev) => ev,
                    };
                    let (team, msg) = match self.route(ev) {
                        Ok(Some(x)) => x,
                        Ok(None) => continue,
                        Err(end) => return Ok(end),
                    };
                    let id = self.slots[team.index()].expect("seated");
                    let Message::Act {
                        actions,
                        episode: ep,
                        step: st,
                    } = msg
                    else {
                        self.send_error(id, ErrorCode::ProtocolViolation, "expected act");
                        continue;
                    };
                    if ep.is_some_and(|e| e != episode) || st.is_some_and(|s| s != step) {
                        debug!("dropping stale act from {team}");
                        continue;
                    }
                    if pending[team.index()].is_some() {
                        self.send_error(id, ErrorCode::ProtocolViolation, "already acted this step");
                        continue;
                    }
                    match self.env.validate_actions(team, &actions) {
                        Ok(()) => pending[team.index()] = Some(actions),
                        Err(e @ EnvError::UnavailableAction { .. }) => {
                            self.send_error(id, ErrorCode::UnavailableAction, e.to_string())
                        }
                        Err(e) => self.send_error(id, ErrorCode::MalformedMessage, e.to_string()),
                    }
                }
                let (nr, nb) = if timed_out {
                    let late: Vec<Team> = Team::BOTH.into_iter().filter(|t| pending[t.index()].is_none()).collect();
                    for &t in &late {
                        if let Some(id) = self.slots[t.index()] {
                            self.send_error(id, ErrorCode::ActTimeout, "missed the action deadline; episode forfeited");
                        }
                    }
                    report.forfeits += 1;
                    match late.as_slice() {
                        [t] => self.env.forfeit(*t)?,
                        _ => self.env.end_episode(Outcome::Draw)?,
                    }
                } else {
                    let [Some(ra), Some(ba)] = pending else { unreachable!("loop exits when both acted") };
                    step += 1;
                    report.env_steps += 1;
                    self.env.step(&ra, &ba)?
                };
                self.send_obs(episode, step, [&nr, &nb]);
                let done = nr.terminated;
                views = [nr, nb];
                if done {
                    break;
                }
            }
            report.outcomes.push(self.env.outcome());
            episode += 1;
        }
    }
}
