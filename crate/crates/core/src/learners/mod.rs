//! Policies and trainers behind one [`Learner`] interface: the scripted bot, a
//! uniform-random policy, and the value-based learners IQL, VDN and QMIX-lite.

mod buffer;
mod checkpoint;
mod mixer;
mod scripted;
mod value;

pub use buffer::{Episode, EpisodeBatch, EpisodeBuilder, ReplayBuffer};
pub use checkpoint::{Checkpoint, CheckpointManifest, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use mixer::{MixerKind, QmixMixer};
pub use scripted::{RandomPolicy, ScriptedBot};
pub use value::{vdn_mix, ValueLearner};

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Team;
use crate::env::{ActionMask, Env, ObsLayout, TeamInfo};
use crate::nn::NnError;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Bot,
    Random,
    Iql,
    Vdn,
    Qmix,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Bot, Algo::Random, Algo::Iql, Algo::Vdn, Algo::Qmix];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Bot => "bot",
            Algo::Random => "random",
            Algo::Iql => "iql",
            Algo::Vdn => "vdn",
            Algo::Qmix => "qmix",
        }
    }

    pub fn is_trainable(self) -> bool {
        matches!(self, Algo::Iql | Algo::Vdn | Algo::Qmix)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Algo, LearnerError> {
        match s.to_ascii_lowercase().as_str() {
            "bot" | "scripted" => Ok(Algo::Bot),
            "random" => Ok(Algo::Random),
            "iql" => Ok(Algo::Iql),
            "vdn" => Ok(Algo::Vdn),
            "qmix" | "qmix-lite" => Ok(Algo::Qmix),
            _ => Err(LearnerError::UnknownAlgo(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("no available action")]
    NoAvailableAction,
    #[error("unknown algorithm {0:?}")]
    UnknownAlgo(String),
    #[error("{0} has no trainable parameters")]
    NotTrainable(Algo),
    #[error("checkpoint was built for {found}, not {expected}")]
    CheckpointScenarioMismatch { expected: String, found: String },
    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),
    #[error("invalid learner config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Hyperparameters shared by the value-based learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_interval: u64,
    pub grad_clip: f64,
    pub eps_start: f64,
    pub eps_finish: f64,
    pub eps_anneal_steps: u64,
    pub double_q: bool,
    pub mixer_embed: usize,
    pub mixer: MixerKind,
    /// When false the mixer stays at its initial weights (used for the
    /// identity-mixer reduction).
    pub train_mixer: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            hidden: vec![64, 64],
            lr: 5e-4,
            gamma: 0.99,
            batch_size: 32,
            buffer_capacity: 5000,
            target_interval: 200,
            grad_clip: 10.0,
            eps_start: 1.0,
            eps_finish: 0.05,
            eps_anneal_steps: 50_000,
            double_q: false,
            mixer_embed: 32,
            mixer: MixerKind::TwoLayer,
            train_mixer: true,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidConfig(m.to_string()));
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("need 0 < batch_size <= buffer_capacity");
        }
        if self.target_interval == 0 {
            return bad("target_interval must be positive");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_finish) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if self.mixer_embed == 0 {
            return bad("mixer_embed must be positive");
        }
        Ok(())
    }

    /// Linear anneal from `eps_start` to `eps_finish` over `eps_anneal_steps`
    /// env steps.
    pub fn epsilon_at(&self, env_steps: u64) -> f64 {
        if self.eps_anneal_steps == 0 || env_steps >= self.eps_anneal_steps {
            return self.eps_finish;
        }
        let frac = env_steps as f64 / self.eps_anneal_steps as f64;
        self.eps_start + (self.eps_finish - self.eps_start) * frac
    }
}

/// Static description of the team a learner controls.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamSpec {
    pub scenario: String,
    pub info: TeamInfo,
    pub layout: ObsLayout,
}

impl TeamSpec {
    pub fn of(env: &Env, team: Team) -> TeamSpec {
        TeamSpec {
            scenario: env.scenario().name.clone(),
            info: env.team_info(team),
            layout: env.obs_layout(team).clone(),
        }
    }
}

/// Common behavior of every policy, trainable or not.
pub trait Learner: Send {
    fn algo(&self) -> Algo;

    /// Chooses one action per agent. `last_actions[i]` is agent `i`'s previous
    /// action (`None` at the first step).
    fn act(
        &self,
        observations: &[Vec<f64>],
        masks: &[ActionMask],
        last_actions: &[Option<usize>],
        epsilon: f64,
        rng: &mut Rng,
    ) -> Result<Vec<usize>, LearnerError>;

    /// Stores a finished episode; ignored by frozen or parameter-free policies.
    fn observe(&mut self, _episode: Episode) {}

    /// One optimization step, if enough data is buffered.
    fn train_step(&mut self) -> Option<f64> {
        None
    }

    fn is_frozen(&self) -> bool {
        true
    }

    fn freeze(&mut self) {}

    fn param_hash(&self) -> String;

    fn checkpoint(&self) -> Option<Checkpoint> {
        None
    }

    /// Episodes buffered for training.
    fn buffered(&self) -> usize {
        0
    }

    fn clone_box(&self) -> Box<dyn Learner>;
}

impl Clone for Box<dyn Learner> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Epsilon-greedy selection: with probability `epsilon` a uniformly random
/// available action, otherwise the masked argmax (ties to the lowest code).
pub fn epsilon_greedy(q: &[f64], mask: &[bool], epsilon: f64, rng: &mut Rng) -> Result<usize, LearnerError> {
    if !mask.iter().any(|&b| b) {
        return Err(LearnerError::NoAvailableAction);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(uniform_available(mask, rng));
    }
    Ok(masked_argmax(q, mask).expect("checked above"))
}

pub fn masked_argmax(q: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (a, (&v, &ok)) in q.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
}

pub fn masked_max(q: &[f64], mask: &[bool]) -> f64 {
    q.iter()
        .zip(mask)
        .filter(|(_, &ok)| ok)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn uniform_available(mask: &[bool], rng: &mut Rng) -> usize {
    let n = mask.iter().filter(|&&b| b).count();
    let k = rng.random_range(0..n);
    mask.iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .nth(k)
        .map(|(a, _)| a)
        .expect("k < n")
}

/// Builds a fresh policy for `team`. `seed` drives network initialization and
/// minibatch sampling.
pub fn build_learner(algo: Algo, team: &TeamSpec, config: &LearnerConfig, seed: u64) -> Result<Box<dyn Learner>, LearnerError> {
    Ok(match algo {
        Algo::Bot => Box::new(ScriptedBot::new(team.layout.clone())),
        Algo::Random => Box::new(RandomPolicy),
        Algo::Iql | Algo::Vdn | Algo::Qmix => Box::new(ValueLearner::new(algo, team, config.clone(), seed)?),
    })
}

/// Restores a learner from a checkpoint, checking it fits `team`.
pub fn load_learner(checkpoint: Checkpoint, team: &TeamSpec, frozen: bool) -> Result<Box<dyn Learner>, LearnerError> {
    checkpoint.check_compatible(team)?;
    let mut learner = ValueLearner::from_checkpoint(checkpoint, team)?;
    if frozen {
        learner.freeze();
    }
    Ok(Box::new(learner))
}
