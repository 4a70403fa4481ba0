//! Parameter-free policies: the focus-fire scripted bot and uniform random.

use sha2::{Digest, Sha256};

use super::{uniform_available, Algo, Learner, LearnerError};
use crate::env::{ActionMask, ObsLayout, ACTION_EAST, ACTION_NOOP, ACTION_STOP, TARGET_BASE};
use crate::rng::Rng;

fn name_hash(name: &str) -> String {
    hex::encode(Sha256::digest(name.as_bytes()))
}

/// Built-in-AI stand-in working only from its team's observations:
///
/// - attackers focus the visible enemy with the lowest health + shield
///   (lowest index on ties);
/// - healers heal the visible damaged ally with the lowest health;
/// - otherwise advance east (the canonical attacking direction), else stop.
#[derive(Debug, Clone)]
pub struct ScriptedBot {
    layout: ObsLayout,
}

impl ScriptedBot {
    pub fn new(layout: ObsLayout) -> Self {
        ScriptedBot { layout }
    }

    fn enemy_pool(&self, obs: &[f64], k: usize) -> f64 {
        if k >= self.layout.n_enemies {
            return f64::INFINITY;
        }
        let base = self.layout.enemy_offset(k);
        let w = self.layout.type_width();
        match self.layout.decode_type(&obs[base + 6..base + 6 + w]) {
            Some(kind) => {
                let s = kind.spec();
                obs[base + 4] * s.max_health + obs[base + 5] * s.max_shield
            }
            None => f64::INFINITY,
        }
    }

    /// Absolute health of team member `k` as seen by `agent`, with its max.
    fn ally_health(&self, obs: &[f64], agent: usize, k: usize) -> Option<(f64, f64)> {
        let j = match k.cmp(&agent) {
            std::cmp::Ordering::Less => k,
            std::cmp::Ordering::Equal => return None,
            std::cmp::Ordering::Greater => k - 1,
        };
        if j >= self.layout.n_allies {
            return None;
        }
        let base = self.layout.ally_offset(j);
        let w = self.layout.type_width();
        let kind = self.layout.decode_type(&obs[base + 5..base + 5 + w])?;
        let max = kind.spec().max_health;
        Some((obs[base + 3] * max, max))
    }

    fn is_healer(&self, obs: &[f64]) -> bool {
        let base = self.layout.own_offset() + 2;
        let w = self.layout.type_width();
        self.layout
            .decode_type(&obs[base..base + w])
            .is_some_and(|k| k.spec().is_healer)
    }

    pub fn choose(&self, obs: &[f64], mask: &ActionMask, agent: usize) -> usize {
        if mask[ACTION_NOOP] && !mask[ACTION_STOP] {
            return ACTION_NOOP;
        }
        let targets = (TARGET_BASE..mask.len()).filter(|&c| mask[c]).map(|c| c - TARGET_BASE);
        if self.is_healer(obs) {
            let mut best: Option<(usize, f64)> = None;
            for k in targets {
                if let Some((h, max)) = self.ally_health(obs, agent, k) {
                    if h < max && best.is_none_or(|(_, bh)| h < bh) {
                        best = Some((k, h));
                    }
                }
            }
            if let Some((k, _)) = best {
                return TARGET_BASE + k;
            }
        } else {
            let mut best: Option<(usize, f64)> = None;
            for k in targets {
                let pool = self.enemy_pool(obs, k);
                if best.is_none_or(|(_, bp)| pool < bp) {
                    best = Some((k, pool));
                }
            }
            if let Some((k, _)) = best {
                return TARGET_BASE + k;
            }
        }
        if mask[ACTION_EAST] {
            ACTION_EAST
        } else {
            ACTION_STOP
        }
    }
}

impl Learner for ScriptedBot {
    fn algo(&self) -> Algo {
        Algo::Bot
    }

    fn act(
        &self,
        observations: &[Vec<f64>],
        masks: &[ActionMask],
        _last_actions: &[Option<usize>],
        _epsilon: f64,
        _rng: &mut Rng,
    ) -> Result<Vec<usize>, LearnerError> {
        observations
            .iter()
            .zip(masks)
            .enumerate()
            .map(|(i, (o, m))| {
                if m.iter().any(|&b| b) {
                    Ok(self.choose(o, m, i))
                } else {
                    Err(LearnerError::NoAvailableAction)
                }
            })
            .collect()
    }

    fn param_hash(&self) -> String {
        name_hash("scripted-bot")
    }

    fn clone_box(&self) -> Box<dyn Learner> {
        Box::new(self.clone())
    }
}

/// Uniform over available actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Learner for RandomPolicy {
    fn algo(&self) -> Algo {
        Algo::Random
    }

    fn act(
        &self,
        _observations: &[Vec<f64>],
        masks: &[ActionMask],
        _last_actions: &[Option<usize>],
        _epsilon: f64,
        rng: &mut Rng,
    ) -> Result<Vec<usize>, LearnerError> {
        masks
            .iter()
            .map(|m| {
                if m.iter().any(|&b| b) {
                    Ok(uniform_available(m, rng))
                } else {
                    Err(LearnerError::NoAvailableAction)
                }
            })
            .collect()
    }

    fn param_hash(&self) -> String {
        name_hash("uniform-random")
    }

    fn clone_box(&self) -> Box<dyn Learner> {
        Box::new(*self)
    }
}
