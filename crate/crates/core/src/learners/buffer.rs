//! Episodic replay storage.

use std::collections::VecDeque;

use rand::seq::index;

use crate::env::ActionMask;
use crate::rng::Rng;

/// One team's view of a finished episode.
///
/// Observations, states and masks hold `len + 1` time points (the last one
/// is the post-terminal view); actions and rewards hold `len`. Values are
/// stored as `f32` to keep a full buffer small.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub n_agents: usize,
    pub obs_len: usize,
    pub state_len: usize,
    pub n_actions: usize,
    pub obs: Vec<f32>,
    pub states: Vec<f32>,
    pub avail: Vec<bool>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminated: bool,
}

impl Episode {
    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs(&self, t: usize, agent: usize) -> &[f32] {
        let start = (t * self.n_agents + agent) * self.obs_len;
        &self.obs[start..start + self.obs_len]
    }

    pub fn state(&self, t: usize) -> &[f32] {
        &self.states[t * self.state_len..(t + 1) * self.state_len]
    }

    pub fn avail(&self, t: usize, agent: usize) -> &[bool] {
        let start = (t * self.n_agents + agent) * self.n_actions;
        &self.avail[start..start + self.n_actions]
    }

    pub fn action(&self, t: usize, agent: usize) -> usize {
        self.actions[t * self.n_agents + agent]
    }

    /// Previous action of `agent` at time `t` (`None` at `t = 0`).
    pub fn last_action(&self, t: usize, agent: usize) -> Option<usize> {
        (t > 0).then(|| self.action(t - 1, agent))
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Accumulates an episode step by step.
#[derive(Debug, Clone)]
pub struct EpisodeBuilder {
    episode: Episode,
}

impl EpisodeBuilder {
    pub fn new(n_agents: usize, obs_len: usize, state_len: usize, n_actions: usize) -> Self {
        EpisodeBuilder {
            episode: Episode {
                n_agents,
                obs_len,
                state_len,
                n_actions,
                obs: Vec::new(),
                states: Vec::new(),
                avail: Vec::new(),
                actions: Vec::new(),
                rewards: Vec::new(),
                terminated: false,
            },
        }
    }

    /// Records the view at the current time point.
    pub fn push_view(&mut self, observations: &[Vec<f64>], state: &[f64], masks: &[ActionMask]) {
        let ep = &mut self.episode;
        debug_assert_eq!(observations.len(), ep.n_agents);
        for o in observations {
            ep.obs.extend(o.iter().map(|&v| v as f32));
        }
        ep.states.extend(state.iter().map(|&v| v as f32));
        for m in masks {
            ep.avail.extend_from_slice(m);
        }
    }

    /// Records the joint action taken from the last pushed view and its reward.
    pub fn push_transition(&mut self, actions: &[usize], reward: f64) {
        self.episode.actions.extend_from_slice(actions);
        self.episode.rewards.push(reward);
    }

    pub fn views(&self) -> usize {
        self.episode.states.len() / self.episode.state_len.max(1)
    }

    pub fn finish(mut self, terminated: bool) -> Episode {
        self.episode.terminated = terminated;
        self.episode
    }
}

/// FIFO buffer of whole episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<Episode>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(1024)),
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn push(&mut self, episode: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    /// Samples `n` distinct episodes uniformly; `None` if fewer are stored.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Option<EpisodeBatch<'_>> {
        if self.episodes.len() < n || n == 0 {
            return None;
        }
        let picks = index::sample(rng, self.episodes.len(), n);
        Some(EpisodeBatch::new(picks.iter().map(|i| &self.episodes[i]).collect()))
    }
}

/// A minibatch of episodes, viewed as padded to the longest one: step `t`
/// of episode `b` is filled iff `t < episodes[b].len()`.
#[derive(Debug, Clone)]
pub struct EpisodeBatch<'a> {
    pub episodes: Vec<&'a Episode>,
    pub max_len: usize,
}

impl<'a> EpisodeBatch<'a> {
    pub fn new(episodes: Vec<&'a Episode>) -> Self {
        let max_len = episodes.iter().map(|e| e.len()).max().unwrap_or(0);
        EpisodeBatch { episodes, max_len }
    }

    pub fn filled(&self, b: usize, t: usize) -> bool {
        t < self.episodes[b].len()
    }

    /// Number of filled transitions.
    pub fn filled_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    /// Reward at `(b, t)`, zero on padding.
    pub fn reward(&self, b: usize, t: usize) -> f64 {
        if self.filled(b, t) {
            self.episodes[b].rewards[t]
        } else {
            0.0
        }
    }

    /// 1 on the final step of a terminated episode.
    pub fn terminal(&self, b: usize, t: usize) -> bool {
        let e = self.episodes[b];
        e.terminated && t + 1 == e.len()
    }
}
