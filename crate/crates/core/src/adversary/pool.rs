//! Frozen opponent pools for the mixed mode.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use super::{train_vs_bot, AdversaryError, TrainConfig};
use crate::engine::Team;
use crate::env::Env;
use crate::learners::{build_learner, Algo, Checkpoint, Learner, LearnerConfig, ScriptedBot, TeamSpec};
use crate::rng::derive_seed;

pub struct PoolMember {
    pub name: String,
    pub learner: Box<dyn Learner>,
}

impl PoolMember {
    pub fn new(name: impl Into<String>, learner: Box<dyn Learner>) -> Self {
        PoolMember {
            name: name.into(),
            learner,
        }
    }

    pub fn hash(&self) -> String {
        self.learner.param_hash()
    }
}

/// A non-empty set of frozen opponents with a sampling distribution
/// (uniform unless weights are given).
pub struct OpponentPool {
    members: Vec<PoolMember>,
    weights: Option<WeightedIndex<f64>>,
}

impl OpponentPool {
    pub fn new(members: Vec<PoolMember>) -> Result<Self, AdversaryError> {
        if members.is_empty() {
            return Err(AdversaryError::EmptyPool);
        }
        let pool = OpponentPool { members, weights: None };
        pool.check_frozen()?;
        Ok(pool)
    }

    pub fn with_weights(mut self, weights: &[f64]) -> Result<Self, AdversaryError> {
        if weights.len() != self.members.len() {
            return Err(AdversaryError::InvalidConfig("one weight per pool member".into()));
        }
        let w = WeightedIndex::new(weights.iter().copied())
            .map_err(|e| AdversaryError::InvalidConfig(format!("pool weights: {e}")))?;
        self.weights = Some(w);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[PoolMember] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &PoolMember {
        &self.members[i]
    }

    pub fn check_frozen(&self) -> Result<(), AdversaryError> {
        match self.members.iter().position(|m| !m.learner.is_frozen()) {
            Some(index) => Err(AdversaryError::MutablePoolMember {
                index,
                name: self.members[index].name.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut crate::rng::Rng) -> usize {
        match &self.weights {
            Some(w) => w.sample(rng),
            None => rng.random_range(0..self.members.len()),
        }
    }

    pub fn hashes(&self) -> Vec<String> {
        self.members.iter().map(PoolMember::hash).collect()
    }

    pub fn verify_hashes(&self, before: &[String]) -> Result<(), AdversaryError> {
        for (index, (m, h)) in self.members.iter().zip(before).enumerate() {
            if m.hash() != *h {
                return Err(AdversaryError::PoolMemberChanged {
                    index,
                    name: m.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Short description used as the opponent column in metrics files.
    pub fn label(&self) -> String {
        if self.members.len() == 1 {
            self.members[0].learner.algo().to_string()
        } else {
            format!("pool{}", self.members.len())
        }
    }
}

/// Which algorithms to pre-train for a pool and for how long.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecipe {
    pub members: Vec<Algo>,
    pub steps_per_member: u64,
    pub include_bot: bool,
    pub seed: u64,
    pub learner: LearnerConfig,
}

impl Default for PoolRecipe {
    fn default() -> Self {
        PoolRecipe {
            members: vec![Algo::Iql, Algo::Vdn, Algo::Qmix],
            steps_per_member: 150_000,
            include_bot: true,
            seed: 0,
            learner: LearnerConfig::default(),
        }
    }
}

/// Trains every recipe member against the scripted bot, freezes it, and adds
/// the bot itself when requested. Returns the pool and each trained member's
/// checkpoint (manifest mode `pool`).
pub fn build_opponent_pool(env: &mut Env, recipe: &PoolRecipe) -> Result<(OpponentPool, Vec<Checkpoint>), AdversaryError> {
    if recipe.members.is_empty() {
        return Err(AdversaryError::EmptyRecipe);
    }
    let red = TeamSpec::of(env, Team::Red);
    let mut members = Vec::new();
    let mut checkpoints = Vec::new();
    for (k, &algo) in recipe.members.iter().enumerate() {
        if !algo.is_trainable() {
            return Err(AdversaryError::InvalidConfig(format!("pool member {algo} is not trainable")));
        }
        let seed = derive_seed(recipe.seed, 0x9001, k as u64);
        let learner = build_learner(algo, &red, &recipe.learner, seed)?;
        let config = TrainConfig {
            total_env_steps: recipe.steps_per_member,
            test_interval: recipe.steps_per_member,
            learner: recipe.learner.clone(),
            ..TrainConfig::default()
        };
        log::info!("pool member {k}: training {algo} for {} steps", recipe.steps_per_member);
        let run = train_vs_bot(env, learner, &config, seed)?;
        let mut learner = run.learner;
        learner.freeze();
        let mut ck = learner.checkpoint().expect("trainable learners checkpoint");
        ck.manifest.mode = Some("pool".to_string());
        checkpoints.push(ck);
        members.push(PoolMember::new(format!("{algo}-{k}"), learner));
    }
    if recipe.include_bot {
        members.push(PoolMember::new(
            "bot",
            Box::new(ScriptedBot::new(env.obs_layout(Team::Blue).clone())),
        ));
    }
    Ok((OpponentPool::new(members)?, checkpoints))
}
