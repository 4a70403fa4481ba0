//! Checkpoint files.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! {
//!   "format": "mirrorwar-checkpoint", "version": 1,
//!   "manifest": { "algo", "scenario", "mode", "seed", "env_steps", "train_steps" },
//!   "team": { "n_agents", "obs_len", "state_len", "n_actions" },
//!   "config": { learner hyperparameters },
//!   "agent" / "target_agent": { "widths": [..], "params": [..] },
//!   "agent_opt": { "lr", "beta1", "beta2", "eps", "m", "v", "t" },
//!   "mixer" / "target_mixer" / "mixer_opt": null or the same shapes
//! }
//! ```
//!
//! Network parameters are flat arrays, layer by layer, each layer being its
//! `out × in` row-major weight matrix followed by its bias. Floats are written
//! with shortest round-trip formatting, so loading reproduces every bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Algo, LearnerConfig, LearnerError, QmixMixer, TeamSpec};
use crate::nn::{Adam, Mlp};

pub const CHECKPOINT_FORMAT: &str = "mirrorwar-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub algo: Algo,
    pub scenario: String,
    /// Training mode that produced the checkpoint (`bot`, `paired`, `mixed`).
    pub mode: Option<String>,
    pub seed: u64,
    pub env_steps: u64,
    pub train_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointTeam {
    pub n_agents: usize,
    pub obs_len: usize,
    pub state_len: usize,
    pub n_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub manifest: CheckpointManifest,
    pub team: CheckpointTeam,
    pub config: LearnerConfig,
    pub agent: Mlp,
    pub target_agent: Mlp,
    pub agent_opt: Adam,
    pub mixer: Option<QmixMixer>,
    pub target_mixer: Option<QmixMixer>,
    pub mixer_opt: Option<Adam>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, LearnerError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint, LearnerError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(LearnerError::CheckpointFormat(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(LearnerError::CheckpointFormat(format!("unsupported version {}", ck.version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnerError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, LearnerError> {
        Checkpoint::from_json(&fs::read_to_string(path)?)
    }

    pub fn check_compatible(&self, team: &TeamSpec) -> Result<(), LearnerError> {
        let i = team.info;
        let dims = CheckpointTeam {
            n_agents: i.n_agents,
            obs_len: i.obs_len,
            state_len: i.state_len,
            n_actions: i.n_actions,
        };
        if self.manifest.scenario != team.scenario || self.team != dims {
            return Err(LearnerError::CheckpointScenarioMismatch {
                expected: team.scenario.clone(),
                found: self.manifest.scenario.clone(),
            });
        }
        Ok(())
    }
}
