use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Serialize;
use thiserror::Error;

use mirrorwar::engine::{EngineConfig, Team};
use mirrorwar::env::{Env, RewardConfig};
use mirrorwar::learners::{load_learner, Checkpoint, Learner, RandomPolicy, ScriptedBot, TeamSpec};
use mirrorwar::scenario::{builtin_scenario, parse_scenario_config, ScenarioSpec};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MIRRORWAR_OUT";
pub const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    CliError::Usage(msg.into()).into()
}

/// `--out` when given, else `$MIRRORWAR_OUT/<name>` (or `runs/<name>`).
pub fn output_dir(flag: Option<&Path>, name: &str) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => {
            let root = std::env::var(OUT_ENV).ok().filter(|s| !s.is_empty());
            PathBuf::from(root.unwrap_or_else(|| DEFAULT_OUT.to_string())).join(name)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Built-in scenario name
    #[arg(long, default_value = "3m")]
    pub scenario: String,
    /// Scenario document overriding the built-in (sections [scenario], [red], [blue], [engine])
    #[arg(long, value_name = "PATH")]
    pub scenario_file: Option<PathBuf>,
    /// Spawn jitter per axis; 0 gives exactly mirrored layouts [default: scenario value]
    #[arg(long)]
    pub spawn_spread: Option<f64>,
}

impl ScenarioArgs {
    pub fn resolve(&self) -> anyhow::Result<(ScenarioSpec, EngineConfig)> {
        let (mut spec, engine) = match &self.scenario_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let cfg = parse_scenario_config(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                (cfg.scenario, cfg.engine)
            }
            None => (
                builtin_scenario(&self.scenario).map_err(|e| usage(e.to_string()))?,
                EngineConfig::default(),
            ),
        };
        if let Some(s) = self.spawn_spread {
            spec.spawn_spread = s;
        }
        spec.validate().map_err(|e| usage(e.to_string()))?;
        Ok((spec, engine))
    }

    pub fn env(&self) -> anyhow::Result<Env> {
        let (spec, engine) = self.resolve()?;
        Env::new(spec, engine, RewardConfig::default()).map_err(|e| usage(e.to_string()))
    }
}

/// `bot`, `random`, or a checkpoint path, loaded frozen for `team`.
pub fn load_policy(spec: &str, env: &Env, team: Team) -> anyhow::Result<Box<dyn Learner>> {
    match spec {
        "bot" => Ok(Box::new(ScriptedBot::new(env.obs_layout(team).clone()))),
        "random" => Ok(Box::new(RandomPolicy)),
        path => {
            let ck = Checkpoint::load(Path::new(path)).with_context(|| format!("loading checkpoint {path}"))?;
            Ok(load_learner(ck, &TeamSpec::of(env, team), true).with_context(|| format!("checkpoint {path}"))?)
        }
    }
}

pub fn parse_team(s: &str) -> Result<Team, String> {
    match s.to_ascii_lowercase().as_str() {
        "red" => Ok(Team::Red),
        "blue" => Ok(Team::Blue),
        _ => Err(format!("expected red or blue, got {s:?}")),
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Manifest written next to every run's artifacts.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub argv: Vec<String>,
    pub resolved: &'a T,
    pub artifacts: Vec<String>,
}

impl<'a, T: Serialize> Manifest<'a, T> {
    pub fn new(command: &'a str, resolved: &'a T) -> Self {
        Manifest {
            tool: "mirrorwar",
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().collect(),
            resolved,
            artifacts: Vec::new(),
        }
    }
}
