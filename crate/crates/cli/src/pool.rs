use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};

use mirrorwar::adversary::{build_opponent_pool, OpponentPool, PoolMember, PoolRecipe};
use mirrorwar::engine::Team;
use mirrorwar::env::Env;
use mirrorwar::learners::{Algo, LearnerConfig};

use crate::common::{load_policy, output_dir, usage, write_json, Manifest, ScenarioArgs};

pub const POOL_FILE: &str = "pool.json";

#[derive(Debug, Args)]
pub struct PoolArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Member algorithms, comma separated
    #[arg(long, value_delimiter = ',', default_value = "iql,vdn,qmix")]
    pub members: Vec<Algo>,
    /// Environment steps each member trains against the bot
    #[arg(long, default_value_t = 150_000)]
    pub steps_per_member: u64,
    /// Leave the scripted bot out of the pool
    #[arg(long)]
    pub no_bot: bool,
    /// Base seed for member training
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pool directory [default: $MIRRORWAR_OUT/pool_<scenario>, or runs/...]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// `pool.json`: member names with either a checkpoint file or a built-in policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolFile {
    pub scenario: String,
    pub members: Vec<PoolEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub name: String,
    /// `bot`, `random`, or a checkpoint path relative to the pool file.
    pub policy: String,
}

/// Loads a pool written by `pool` (a directory or its `pool.json`) with every
/// member playing blue.
pub fn load_pool(path: &Path, env: &Env) -> anyhow::Result<OpponentPool> {
    let file = if path.is_dir() { path.join(POOL_FILE) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let spec: PoolFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
    let base = file.parent().unwrap_or(Path::new("."));
    let mut members = Vec::new();
    for e in &spec.members {
        let policy = match e.policy.as_str() {
            "bot" | "random" => e.policy.clone(),
            p => base.join(p).to_string_lossy().into_owned(),
        };
        members.push(PoolMember::new(e.name.clone(), load_policy(&policy, env, Team::Blue)?));
    }
    Ok(OpponentPool::new(members)?)
}

pub fn run(args: PoolArgs) -> anyhow::Result<()> {
    let mut env = args.scenario.env()?;
    if args.members.is_empty() {
        return Err(usage("--members is empty"));
    }
    let recipe = PoolRecipe {
        members: args.members.clone(),
        steps_per_member: args.steps_per_member,
        include_bot: !args.no_bot,
        seed: args.seed,
        learner: LearnerConfig::default(),
    };
    let scenario = env.scenario().name.clone();
    let dir = output_dir(args.out.as_deref(), &format!("pool_{scenario}"));
    std::fs::create_dir_all(&dir)?;
    let (pool, checkpoints) = build_opponent_pool(&mut env, &recipe)?;
    let mut entries = Vec::new();
    let mut ck = checkpoints.iter();
    for (k, m) in pool.members().iter().enumerate() {
        let policy = match m.learner.checkpoint() {
            Some(_) => {
                let c = ck.next().context("pool member without a checkpoint")?;
                let name = format!("member_{k}_{}.json", c.manifest.algo);
                c.save(&dir.join(&name))?;
                name
            }
            None => m.learner.algo().to_string(),
        };
        println!("{}: {policy}", m.name);
        entries.push(PoolEntry {
            name: m.name.clone(),
            policy,
        });
    }
    let file = PoolFile {
        scenario,
        members: entries,
    };
    write_json(&dir.join(POOL_FILE), &file)?;

    #[derive(Serialize)]
    struct Resolved<'a> {
        scenario: &'a mirrorwar::scenario::ScenarioSpec,
        members: Vec<String>,
        steps_per_member: u64,
        include_bot: bool,
        seed: u64,
        learner: &'a LearnerConfig,
    }
    let resolved = Resolved {
        scenario: env.scenario(),
        members: recipe.members.iter().map(|a| a.to_string()).collect(),
        steps_per_member: recipe.steps_per_member,
        include_bot: recipe.include_bot,
        seed: recipe.seed,
        learner: &recipe.learner,
    };
    let mut manifest = Manifest::new("pool", &resolved);
    manifest.artifacts = std::iter::once(POOL_FILE.to_string())
        .chain(file.members.iter().filter(|e| e.policy.ends_with(".json")).map(|e| e.policy.clone()))
        .collect();
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!("wrote {}", dir.display());
    Ok(())
}
