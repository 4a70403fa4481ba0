use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use mirrorwar::adversary::{
    read_metrics_csv, train_mixed, train_paired, train_vs_bot, write_metrics_csv, Mode, RunMetrics, TrainConfig,
    DEFAULT_TEST_EPISODES,
};
use mirrorwar::engine::{EngineConfig, Team};
use mirrorwar::env::{Env, RewardConfig};
use mirrorwar::learners::{build_learner, load_learner, Algo, Checkpoint, Learner, LearnerConfig, TeamSpec};
use mirrorwar::metrics::{aggregate_runs, write_summary};
use mirrorwar::scenario::{builtin_scenario, scenario_from_table, to_config_string, ScenarioConfig, ScenarioSpec};

use crate::common::{output_dir, usage, write_json, Manifest, ScenarioArgs};
use crate::pool::load_pool;

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Training mode: bot, paired or mixed
    #[arg(long, default_value = "bot")]
    pub mode: Mode,
    /// Learner algorithm (red, or side A in paired mode)
    #[arg(long, default_value = "iql")]
    pub algo: Algo,
    /// Side B algorithm in paired mode
    #[arg(long, default_value = "iql")]
    pub algo_b: Algo,
    /// Opponent pool directory or pool.json (mixed mode)
    #[arg(long, value_name = "PATH")]
    pub pool: Option<PathBuf>,
    /// Environment steps per seed [default: 300000, 200000 in mixed mode]
    #[arg(long)]
    pub steps: Option<u64>,
    /// Number of seeds
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// First seed
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    /// Environment steps between evaluations
    #[arg(long, default_value_t = 10_000)]
    pub test_interval: u64,
    /// Greedy episodes per evaluation
    #[arg(long, default_value_t = DEFAULT_TEST_EPISODES)]
    pub test_episodes: u32,
    /// Stop each seed after this many training episodes [default: no cap]
    #[arg(long)]
    pub max_episodes: Option<u64>,
    /// Seeds trained in parallel
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Warm-start red (side A) from a checkpoint [default: random init]
    #[arg(long, value_name = "PATH")]
    pub warm: Option<PathBuf>,
    /// Warm-start side B from a checkpoint [default: random init]
    #[arg(long, value_name = "PATH")]
    pub warm_b: Option<PathBuf>,
    /// Learning rate [default: 0.0005]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden layer widths, comma separated [default: 64,64]
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Double-Q targets [default: off]
    #[arg(long)]
    pub double_q: bool,
    /// TOML file overriding defaults: [train], [learner], [reward], [scenario], [red], [blue], [engine]
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run directory [default: $MIRRORWAR_OUT/<scenario>_<mode>_<algo>, or runs/...]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// The `[train]` section of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub mode: Mode,
    pub algo: Algo,
    pub algo_b: Algo,
    pub pool: Option<PathBuf>,
    pub steps: Option<u64>,
    pub seeds: u64,
    pub seed_base: u64,
    pub test_interval: u64,
    pub test_episodes: u32,
    pub max_episodes: Option<u64>,
    pub jobs: usize,
    pub warm: Option<PathBuf>,
    pub warm_b: Option<PathBuf>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            mode: Mode::Bot,
            algo: Algo::Iql,
            algo_b: Algo::Iql,
            pool: None,
            steps: None,
            seeds: 5,
            seed_base: 0,
            test_interval: 10_000,
            test_episodes: DEFAULT_TEST_EPISODES,
            max_episodes: None,
            jobs: 1,
            warm: None,
            warm_b: None,
        }
    }
}

/// Everything a run depends on, after defaults, config file and flags.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub train: TrainSettings,
    pub learner: LearnerConfig,
    pub reward: RewardConfig,
    pub scenario: ScenarioSpec,
    pub engine: EngineConfig,
}

impl Resolved {
    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            mode: self.train.mode,
            total_env_steps: self.train.steps.unwrap_or(TrainConfig::for_mode(self.train.mode).total_env_steps),
            test_interval: self.train.test_interval,
            test_episodes: self.train.test_episodes,
            seeds: vec![seed],
            max_episodes: self.train.max_episodes,
            train_steps_per_episode: 1,
            learner: self.learner.clone(),
        }
    }

    fn seeds(&self) -> Vec<u64> {
        (0..self.train.seeds).map(|i| self.train.seed_base + i).collect()
    }

    /// The resolved configuration as a document accepted by `--config`.
    pub fn to_toml(&self) -> anyhow::Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            train: &'a TrainSettings,
            learner: &'a LearnerConfig,
            reward: &'a RewardConfig,
        }
        let head = toml::to_string(&Doc {
            train: &self.train,
            learner: &self.learner,
            reward: &self.reward,
        })?;
        let scenario = to_config_string(&ScenarioConfig {
            scenario: self.scenario.clone(),
            engine: self.engine.clone(),
        });
        Ok(format!("{head}\n{scenario}"))
    }
}

fn section<T: for<'de> Deserialize<'de> + Default>(doc: &Table, name: &str) -> anyhow::Result<T> {
    match doc.get(name) {
        None => Ok(T::default()),
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| usage(format!("config [{name}]: {}", e.message()))),
    }
}

const CONFIG_SECTIONS: [&str; 7] = ["train", "learner", "reward", "scenario", "red", "blue", "engine"];

fn explicit(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine | ValueSource::EnvVariable))
}

/// Built-in defaults, then the config file, then flags given on the
/// command line.
pub fn resolve(args: &TrainArgs, m: &ArgMatches) -> anyhow::Result<Resolved> {
    let doc: Table = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let doc: Table = text
                .parse()
                .map_err(|e: toml::de::Error| usage(format!("{}: {}", path.display(), e.message())))?;
            if let Some(k) = doc.keys().find(|k| !CONFIG_SECTIONS.contains(&k.as_str())) {
                return Err(usage(format!("config: unknown section [{k}]")));
            }
            doc
        }
        None => Table::new(),
    };
    let mut train: TrainSettings = section(&doc, "train")?;
    let mut learner: LearnerConfig = section(&doc, "learner")?;
    let reward: RewardConfig = section(&doc, "reward")?;

    let from_file = if ["scenario", "red", "blue", "engine"].iter().any(|k| doc.contains_key(*k)) {
        let mut t = doc.clone();
        if !t.contains_key("scenario") {
            t.insert("scenario".into(), Value::Table(Table::from_iter([("base".to_string(), Value::from("3m"))])));
        }
        Some(scenario_from_table(&t).map_err(|e| usage(format!("config: {e}")))?)
    } else {
        None
    };
    let (mut scenario, engine) = if args.scenario.scenario_file.is_some() {
        args.scenario.resolve()?
    } else {
        match from_file {
            Some(c) if !explicit(m, "scenario") => (c.scenario, c.engine),
            Some(c) => (builtin_scenario(&args.scenario.scenario).map_err(|e| usage(e.to_string()))?, c.engine),
            None => (builtin_scenario(&args.scenario.scenario).map_err(|e| usage(e.to_string()))?, EngineConfig::default()),
        }
    };
    if let Some(s) = args.scenario.spawn_spread {
        scenario.spawn_spread = s;
    }

    macro_rules! overlay {
        ($($field:ident),*) => {$(
            if explicit(m, stringify!($field)) {
                train.$field = args.$field.clone();
            }
        )*};
    }
    overlay!(mode, algo, algo_b, seeds, seed_base, test_interval, test_episodes, jobs);
    macro_rules! overlay_opt {
        ($($field:ident),*) => {$(
            if args.$field.is_some() {
                train.$field = args.$field.clone();
            }
        )*};
    }
    overlay_opt!(pool, steps, max_episodes, warm, warm_b);
    if let Some(lr) = args.lr {
        learner.lr = lr;
    }
    if let Some(h) = &args.hidden {
        learner.hidden = h.clone();
    }
    if args.double_q {
        learner.double_q = true;
    }

    let r = Resolved {
        train,
        learner,
        reward,
        scenario,
        engine,
    };
    validate(&r)?;
    Ok(r)
}

fn validate(r: &Resolved) -> anyhow::Result<()> {
    let t = &r.train;
    if t.seeds == 0 {
        return Err(usage("seeds must be at least 1"));
    }
    if t.jobs == 0 {
        return Err(usage("jobs must be at least 1"));
    }
    if !t.algo.is_trainable() {
        return Err(usage(format!("algo {} has nothing to train", t.algo)));
    }
    match t.mode {
        Mode::Paired if !t.algo_b.is_trainable() => {
            return Err(usage(format!("algo-b {} has nothing to train; use --mode bot", t.algo_b)))
        }
        Mode::Mixed if t.pool.is_none() => return Err(usage("mixed mode needs --pool")),
        _ => {}
    }
    r.train_config(0).validate().map_err(|e| usage(e.to_string()))?;
    r.scenario.validate().map_err(|e| usage(e.to_string()))?;
    Ok(())
}

fn default_name(r: &Resolved) -> String {
    let t = &r.train;
    match t.mode {
        Mode::Paired => format!("{}_paired_{}_vs_{}", r.scenario.name, t.algo, t.algo_b),
        m => format!("{}_{}_{}", r.scenario.name, m, t.algo),
    }
}

fn make_learner(r: &Resolved, env: &Env, team: Team, algo: Algo, warm: Option<&Path>, seed: u64) -> anyhow::Result<Box<dyn Learner>> {
    let spec = TeamSpec::of(env, team);
    match warm {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            Ok(load_learner(ck, &spec, false)?)
        }
        None => Ok(build_learner(algo, &spec, &r.learner, seed)?),
    }
}

fn save_checkpoint(learner: &dyn Learner, mode: Mode, seed: u64, path: &Path) -> anyhow::Result<()> {
    let mut ck = learner.checkpoint().context("learner has no checkpoint")?;
    ck.manifest.mode.get_or_insert_with(|| mode.to_string());
    ck.manifest.seed = seed;
    ck.save(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

struct SeedOutput {
    files: Vec<String>,
    lines: Vec<String>,
}

fn run_seed(r: &Resolved, dir: &Path, seed: u64) -> anyhow::Result<SeedOutput> {
    let mut env = Env::new(r.scenario.clone(), r.engine.clone(), r.reward.clone())?;
    let cfg = r.train_config(seed);
    let t = &r.train;
    let metrics_name = format!("metrics_seed{seed}.csv");
    let mut files = vec![metrics_name.clone()];
    let mut lines = Vec::new();
    let runs: Vec<RunMetrics> = match t.mode {
        Mode::Bot | Mode::Mixed => {
            let learner = make_learner(r, &env, Team::Red, t.algo, t.warm.as_deref(), seed)?;
            let run = if t.mode == Mode::Bot {
                train_vs_bot(&mut env, learner, &cfg, seed)?
            } else {
                let pool = load_pool(t.pool.as_deref().expect("validated"), &env)?;
                train_mixed(&mut env, learner, &pool, &cfg, seed)?
            };
            let name = format!("checkpoint_seed{seed}.json");
            save_checkpoint(run.learner.as_ref(), t.mode, seed, &dir.join(&name))?;
            files.push(name);
            if let Some(p) = run.metrics.final_point() {
                lines.push(format!(
                    "seed {seed}: {} steps, {} episodes, final win rate {:.3} ({}/{}/{})",
                    run.env_steps,
                    run.episodes,
                    p.win_rate(),
                    p.wins,
                    p.draws,
                    p.losses
                ));
            }
            vec![run.metrics]
        }
        Mode::Paired => {
            let a = make_learner(r, &env, Team::Red, t.algo, t.warm.as_deref(), seed)?;
            let b_seed = mirrorwar::rng::derive_seed(seed, 0xB, 0);
            let b = make_learner(r, &env, Team::Blue, t.algo_b, t.warm_b.as_deref(), b_seed)?;
            let run = train_paired(&mut env, a, b, &cfg, seed)?;
            for w in &run.warnings {
                log::warn!("{w}");
            }
            for (side, learner) in [("a", &run.learner_a), ("b", &run.learner_b)] {
                let name = format!("checkpoint_{side}_seed{seed}.json");
                save_checkpoint(learner.as_ref(), t.mode, seed, &dir.join(&name))?;
                files.push(name);
            }
            if let Some(p) = run.metrics_a.final_point() {
                lines.push(format!(
                    "seed {seed}: {} steps, {} episodes, {} vs {}: {}/{}/{}",
                    run.env_steps, run.episodes, t.algo, t.algo_b, p.wins, p.draws, p.losses
                ));
            }
            vec![run.metrics_a, run.metrics_b]
        }
    };
    let f = std::fs::File::create(dir.join(&metrics_name))?;
    write_metrics_csv(f, &runs)?;
    Ok(SeedOutput { files, lines })
}

pub fn run(args: TrainArgs, m: &ArgMatches) -> anyhow::Result<()> {
    let r = resolve(&args, m)?;
    let dir = output_dir(args.out.as_deref(), &default_name(&r));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.toml"), r.to_toml()?)?;

    let seeds = r.seeds();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<anyhow::Result<SeedOutput>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..r.train.jobs.min(seeds.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = seeds.get(i) else { break };
                log::info!("seed {seed} started");
                let out = run_seed(&r, &dir, seed);
                results.lock().expect("no panics while holding the lock")[i] = Some(out);
            });
        }
    });
    let mut artifacts = vec!["config.toml".to_string()];
    for out in results.into_inner().expect("workers finished") {
        let out = out.expect("every seed ran")?;
        for l in &out.lines {
            println!("{l}");
        }
        artifacts.extend(out.files);
    }

    let mut runs = Vec::new();
    for seed in &seeds {
        let f = std::fs::File::open(dir.join(format!("metrics_seed{seed}.csv")))?;
        runs.extend(read_metrics_csv(f)?);
    }
    let summary = aggregate_runs(&runs)?;
    write_summary(&dir, &summary)?;
    artifacts.extend(["summary.json", "summary.csv", "curves.csv"].map(String::from));
    for p in &summary.pairings {
        println!(
            "{} {} {} vs {}: final median win rate {:.3}",
            p.scenario, p.mode, p.algo, p.opponent, p.final_median
        );
    }

    #[derive(Serialize)]
    struct Record<'a> {
        #[serde(flatten)]
        resolved: &'a Resolved,
        seeds: Vec<u64>,
    }
    let record = Record {
        resolved: &r,
        seeds: seeds.clone(),
    };
    let mut manifest = Manifest::new("train", &record);
    manifest.artifacts = artifacts;
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!("wrote {}", dir.display());
    Ok(())
}
