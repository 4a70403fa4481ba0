use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use mirrorwar::engine::{EngineConfig, Outcome, Team};
use mirrorwar::env::replay::read_records;
use mirrorwar::learners::{Learner, RandomPolicy};
use mirrorwar::rng::{derive_seed, derived_rng, streams};
use mirrorwar::scenario::{builtin_scenario, builtin_scenarios, to_config_string, Composition, ScenarioConfig};

use crate::common::{usage, ScenarioArgs};

#[derive(Debug, Args)]
pub struct ScenariosArgs {
    /// Print one scenario as an editable document
    #[arg(long, value_name = "NAME")]
    pub show: Option<String>,
}

fn roster(c: &Composition) -> String {
    c.iter().map(|(k, n)| format!("{n} {}", k.name())).collect::<Vec<_>>().join(" + ")
}

pub fn scenarios(args: ScenariosArgs) -> anyhow::Result<()> {
    if let Some(name) = &args.show {
        let scenario = builtin_scenario(name).map_err(|e| usage(e.to_string()))?;
        print!(
            "{}",
            to_config_string(&ScenarioConfig {
                scenario,
                engine: EngineConfig::default(),
            })
        );
        return Ok(());
    }
    println!("{:<10} {:>5} {:>6}  {:<36} blue", "name", "limit", "mirror", "red");
    for s in builtin_scenarios() {
        println!(
            "{:<10} {:>5} {:>6}  {:<36} {}",
            s.name,
            s.episode_step_limit,
            if s.symmetric { "yes" } else { "no" },
            roster(&s.red),
            roster(&s.blue)
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Replay log (JSON lines)
    #[arg(long, value_name = "PATH")]
    pub file: PathBuf,
    /// Print every step of this episode
    #[arg(long)]
    pub episode: Option<u64>,
}

pub fn replay(args: ReplayArgs) -> anyhow::Result<()> {
    let f = File::open(&args.file).with_context(|| format!("opening {}", args.file.display()))?;
    let records = read_records(BufReader::new(f)).with_context(|| format!("reading {}", args.file.display()))?;
    if let Some(ep) = args.episode {
        let steps: Vec<_> = records.iter().filter(|r| r.episode == ep).collect();
        if steps.is_empty() {
            return Err(usage(format!("episode {ep} is not in {}", args.file.display())));
        }
        for r in steps {
            let alive = |t: Team| r.units.iter().filter(|u| u.team == t && u.alive).count();
            println!(
                "step {:>3}  red {:?} blue {:?}  reward {:+.3}/{:+.3}  alive {}/{}",
                r.step,
                r.red_actions,
                r.blue_actions,
                r.red_reward,
                r.blue_reward,
                alive(Team::Red),
                alive(Team::Blue)
            );
        }
        return Ok(());
    }
    let mut episodes: BTreeMap<u64, (String, u32, Outcome, f64, f64)> = BTreeMap::new();
    for r in &records {
        let e = episodes
            .entry(r.episode)
            .or_insert_with(|| (r.scenario.clone(), 0, Outcome::Ongoing, 0.0, 0.0));
        e.1 = e.1.max(r.step);
        e.2 = r.outcome;
        e.3 += r.red_reward;
        e.4 += r.blue_reward;
    }
    println!("{:>7}  {:<10} {:>5}  {:<9} {:>9} {:>9}", "episode", "scenario", "steps", "outcome", "red", "blue");
    for (ep, (scenario, steps, outcome, red, blue)) in &episodes {
        let outcome = match outcome {
            Outcome::RedWin => "red win",
            Outcome::BlueWin => "blue win",
            Outcome::Draw => "draw",
            Outcome::Ongoing => "cut",
        };
        println!("{ep:>7}  {scenario:<10} {steps:>5}  {outcome:<9} {red:>9.3} {blue:>9.3}");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Environment steps to run
    #[arg(long, default_value_t = 200_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the result as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Serialize)]
struct BenchResult<'a> {
    scenario: &'a str,
    steps: u64,
    episodes: u64,
    seconds: f64,
    steps_per_second: f64,
}

pub fn bench(args: BenchArgs) -> anyhow::Result<()> {
    if args.steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    let mut env = args.scenario.env()?;
    let policy = RandomPolicy;
    let mut red_rng = derived_rng(args.seed, streams::RED_POLICY, 0);
    let mut blue_rng = derived_rng(args.seed, streams::BLUE_POLICY, 0);
    let n_red = env.scenario().team_size(Team::Red);
    let n_blue = env.scenario().team_size(Team::Blue);
    let (no_red, no_blue) = (vec![None; n_red], vec![None; n_blue]);
    let mut steps = 0;
    let mut episodes = 0;
    let start = Instant::now();
    while steps < args.steps {
        let (mut red, mut blue) = env.reset(derive_seed(args.seed, streams::EPISODE_LAYOUT, episodes))?;
        episodes += 1;
        while !red.terminated && steps < args.steps {
            let a = policy.act(&[], &red.masks, &no_red, 1.0, &mut red_rng)?;
            let b = policy.act(&[], &blue.masks, &no_blue, 1.0, &mut blue_rng)?;
            (red, blue) = env.step(&a, &b)?;
            steps += 1;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let result = BenchResult {
        scenario: &env.scenario().name,
        steps,
        episodes,
        seconds,
        steps_per_second: steps as f64 / seconds.max(f64::MIN_POSITIVE),
    };
    if args.json {
        println!("{}", serde_json::to_string(&result)?);
    } else {
        println!(
            "{}: {} env steps over {} episodes in {:.2}s, {:.0} steps/s",
            result.scenario, result.steps, result.episodes, result.seconds, result.steps_per_second
        );
    }
    Ok(())
}
