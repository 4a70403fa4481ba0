use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use mirrorwar::adversary::{evaluate, evaluation_episode, EvalPoint};
use mirrorwar::engine::Team;
use mirrorwar::env::replay::write_record;
use mirrorwar::env::TeamOutcome;
use mirrorwar::learners::Checkpoint;

use crate::common::{load_policy, parse_team, usage, ScenarioArgs};

#[derive(Debug, Args)]
pub struct PitArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Red policy: bot, random, or a checkpoint path
    #[arg(long, default_value = "bot")]
    pub red: String,
    /// Blue policy: bot, random, or a checkpoint path
    #[arg(long, default_value = "random")]
    pub blue: String,
    /// Greedy episodes to play
    #[arg(long, default_value_t = 32)]
    pub episodes: u32,
    /// Evaluation seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write every step as JSON lines
    #[arg(long, value_name = "PATH")]
    pub replay_out: Option<PathBuf>,
    /// Print the result as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Serialize)]
struct PitResult<'a> {
    scenario: &'a str,
    red: &'a str,
    blue: &'a str,
    episodes: u32,
    wins: u32,
    draws: u32,
    losses: u32,
    win_rate: f64,
    mean_return_red: f64,
    mean_return_blue: f64,
}

pub fn pit(args: PitArgs) -> anyhow::Result<()> {
    if args.episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    let mut env = args.scenario.env()?;
    let red = load_policy(&args.red, &env, Team::Red)?;
    let blue = load_policy(&args.blue, &env, Team::Blue)?;
    let p = match &args.replay_out {
        None => evaluate(&mut env, red.as_ref(), blue.as_ref(), args.episodes, args.seed)?,
        Some(path) => {
            let mut out = std::io::BufWriter::new(
                std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            let mut p = EvalPoint {
                env_step: 0,
                wins: 0,
                draws: 0,
                losses: 0,
                mean_return_red: 0.0,
                mean_return_blue: 0.0,
            };
            for i in 0..args.episodes {
                let rec = evaluation_episode(&mut env, red.as_ref(), blue.as_ref(), args.seed, u64::from(i), true)?;
                for r in &rec.replay {
                    write_record(&mut out, r)?;
                }
                match TeamOutcome::of(rec.outcome, Team::Red) {
                    Some(TeamOutcome::Win) => p.wins += 1,
                    Some(TeamOutcome::Loss) => p.losses += 1,
                    _ => p.draws += 1,
                }
                p.mean_return_red += rec.return_red;
                p.mean_return_blue += rec.return_blue;
            }
            out.flush()?;
            p.mean_return_red /= f64::from(args.episodes);
            p.mean_return_blue /= f64::from(args.episodes);
            p
        }
    };
    let result = PitResult {
        scenario: &env.scenario().name,
        red: &args.red,
        blue: &args.blue,
        episodes: args.episodes,
        wins: p.wins,
        draws: p.draws,
        losses: p.losses,
        win_rate: p.win_rate(),
        mean_return_red: p.mean_return_red,
        mean_return_blue: p.mean_return_blue,
    };
    if args.json {
        println!("{}", serde_json::to_string(&result)?);
    } else {
        println!("red {} vs blue {} on {}", result.red, result.blue, result.scenario);
        println!("wins {}  draws {}  losses {}  (red win rate {:.3})", p.wins, p.draws, p.losses, p.win_rate());
        println!("mean return  red {:.3}  blue {:.3}", p.mean_return_red, p.mean_return_blue);
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint file, or a run directory whose checkpoint*.json files are all evaluated
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Opponent: bot, random, or a checkpoint path
    #[arg(long, default_value = "bot")]
    pub opponent: String,
    /// Team the checkpoint plays
    #[arg(long, default_value = "red", value_parser = parse_team)]
    pub team: Team,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Greedy episodes per checkpoint
    #[arg(long, default_value_t = 32)]
    pub episodes: u32,
    /// Evaluation seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the table as CSV
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

fn checkpoints_in(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut found: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("checkpoint") && n.ends_with(".json"))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(usage(format!("no checkpoint*.json in {}", path.display())));
    }
    Ok(found)
}

pub fn eval(args: EvalArgs) -> anyhow::Result<()> {
    if args.episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    let mut env = args.scenario.env()?;
    let other = args.team.opponent();
    let opponent = load_policy(&args.opponent, &env, other)?;
    let mut rows = Vec::new();
    for path in checkpoints_in(&args.checkpoint)? {
        let name = path.to_string_lossy().into_owned();
        let ck = Checkpoint::load(&path).with_context(|| format!("loading {name}"))?;
        let algo = ck.manifest.algo;
        let me = load_policy(&name, &env, args.team)?;
        let p = match args.team {
            Team::Red => evaluate(&mut env, me.as_ref(), opponent.as_ref(), args.episodes, args.seed)?,
            Team::Blue => evaluate(&mut env, opponent.as_ref(), me.as_ref(), args.episodes, args.seed)?.swapped(),
        };
        println!(
            "{name} ({algo}) vs {}: wins {} draws {} losses {} win rate {:.3}",
            args.opponent,
            p.wins,
            p.draws,
            p.losses,
            p.win_rate()
        );
        rows.push((name, algo, p));
    }
    if let Some(path) = &args.csv {
        let mut w = csv_writer(path)?;
        writeln!(w, "checkpoint,algo,opponent,wins,draws,losses,win_rate")?;
        for (name, algo, p) in &rows {
            writeln!(
                w,
                "{name},{algo},{},{},{},{},{}",
                args.opponent,
                p.wins,
                p.draws,
                p.losses,
                p.win_rate()
            )?;
        }
        w.flush()?;
    }
    Ok(())
}

fn csv_writer(path: &Path) -> anyhow::Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}
