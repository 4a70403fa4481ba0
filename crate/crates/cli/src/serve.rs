use std::path::PathBuf;
use std::time::Duration;

use clap::Args;

use mirrorwar::engine::{Outcome, Team};
use mirrorwar::env::TeamOutcome;
use mirrorwar::proto::{bind, client_loop, resolve_endpoint, serve as serve_sessions, ClientConfig, ServeConfig, Shutdown};

use crate::common::{load_policy, parse_team, usage, ScenarioArgs};

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Listen address [default: $MIRRORWAR_ENDPOINT, or 127.0.0.1:7878]
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Seed of the episode layouts
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Episodes per session [default: until a client leaves]
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Let the built-in bot play this team [default: both teams are clients]
    #[arg(long, value_parser = parse_team)]
    pub bot: Option<Team>,
    /// Per-step action deadline in milliseconds; a late team forfeits [default: none]
    #[arg(long)]
    pub act_timeout_ms: Option<u64>,
    /// Exit after this many sessions [default: serve forever]
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Log every message as JSON lines
    #[arg(long, value_name = "PATH")]
    pub transcript: Option<PathBuf>,
}

pub fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let (scenario, engine) = args.scenario.resolve()?;
    let endpoint = resolve_endpoint(args.endpoint.as_deref());
    let cfg = ServeConfig {
        engine,
        seed: args.seed,
        episodes: args.episodes,
        internal_bot: args.bot,
        act_timeout: args.act_timeout_ms.map(Duration::from_millis),
        max_sessions: args.sessions,
        transcript: args.transcript.clone(),
        ..ServeConfig::new(scenario)
    };
    let listener = bind(&endpoint)?;
    eprintln!("listening on {}", listener.local_addr()?);
    let report = serve_sessions(listener, &cfg, &Shutdown::default())?;
    for (i, s) in report.sessions.iter().enumerate() {
        let count = |o| s.outcomes.iter().filter(|&&x| x == o).count();
        println!(
            "session {i}: {} episodes, red {} blue {} draw {}, {} forfeits, {} env steps ({})",
            s.outcomes.len(),
            count(Outcome::RedWin),
            count(Outcome::BlueWin),
            count(Outcome::Draw),
            s.forfeits,
            s.env_steps,
            s.end_reason
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ClientArgs {
    /// Server address [default: $MIRRORWAR_ENDPOINT, or 127.0.0.1:7878]
    #[arg(long)]
    pub endpoint: Option<String>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Policy: bot, random, or a checkpoint path
    #[arg(long, default_value = "bot")]
    pub policy: String,
    /// Requested team [default: any free slot]
    #[arg(long, value_parser = parse_team)]
    pub team: Option<Team>,
    /// Seed of the policy stream
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exploration rate
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Leave after this many episodes [default: until the server says bye]
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Name sent in the handshake
    #[arg(long, default_value = "mirrorwar-client")]
    pub name: String,
    /// Print per-episode results as JSON lines
    #[arg(long)]
    pub json: bool,
}

pub fn client(args: ClientArgs) -> anyhow::Result<()> {
    let env = args.scenario.env()?;
    let endpoint = resolve_endpoint(args.endpoint.as_deref());
    if args.team.is_none() && !env.scenario().symmetric {
        return Err(usage("asymmetric scenarios need --team"));
    }
    // symmetric scenarios share one observation layout across teams
    let policy = load_policy(&args.policy, &env, args.team.unwrap_or(Team::Red))?;
    let cfg = ClientConfig {
        name: args.name.clone(),
        team: args.team,
        seed: args.seed,
        epsilon: args.epsilon,
        max_episodes: args.episodes,
        ..ClientConfig::default()
    };
    let report = client_loop(policy.as_ref(), &endpoint, &cfg)?;
    if args.json {
        for e in &report.episodes {
            println!("{}", serde_json::to_string(e)?);
        }
    }
    let count = |o| report.episodes.iter().filter(|e| e.outcome == o).count();
    println!(
        "{} on {}: {} episodes, wins {} draws {} losses {}",
        report.team,
        report.scenario.name,
        report.episodes.len(),
        count(TeamOutcome::Win),
        count(TeamOutcome::Draw),
        count(TeamOutcome::Loss)
    );
    Ok(())
}
