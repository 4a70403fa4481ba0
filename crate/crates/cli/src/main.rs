use std::process::ExitCode;

use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

mod analyze;
mod common;
mod play;
mod pool;
mod serve;
mod tools;
mod train;

use common::CliError;

/// Dual-team micro-combat environment, learners and self-play harness.
#[derive(Debug, Parser)]
#[command(name = "mirrorwar", version, propagate_version = true)]
struct Cli {
    /// More log output (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train learners against the bot, each other, or a frozen pool
    Train(train::TrainArgs),
    /// Evaluate checkpoints against a fixed opponent
    Eval(play::EvalArgs),
    /// Play two policies against each other
    Pit(play::PitArgs),
    /// Pre-train and freeze an opponent pool
    Pool(pool::PoolArgs),
    /// Host lockstep protocol sessions
    Serve(serve::ServeArgs),
    /// Connect a policy to a protocol server
    Client(serve::ClientArgs),
    /// Aggregate metrics and analyze joint-action diversity
    Analyze(analyze::AnalyzeArgs),
    /// List built-in scenarios
    Scenarios(tools::ScenariosArgs),
    /// Summarize a replay log
    Replay(tools::ReplayArgs),
    /// Measure environment throughput with random policies
    Bench(tools::BenchArgs),
}

fn run(cli: Cli, matches: &ArgMatches) -> anyhow::Result<()> {
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand is required");
    match cli.command {
        Command::Train(a) => train::run(a, sub),
        Command::Eval(a) => play::eval(a),
        Command::Pit(a) => play::pit(a),
        Command::Pool(a) => pool::run(a),
        Command::Serve(a) => serve::serve(a),
        Command::Client(a) => serve::client(a),
        Command::Analyze(a) => analyze::run(a),
        Command::Scenarios(a) => tools::scenarios(a),
        Command::Replay(a) => tools::replay(a),
        Command::Bench(a) => tools::bench(a),
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<CliError>() {
                Some(CliError::Usage(_)) => ExitCode::from(2),
                None => ExitCode::from(1),
            }
        }
    }
}
