use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;

use mirrorwar::adversary::{read_metrics_csv, METRICS_COLUMNS};
use mirrorwar::engine::Team;
use mirrorwar::env::replay::read_records;
use mirrorwar::metrics::{action_diversity, aggregate_runs, write_diversity, write_summary, JointActionLog, MetricsError};

use crate::common::{output_dir, parse_team, usage};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory searched recursively for metrics CSV files
    #[arg(long, value_name = "DIR")]
    pub metrics_dir: Option<PathBuf>,
    /// Replay files, or directories of *.jsonl replays
    #[arg(long, value_name = "PATH", num_args = 1..)]
    pub replays: Vec<PathBuf>,
    /// Mean-shift bandwidth [default: half the median pairwise distance]
    #[arg(long)]
    pub diversity_bandwidth: Option<f64>,
    /// Team whose joint actions are analyzed
    #[arg(long, default_value = "red", value_parser = parse_team)]
    pub team: Team,
    /// Output directory [default: $MIRRORWAR_OUT/analysis, or runs/analysis]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn is_metrics_csv(path: &Path) -> bool {
    if path.extension().and_then(|e| e.to_str()) != Some("csv") {
        return false;
    }
    let Ok(f) = File::open(path) else { return false };
    let mut first = String::new();
    if BufReader::new(f).read_line(&mut first).is_err() {
        return false;
    }
    let cols: Vec<&str> = first.trim_end().split(',').map(str::trim).collect();
    cols == METRICS_COLUMNS
}

fn walk(dir: &Path, keep: &dyn Fn(&Path) -> bool, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, keep, found)?;
        } else if keep(&path) {
            found.push(path);
        }
    }
    Ok(())
}

pub fn run(args: AnalyzeArgs) -> anyhow::Result<()> {
    if args.metrics_dir.is_none() && args.replays.is_empty() {
        return Err(usage("give --metrics-dir and/or --replays"));
    }
    if let Some(bw) = args.diversity_bandwidth {
        if !(bw > 0.0 && bw.is_finite()) {
            return Err(usage(format!("--diversity-bandwidth must be positive, got {bw}")));
        }
    }
    let out = output_dir(args.out.as_deref(), "analysis");

    if let Some(dir) = &args.metrics_dir {
        if !dir.is_dir() {
            return Err(usage(format!("{} is not a directory", dir.display())));
        }
        let mut files = Vec::new();
        walk(dir, &is_metrics_csv, &mut files)?;
        files.sort();
        if files.is_empty() {
            return Err(MetricsError::NoInputFiles).with_context(|| format!("no metrics CSV under {}", dir.display()));
        }
        let mut runs = Vec::new();
        for f in &files {
            let file = File::open(f).with_context(|| format!("opening {}", f.display()))?;
            runs.extend(read_metrics_csv(file).with_context(|| format!("reading {}", f.display()))?);
        }
        let summary = aggregate_runs(&runs)?;
        write_summary(&out, &summary)?;
        for p in &summary.pairings {
            println!(
                "{} {} {} vs {}: final median win rate {:.3} over {} runs",
                p.scenario,
                p.mode,
                p.algo,
                p.opponent,
                p.final_median,
                p.curve.runs
            );
        }
        for t in &summary.scenarios {
            if let Some(l) = &t.leader {
                println!("{} {}: advantage to {l}", t.scenario, t.mode);
            }
        }
        println!("{} runs from {} files, summary in {}", runs.len(), files.len(), out.display());
    }

    if !args.replays.is_empty() {
        let mut files = Vec::new();
        for p in &args.replays {
            if p.is_dir() {
                walk(p, &|f: &Path| f.extension().and_then(|e| e.to_str()) == Some("jsonl"), &mut files)?;
            } else {
                files.push(p.clone());
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(MetricsError::NoInputFiles).context("no replay files");
        }
        for f in &files {
            let file = File::open(f).with_context(|| format!("opening {}", f.display()))?;
            let records = read_records(BufReader::new(file)).with_context(|| format!("reading {}", f.display()))?;
            let log = JointActionLog::from_replays(&records, args.team).with_context(|| format!("{}", f.display()))?;
            let report = action_diversity(&log, args.diversity_bandwidth)?;
            let stem = format!(
                "diversity_{}_{}",
                f.file_stem().and_then(|s| s.to_str()).unwrap_or("replay"),
                args.team
            );
            write_diversity(&out, &stem, &report)?;
            println!(
                "{}: {} joint actions, {} clusters (bandwidth {:.4}, explained {:.3}/{:.3})",
                f.display(),
                report.rows,
                report.n_clusters,
                report.bandwidth,
                report.explained_variance[0],
                report.explained_variance[1]
            );
        }
    }
    Ok(())
}
