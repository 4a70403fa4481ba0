//! Metrics CSV files and cross-run win-rate curves.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AdversaryError, EvalPoint, Mode, RunMetrics};

pub const METRICS_COLUMNS: [&str; 12] = [
    "env_step",
    "wins",
    "draws",
    "losses",
    "win_rate",
    "mean_return_red",
    "mean_return_blue",
    "seed",
    "mode",
    "scenario",
    "algo_red",
    "algo_blue",
];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    env_step: u64,
    wins: u32,
    draws: u32,
    losses: u32,
    win_rate: f64,
    mean_return_red: f64,
    mean_return_blue: f64,
    seed: u64,
    mode: Mode,
    scenario: String,
    algo_red: String,
    algo_blue: String,
}

/// Writes one row per evaluation point of every run, with a header.
pub fn write_metrics_csv<W: Write>(out: W, runs: &[RunMetrics]) -> Result<(), AdversaryError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(METRICS_COLUMNS)?;
    for run in runs {
        for p in &run.points {
            w.serialize(Row {
                env_step: p.env_step,
                wins: p.wins,
                draws: p.draws,
                losses: p.losses,
                win_rate: p.win_rate(),
                mean_return_red: p.mean_return_red,
                mean_return_blue: p.mean_return_blue,
                seed: run.seed,
                mode: run.mode,
                scenario: run.scenario.clone(),
                algo_red: run.algo_red.clone(),
                algo_blue: run.algo_blue.clone(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a metrics CSV back into runs, grouping consecutive rows that share
/// seed, mode, scenario and algorithms.
pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<RunMetrics>, AdversaryError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != METRICS_COLUMNS {
        return Err(AdversaryError::Metrics(format!("unexpected header {header:?}")));
    }
    let mut runs: Vec<RunMetrics> = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        let p = EvalPoint {
            env_step: row.env_step,
            wins: row.wins,
            draws: row.draws,
            losses: row.losses,
            mean_return_red: row.mean_return_red,
            mean_return_blue: row.mean_return_blue,
        };
        let same = runs.last().is_some_and(|m| {
            m.seed == row.seed
                && m.mode == row.mode
                && m.scenario == row.scenario
                && m.algo_red == row.algo_red
                && m.algo_blue == row.algo_blue
                && m.points.last().is_some_and(|q| q.env_step < p.env_step)
        });
        if same {
            runs.last_mut().expect("checked").points.push(p);
        } else {
            runs.push(RunMetrics {
                seed: row.seed,
                mode: row.mode,
                scenario: row.scenario,
                algo_red: row.algo_red,
                algo_blue: row.algo_blue,
                test_episodes: p.episodes(),
                points: vec![p],
            });
        }
    }
    Ok(runs)
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`). The
/// median of an even count is the midpoint of the two central values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let f = pos - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * f
    }
}

/// Per-evaluation-point statistics of win rate across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateCurve {
    pub env_steps: Vec<u64>,
    pub median: Vec<f64>,
    pub mean: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    pub runs: usize,
}

/// Runs are aligned by evaluation index, since evaluations land on episode
/// boundaries and so drift by a few env steps between seeds. The reported
/// x-coordinate is the median env step at each index.
pub fn median_win_rate(runs: &[RunMetrics]) -> Result<WinRateCurve, AdversaryError> {
    let first = runs.first().ok_or(AdversaryError::NoRuns)?;
    let n = first.points.len();
    if runs.iter().any(|r| r.points.len() != n) {
        return Err(AdversaryError::MisalignedRuns);
    }
    let steps: Vec<u64> = (0..n)
        .map(|k| {
            let mut s: Vec<u64> = runs.iter().map(|r| r.points[k].env_step).collect();
            s.sort_unstable();
            s[(s.len() - 1) / 2]
        })
        .collect();
    let mut curve = WinRateCurve {
        env_steps: steps.clone(),
        median: Vec::new(),
        mean: Vec::new(),
        q25: Vec::new(),
        q75: Vec::new(),
        runs: runs.len(),
    };
    for k in 0..steps.len() {
        let mut rates: Vec<f64> = runs.iter().map(|r| r.points[k].win_rate()).collect();
        rates.sort_by(f64::total_cmp);
        curve.median.push(quantile(&rates, 0.5));
        curve.mean.push(rates.iter().sum::<f64>() / rates.len() as f64);
        curve.q25.push(quantile(&rates, 0.25));
        curve.q75.push(quantile(&rates, 0.75));
    }
    Ok(curve)
}
