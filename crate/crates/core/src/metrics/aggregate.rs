//! Cross-run aggregation: median curves per pairing, average median win
//! rates (self-pairing included) and advantage counts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::adversary::{median_win_rate, AdversaryError, Mode, RunMetrics, WinRateCurve};

/// A leader counts as ahead only when its score beats the runner-up by at
/// least one test episode out of 32.
pub const ADVANTAGE_MARGIN: f64 = 1.0 / 32.0;
const MARGIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingSummary {
    pub scenario: String,
    pub mode: Mode,
    pub algo: String,
    pub opponent: String,
    pub curve: WinRateCurve,
    /// Median win rate at the last evaluation point.
    pub final_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoScore {
    pub algo: String,
    /// Mean over opponents (itself included) of the final median win rate.
    pub average_median: f64,
    pub opponents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTable {
    pub scenario: String,
    pub mode: Mode,
    pub scores: Vec<AlgoScore>,
    /// Algorithm ahead of every other by at least [`ADVANTAGE_MARGIN`].
    pub leader: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossScenarioRow {
    pub algo: String,
    pub mode: Mode,
    pub mean_average_median: f64,
    pub scenarios: usize,
    pub advantages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pairings: Vec<PairingSummary>,
    pub scenarios: Vec<ScenarioTable>,
    pub overall: Vec<CrossScenarioRow>,
}

type PairKey = (String, Mode, String, String);

/// Aggregates runs read from metrics files. Runs of the same scenario, mode
/// and pairing must share evaluation points.
pub fn aggregate_runs(runs: &[RunMetrics]) -> Result<Summary, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::NoInputFiles);
    }
    let mut groups: BTreeMap<PairKey, Vec<RunMetrics>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((r.scenario.clone(), r.mode, r.algo_red.clone(), r.algo_blue.clone()))
            .or_default()
            .push(r.clone());
    }
    let mut pairings = Vec::new();
    for ((scenario, mode, algo, opponent), rs) in groups {
        let curve = median_win_rate(&rs).map_err(|e| match e {
            AdversaryError::MisalignedRuns => MetricsError::MisalignedRuns,
            e => e.into(),
        })?;
        let final_median = *curve.median.last().ok_or(MetricsError::MisalignedRuns)?;
        pairings.push(PairingSummary {
            scenario,
            mode,
            algo,
            opponent,
            curve,
            final_median,
        });
    }

    let mut by_scenario: BTreeMap<(String, Mode), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for p in &pairings {
        by_scenario
            .entry((p.scenario.clone(), p.mode))
            .or_default()
            .entry(p.algo.clone())
            .or_default()
            .push(p.final_median);
    }
    let mut scenarios = Vec::new();
    for ((scenario, mode), algos) in by_scenario {
        let scores: Vec<AlgoScore> = algos
            .into_iter()
            .map(|(algo, v)| AlgoScore {
                algo,
                average_median: v.iter().sum::<f64>() / v.len() as f64,
                opponents: v.len(),
            })
            .collect();
        let leader = advantage_leader(&scores);
        scenarios.push(ScenarioTable {
            scenario,
            mode,
            scores,
            leader,
        });
    }

    let mut overall_map: BTreeMap<(String, Mode), (Vec<f64>, usize)> = BTreeMap::new();
    for t in &scenarios {
        for s in &t.scores {
            let e = overall_map.entry((s.algo.clone(), t.mode)).or_default();
            e.0.push(s.average_median);
            if t.leader.as_deref() == Some(s.algo.as_str()) {
                e.1 += 1;
            }
        }
    }
    let overall = overall_map
        .into_iter()
        .map(|((algo, mode), (v, adv))| CrossScenarioRow {
            algo,
            mode,
            mean_average_median: v.iter().sum::<f64>() / v.len() as f64,
            scenarios: v.len(),
            advantages: adv,
        })
        .collect();
    Ok(Summary {
        pairings,
        scenarios,
        overall,
    })
}

/// The top scorer, if it beats the runner-up by the advantage margin. A
/// scenario with a single algorithm has no leader.
pub fn advantage_leader(scores: &[AlgoScore]) -> Option<String> {
    let mut sorted: Vec<&AlgoScore> = scores.iter().collect();
    sorted.sort_by(|a, b| b.average_median.total_cmp(&a.average_median));
    match sorted.as_slice() {
        [first, second, ..] if first.average_median - second.average_median + MARGIN_SLACK >= ADVANTAGE_MARGIN => {
            Some(first.algo.clone())
        }
        _ => None,
    }
}

/// Writes `summary.json`, `summary.csv` (one row per pairing and per
/// algorithm score) and `curves.csv` with plot-ready `x,y,series` rows.
pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, summary)?;
    writeln!(f)?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["table", "scenario", "mode", "algo", "opponent", "value", "advantages"])?;
    for p in &summary.pairings {
        w.write_record([
            "final_median",
            &p.scenario,
            p.mode.as_str(),
            &p.algo,
            &p.opponent,
            &p.final_median.to_string(),
            "",
        ])?;
    }
    for t in &summary.scenarios {
        for s in &t.scores {
            let lead = u8::from(t.leader.as_deref() == Some(s.algo.as_str()));
            w.write_record([
                "average_median",
                &t.scenario,
                t.mode.as_str(),
                &s.algo,
                "",
                &s.average_median.to_string(),
                &lead.to_string(),
            ])?;
        }
    }
    for o in &summary.overall {
        w.write_record([
            "overall",
            "",
            o.mode.as_str(),
            &o.algo,
            "",
            &o.mean_average_median.to_string(),
            &o.advantages.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    w.write_record(["x", "y", "series"])?;
    for p in &summary.pairings {
        let series = format!("{}/{}/{}-vs-{}", p.scenario, p.mode, p.algo, p.opponent);
        for (x, y) in p.curve.env_steps.iter().zip(&p.curve.median) {
            w.write_record([x.to_string(), y.to_string(), series.clone()])?;
        }
    }
    w.flush()?;
    Ok(())
}
