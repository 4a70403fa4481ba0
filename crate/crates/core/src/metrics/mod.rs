//! Post-hoc analysis: cross-run aggregation, joint-action diversity
//! (PCA projection followed by flat-kernel mean-shift) and small statistics
//! helpers.

mod aggregate;
mod diversity;

pub use aggregate::{
    advantage_leader, aggregate_runs, write_summary, AlgoScore, CrossScenarioRow, PairingSummary, ScenarioTable, Summary,
    ADVANTAGE_MARGIN,
};
pub use diversity::{
    action_diversity, default_bandwidth, mean_shift, pca_2d, write_diversity, DiversityReport, JointActionLog,
    MeanShift, Pca, PAD_CODE,
};

use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::adversary::AdversaryError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("data has zero variance")]
    DegenerateData,
    #[error("need at least {rows} rows and {cols} columns, got {got_rows}x{got_cols}")]
    TooSmall {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("joint-action log is empty")]
    EmptyLog,
    #[error("action code {code} at row {row} is outside 0..{n_actions}")]
    InvalidCode { row: usize, code: usize, n_actions: usize },
    #[error("runs do not share evaluation points")]
    MisalignedRuns,
    #[error("no input files")]
    NoInputFiles,
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Pearson chi-square test of `counts` against a uniform distribution.
/// Returns the statistic and its upper-tail p-value.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let k = counts.len();
    assert!(k >= 2, "need at least two categories");
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

#[cfg(test)]
mod tests;
