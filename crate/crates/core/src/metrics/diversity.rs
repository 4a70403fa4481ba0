//! Joint-action diversity: one-hot encoding, 2-D PCA, mean-shift clustering.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::engine::Team;
use crate::env::replay::ReplayRecord;

/// Marks an empty slot in a joint-action row.
pub const PAD_CODE: usize = usize::MAX;

const POWER_MAX_ITERS: usize = 10_000;
const POWER_TOL: f64 = 1e-13;
const SHIFT_MAX_ITERS: usize = 1_000;

/// Per-step joint actions of one team: one row per step, one column per
/// agent. Rows shorter than `n_agents` are padded with [`PAD_CODE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointActionLog {
    pub n_agents: usize,
    pub n_actions: usize,
    pub rows: Vec<Vec<usize>>,
}

impl JointActionLog {
    pub fn new(n_agents: usize, n_actions: usize) -> Self {
        JointActionLog {
            n_agents,
            n_actions,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, actions: &[usize]) -> Result<(), MetricsError> {
        let row = self.rows.len();
        if actions.len() > self.n_agents {
            return Err(MetricsError::RaggedRows);
        }
        if let Some(&code) = actions.iter().find(|&&c| c != PAD_CODE && c >= self.n_actions) {
            return Err(MetricsError::InvalidCode {
                row,
                code,
                n_actions: self.n_actions,
            });
        }
        let mut r = actions.to_vec();
        r.resize(self.n_agents, PAD_CODE);
        self.rows.push(r);
        Ok(())
    }

    /// Builds a log from replay records of one team. The action-space size is
    /// taken from the largest code seen.
    pub fn from_replays(records: &[ReplayRecord], team: Team) -> Result<Self, MetricsError> {
        let n_agents = records.iter().map(|r| r.actions(team).len()).max().unwrap_or(0);
        let n_actions = records
            .iter()
            .flat_map(|r| r.actions(team).iter().copied())
            .max()
            .map_or(0, |m| m + 1);
        let mut log = JointActionLog::new(n_agents, n_actions);
        for r in records {
            log.push(r.actions(team))?;
        }
        Ok(log)
    }

    pub fn one_hot(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut v = vec![0.0; self.n_agents * self.n_actions];
                for (i, &c) in row.iter().enumerate() {
                    if c != PAD_CODE {
                        v[i * self.n_actions + c] = 1.0;
                    }
                }
                v
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub projection: Vec<[f64; 2]>,
    pub explained: [f64; 2],
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Flips `v` so its largest-magnitude entry is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dominant eigenpair of a symmetric PSD matrix. `None` when the matrix is
/// numerically zero.
fn power_iteration(m: &[Vec<f64>], scale: f64) -> Option<(f64, Vec<f64>)> {
    let d = m.len();
    // start from the column with the largest diagonal entry
    let j = (0..d).max_by(|&a, &b| m[a][a].total_cmp(&m[b][b]))?;
    let mut v: Vec<f64> = (0..d).map(|i| m[i][j]).collect();
    let n0 = norm(&v);
    if n0 <= 1e-12 * scale {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n0);
    for _ in 0..POWER_MAX_ITERS {
        let mut w = mat_vec(m, &v);
        let n = norm(&w);
        if n <= 1e-12 * scale {
            return None;
        }
        w.iter_mut().for_each(|x| *x /= n);
        let diff: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if diff < POWER_TOL {
            break;
        }
    }
    let lambda = dot(&v, &mat_vec(m, &v));
    Some((lambda, v))
}

/// A unit vector orthogonal to `u` (Gram-Schmidt on the standard basis).
fn orthogonal_to(u: &[f64]) -> Vec<f64> {
    let mut best: Option<Vec<f64>> = None;
    let mut best_norm = 0.0;
    for k in 0..u.len() {
        let mut e = vec![0.0; u.len()];
        e[k] = 1.0;
        let p = u[k];
        e.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
        let n = norm(&e);
        if n > best_norm {
            best_norm = n;
            best = Some(e.into_iter().map(|x| x / n).collect());
        }
    }
    best.expect("dimension >= 2")
}

/// Projects rows onto their top two principal directions.
pub fn pca_2d(rows: &[Vec<f64>]) -> Result<Pca, MetricsError> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n < 2 || d < 2 {
        return Err(MetricsError::TooSmall {
            rows: 2,
            cols: 2,
            got_rows: n,
            got_cols: d,
        });
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(MetricsError::RaggedRows);
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &centered {
        for i in 0..d {
            if r[i] == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i][j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    if trace <= 0.0 {
        return Err(MetricsError::DegenerateData);
    }
    let (l1, mut v1) = power_iteration(&cov, trace).ok_or(MetricsError::DegenerateData)?;
    fix_sign(&mut v1);
    for i in 0..d {
        for j in 0..d {
            cov[i][j] -= l1 * v1[i] * v1[j];
        }
    }
    let (l2, mut v2) = match power_iteration(&cov, trace) {
        Some((l, v)) if l > 1e-12 * trace => {
            // re-orthogonalize against round-off
            let p = dot(&v, &v1);
            let mut v: Vec<f64> = v.iter().zip(&v1).map(|(a, b)| a - p * b).collect();
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            (l, v)
        }
        _ => (0.0, orthogonal_to(&v1)),
    };
    fix_sign(&mut v2);
    let projection = centered.iter().map(|r| [dot(r, &v1), dot(r, &v2)]).collect();
    let explained = [(l1 / trace).clamp(0.0, 1.0), (l2 / trace).clamp(0.0, 1.0)];
    Ok(Pca {
        projection,
        explained,
        components: [v1, v2],
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanShift {
    pub labels: Vec<usize>,
    pub modes: Vec<[f64; 2]>,
    /// Largest number of shift iterations any point needed.
    pub iterations: usize,
}

impl MeanShift {
    pub fn n_clusters(&self) -> usize {
        self.modes.len()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Collapses bitwise-identical points into (point, weight) pairs, keeping
/// first-appearance order, and maps every input to its unique index.
fn dedupe(points: &[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<f64>, Vec<usize>) {
    let mut index: HashMap<[u64; 2], usize> = HashMap::new();
    let mut uniq = Vec::new();
    let mut weight = Vec::new();
    let mut map = Vec::with_capacity(points.len());
    for p in points {
        let key = [p[0].to_bits(), p[1].to_bits()];
        let k = *index.entry(key).or_insert_with(|| {
            uniq.push(*p);
            weight.push(0.0);
            uniq.len() - 1
        });
        weight[k] += 1.0;
        map.push(k);
    }
    (uniq, weight, map)
}

/// Flat-kernel mean-shift. Every point climbs to the mean of the sample
/// points within `bandwidth` until it moves less than `1e-4 · bandwidth`;
/// modes closer than `bandwidth / 2` are merged. Labels are numbered by
/// first appearance.
pub fn mean_shift(points: &[[f64; 2]], bandwidth: f64) -> Result<MeanShift, MetricsError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(MetricsError::InvalidBandwidth(bandwidth));
    }
    let (uniq, weight, map) = dedupe(points);
    let tol = 1e-4 * bandwidth;
    let mut iterations = 0;
    let mut converged = Vec::with_capacity(uniq.len());
    for &start in &uniq {
        let mut x = start;
        let mut it = 0;
        loop {
            it += 1;
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for (p, &w) in uniq.iter().zip(&weight) {
                if dist(*p, x) <= bandwidth {
                    sx += w * p[0];
                    sy += w * p[1];
                    sw += w;
                }
            }
            let next = [sx / sw, sy / sw];
            let moved = dist(next, x);
            x = next;
            if moved < tol || it >= SHIFT_MAX_ITERS {
                break;
            }
        }
        iterations = iterations.max(it);
        converged.push(x);
    }
    let mut modes: Vec<[f64; 2]> = Vec::new();
    let mut uniq_label = Vec::with_capacity(uniq.len());
    for x in converged {
        match modes.iter().position(|m| dist(*m, x) < bandwidth / 2.0) {
            Some(k) => uniq_label.push(k),
            None => {
                modes.push(x);
                uniq_label.push(modes.len() - 1);
            }
        }
    }
    Ok(MeanShift {
        labels: map.iter().map(|&k| uniq_label[k]).collect(),
        modes,
        iterations,
    })
}

/// Half the median pairwise distance. When more than half of the pairs
/// coincide the median is zero, so half the largest distance is used; a
/// sample of identical points gets bandwidth 1.
pub fn default_bandwidth(points: &[[f64; 2]]) -> f64 {
    let (uniq, weight, _) = dedupe(points);
    // (distance, multiplicity) of every unordered pair
    let mut pairs: Vec<(f64, u64)> = vec![(0.0, 0)];
    for (i, &w) in weight.iter().enumerate() {
        let w = w as u64;
        pairs[0].1 += w * w.saturating_sub(1) / 2;
        for j in i + 1..uniq.len() {
            pairs.push((dist(uniq[i], uniq[j]), w * weight[j] as u64));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max = pairs.last().map_or(0.0, |p| p.0);
    if max == 0.0 {
        return 1.0;
    }
    let total: u64 = pairs.iter().map(|p| p.1).sum();
    // 1-based rank lookup in the expanded sorted list
    let kth = |k: u64| {
        let mut acc = 0;
        for &(d, c) in &pairs {
            acc += c;
            if acc >= k {
                return d;
            }
        }
        max
    };
    let median = if total % 2 == 1 {
        kth(total / 2 + 1)
    } else {
        (kth(total / 2) + kth(total / 2 + 1)) / 2.0
    };
    if median > 0.0 {
        0.5 * median
    } else {
        0.5 * max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub projection: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    /// Explained variance ratios of the two components; both zero when the
    /// log holds a single distinct joint action.
    pub explained_variance: [f64; 2],
    pub bandwidth: f64,
    pub rows: usize,
}

/// One-hot encodes the log, projects it to 2-D and clusters the projection.
/// `bandwidth` defaults to [`default_bandwidth`] of the projection.
pub fn action_diversity(log: &JointActionLog, bandwidth: Option<f64>) -> Result<DiversityReport, MetricsError> {
    if log.rows.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let x = log.one_hot();
    let (projection, explained) = match pca_2d(&x) {
        Ok(p) => (p.projection, p.explained),
        Err(MetricsError::DegenerateData) => (vec![[0.0, 0.0]; x.len()], [0.0, 0.0]),
        Err(MetricsError::TooSmall { got_rows: 1, .. }) => (vec![[0.0, 0.0]], [0.0, 0.0]),
        Err(e) => return Err(e),
    };
    let bw = bandwidth.unwrap_or_else(|| default_bandwidth(&projection));
    let ms = mean_shift(&projection, bw)?;
    Ok(DiversityReport {
        n_clusters: ms.n_clusters(),
        labels: ms.labels,
        projection,
        explained_variance: explained,
        bandwidth: bw,
        rows: log.rows.len(),
    })
}

/// Writes `<stem>.json` (the full report) and `<stem>.csv` with plot-ready
/// `x,y,series` rows, the series being the cluster label.
pub fn write_diversity(dir: &Path, stem: &str, report: &DiversityReport) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join(format!("{stem}.json")))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    writeln!(f)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    w.write_record(["x", "y", "series"])?;
    for (p, l) in report.projection.iter().zip(&report.labels) {
        w.write_record([p[0].to_string(), p[1].to_string(), format!("cluster{l}")])?;
    }
    w.flush()?;
    Ok(())
}
