use super::*;
use crate::adversary::{EvalPoint, Mode, RunMetrics};
use crate::rng::rng_from;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

#[test]
fn rank_one_data_is_fully_explained() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.37 - 2.0, 2.0 * (i as f64 * 0.37 - 2.0)]).collect();
    let p = pca_2d(&rows).unwrap();
    assert!((p.explained[0] - 1.0).abs() < 1e-9, "{:?}", p.explained);
    assert!(p.explained[1].abs() < 1e-9);
    // direction (1, 2)/sqrt(5), largest loading positive
    let s = 5f64.sqrt();
    assert!((p.components[0][0] - 1.0 / s).abs() < 1e-9);
    assert!((p.components[0][1] - 2.0 / s).abs() < 1e-9);
    for (r, q) in rows.iter().zip(&p.projection) {
        assert!(q[1].abs() < 1e-9);
        let x = r[0] - p.mean[0];
        assert!((q[0] - x * s).abs() < 1e-9);
    }
}

#[test]
fn isotropic_sample_splits_variance() {
    let mut rng = rng_from(12);
    let n = Normal::new(0.0, 1.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..10_000).map(|_| vec![n.sample(&mut rng), n.sample(&mut rng)]).collect();
    let p = pca_2d(&rows).unwrap();
    for e in p.explained {
        assert!((e - 0.5).abs() < 0.05, "{:?}", p.explained);
    }
    assert!((p.explained[0] + p.explained[1] - 1.0).abs() < 1e-9);
}

#[test]
fn projection_is_centered() {
    let mut rng = rng_from(3);
    let n = Normal::new(1.5, 2.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..5).map(|_| n.sample(&mut rng)).collect()).collect();
    let p = pca_2d(&rows).unwrap();
    for k in 0..2 {
        let m: f64 = p.projection.iter().map(|q| q[k]).sum::<f64>() / 500.0;
        assert!(m.abs() < 1e-9);
    }
    assert!(p.explained[0] >= p.explained[1]);
    assert!(p.explained[0] + p.explained[1] <= 1.0 + 1e-12);
    let c = &p.components;
    let d: f64 = c[0].iter().zip(&c[1]).map(|(a, b)| a * b).sum();
    assert!(d.abs() < 1e-9);
}

#[test]
fn pca_rejects_bad_input() {
    assert!(matches!(pca_2d(&[vec![1.0, 2.0]]), Err(MetricsError::TooSmall { .. })));
    assert!(matches!(pca_2d(&[vec![1.0], vec![2.0]]), Err(MetricsError::TooSmall { .. })));
    assert!(matches!(
        pca_2d(&[vec![1.0, 2.0], vec![1.0, 2.0]]),
        Err(MetricsError::DegenerateData)
    ));
    assert!(matches!(pca_2d(&[vec![1.0, 2.0], vec![1.0]]), Err(MetricsError::RaggedRows)));
}

#[test]
fn reprojecting_planar_data_is_stable() {
    let mut rng = rng_from(5);
    let n = Normal::new(0.0, 1.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..300)
        .map(|_| {
            let (a, b) = (n.sample(&mut rng) * 3.0, n.sample(&mut rng));
            vec![a, b]
        })
        .collect();
    let p = pca_2d(&rows).unwrap();
    let again = pca_2d(&p.projection.iter().map(|q| q.to_vec()).collect::<Vec<_>>()).unwrap();
    for (a, b) in p.projection.iter().zip(&again.projection) {
        assert!((a[0] - b[0]).abs() < 1e-6 && (a[1] - b[1]).abs() < 1e-6, "{a:?} {b:?}");
    }
}

#[test]
fn mean_shift_examples() {
    let same = vec![[1.0, 1.0]; 10];
    let r = mean_shift(&same, 0.5).unwrap();
    assert_eq!(r.n_clusters(), 1);

    let one = mean_shift(&[[3.0, -1.0]], 1.0).unwrap();
    assert_eq!(one.n_clusters(), 1);
    assert_eq!(one.iterations, 1);
    assert_eq!(one.labels, vec![0]);

    let mut rng = rng_from(9);
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for k in 0..200 {
        let c = if k % 2 == 0 { 0.0 } else { 10.0 };
        let a: f64 = rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU);
        let rad: f64 = 0.5 * rand::Rng::random::<f64>(&mut rng).sqrt();
        pts.push([c + rad * a.cos(), c + rad * a.sin()]);
        truth.push(k % 2);
    }
    let r = mean_shift(&pts, 2.0).unwrap();
    assert_eq!(r.n_clusters(), 2);
    for (l, t) in r.labels.iter().zip(&truth) {
        assert_eq!(*l, *t);
    }
    assert!(mean_shift(&pts, 0.0).is_err());
    assert!(mean_shift(&pts, f64::NAN).is_err());
}

fn log_of(rows: &[&[usize]], n_actions: usize) -> JointActionLog {
    let mut log = JointActionLog::new(rows[0].len(), n_actions);
    for r in rows {
        log.push(r).unwrap();
    }
    log
}

#[test]
fn diversity_of_constant_logs() {
    let log = log_of(&vec![&[1usize, 6, 7][..]; 50], 9);
    let r = action_diversity(&log, None).unwrap();
    assert_eq!(r.n_clusters, 1);
    assert_eq!(r.rows, 50);

    let mut rows = vec![&[1usize, 6, 7][..]; 30];
    rows.extend(vec![&[4usize, 4, 4][..]; 20]);
    let log = log_of(&rows, 9);
    let r = action_diversity(&log, None).unwrap();
    assert_eq!(r.n_clusters, 2);
    assert!((r.explained_variance[0] - 1.0).abs() < 1e-9);
    assert!(r.labels[..30].iter().all(|&l| l == 0));
    assert!(r.labels[30..].iter().all(|&l| l == 1));
    // an explicit bandwidth below the mode distance gives the same split
    let r = action_diversity(&log, Some(0.1)).unwrap();
    assert_eq!(r.n_clusters, 2);
}

#[test]
fn diversity_rejects_bad_logs() {
    let log = JointActionLog::new(2, 5);
    assert!(matches!(action_diversity(&log, None), Err(MetricsError::EmptyLog)));
    let mut log = JointActionLog::new(2, 5);
    assert!(matches!(log.push(&[1, 5]), Err(MetricsError::InvalidCode { code: 5, .. })));
    log.push(&[1]).unwrap();
    assert_eq!(log.rows[0], vec![1, PAD_CODE]);
    assert_eq!(log.one_hot()[0], vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn default_bandwidth_conventions() {
    // pairwise distances 1, 2, 3 -> median 2
    let b = default_bandwidth(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]);
    assert!((b - 1.0).abs() < 1e-12);
    // four distances 1, 1, 2, 2 (square side 1 has 4 sides + 2 diagonals)
    let b = default_bandwidth(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
    assert!((b - 0.5).abs() < 1e-12);
    assert_eq!(default_bandwidth(&[[2.0, 2.0]; 4]), 1.0);
    // mostly coincident pairs: fall back to half the largest distance
    let mut pts = vec![[0.0, 0.0]; 10];
    pts.push([4.0, 0.0]);
    assert!((default_bandwidth(&pts) - 2.0).abs() < 1e-12);
}

#[test]
fn chi_square_uniformity() {
    let (stat, p) = chi_square_uniform(&[100, 100, 100]);
    assert_eq!(stat, 0.0);
    assert!((p - 1.0).abs() < 1e-12);
    // 2 categories, stat = 4 -> p = 0.0455
    let (stat, p) = chi_square_uniform(&[40, 60]);
    assert!((stat - 4.0).abs() < 1e-12);
    assert!((p - 0.045500263896358).abs() < 1e-9, "{p}");
}

fn run(algo: &str, opponent: &str, scenario: &str, seed: u64, wins: &[u32]) -> RunMetrics {
    RunMetrics {
        seed,
        mode: Mode::Paired,
        scenario: scenario.into(),
        algo_red: algo.into(),
        algo_blue: opponent.into(),
        test_episodes: 32,
        points: wins
            .iter()
            .enumerate()
            .map(|(k, &w)| EvalPoint {
                env_step: 1000 * k as u64,
                wins: w,
                draws: 32 - w,
                losses: 0,
                mean_return_red: 0.0,
                mean_return_blue: 0.0,
            })
            .collect(),
    }
}

#[test]
fn single_run_aggregate_is_the_run() {
    let r = run("iql", "vdn", "3m", 0, &[3, 9, 17]);
    let s = aggregate_runs(std::slice::from_ref(&r)).unwrap();
    assert_eq!(s.pairings.len(), 1);
    let c = &s.pairings[0].curve;
    assert_eq!(c.env_steps, vec![0, 1000, 2000]);
    let raw: Vec<f64> = r.points.iter().map(|p| p.win_rate()).collect();
    assert_eq!(c.median, raw);
    assert_eq!(c.mean, raw);
    assert_eq!(s.pairings[0].final_median, 17.0 / 32.0);
    assert_eq!(s.scenarios[0].leader, None);
}

#[test]
fn advantage_needs_a_full_episode_margin() {
    // 16/32 vs 15/32 is exactly one episode
    let runs = vec![run("a", "a", "s1", 0, &[16]), run("b", "b", "s1", 0, &[15])];
    let s = aggregate_runs(&runs).unwrap();
    assert_eq!(s.scenarios[0].leader.as_deref(), Some("a"));

    let runs = vec![run("a", "a", "s1", 0, &[16]), run("b", "b", "s1", 0, &[15]), run("a", "a", "s2", 0, &[20])];
    let s = aggregate_runs(&runs).unwrap();
    assert_eq!(s.scenarios[0].leader.as_deref(), Some("a"));
    let a = s.overall.iter().find(|o| o.algo == "a").unwrap();
    assert_eq!(a.advantages, 1);
    assert_eq!(a.scenarios, 2);
}

#[test]
fn margin_threshold_example() {
    let scores = |x: f64, y: f64| {
        let runs = vec![run("lead", "x", "s", 0, &[0]), run("next", "x", "s", 0, &[0])];
        let mut s = aggregate_runs(&runs).unwrap();
        s.scenarios[0].scores[0].average_median = x;
        s.scenarios[0].scores[1].average_median = y;
        advantage_leader(&s.scenarios[0].scores)
    };
    assert_eq!(scores(0.50, 0.48), None);
    assert_eq!(scores(0.50, 0.46875).as_deref(), Some("lead"));
}

#[test]
fn averages_include_self_play() {
    // iql: vs itself 0.25, vs vdn 0.75 -> 0.5
    let runs = vec![
        run("iql", "iql", "3m", 0, &[8]),
        run("iql", "vdn", "3m", 0, &[24]),
        run("vdn", "iql", "3m", 0, &[8]),
        run("vdn", "vdn", "3m", 0, &[16]),
    ];
    let s = aggregate_runs(&runs).unwrap();
    let t = &s.scenarios[0];
    let iql = t.scores.iter().find(|x| x.algo == "iql").unwrap();
    assert_eq!(iql.opponents, 2);
    assert_eq!(iql.average_median, 0.5);
    let vdn = t.scores.iter().find(|x| x.algo == "vdn").unwrap();
    assert_eq!(vdn.average_median, 0.375);
    assert_eq!(t.leader.as_deref(), Some("iql"));
}

#[test]
fn misaligned_runs_are_rejected() {
    let runs = vec![run("iql", "vdn", "3m", 0, &[1, 2]), run("iql", "vdn", "3m", 1, &[1])];
    assert!(matches!(aggregate_runs(&runs), Err(MetricsError::MisalignedRuns)));
    assert!(matches!(aggregate_runs(&[]), Err(MetricsError::NoInputFiles)));
}

#[test]
fn summary_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let runs = vec![run("iql", "vdn", "3m", 0, &[1, 2]), run("iql", "vdn", "3m", 1, &[3, 4])];
    let s = aggregate_runs(&runs).unwrap();
    write_summary(dir.path(), &s).unwrap();
    let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("x,y,series"));
    assert_eq!(curves.lines().count(), 3);
    assert!(curves.contains("1000,0.09375,3m/paired/iql-vs-vdn"));
    let back: Summary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(back, s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mean_shift_partition_ignores_order(seed in 0u64..10_000, n in 2usize..60) {
        let mut rng = rng_from(seed);
        let centers = [[0.0, 0.0], [5.0, 1.0], [2.0, 6.0]];
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let c = centers[k % 3];
                [c[0] + rand::Rng::random_range(&mut rng, -0.3..0.3), c[1] + rand::Rng::random_range(&mut rng, -0.3..0.3)]
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<[f64; 2]> = order.iter().map(|&i| pts[i]).collect();
        let a = mean_shift(&pts, 1.5).unwrap();
        let b = mean_shift(&shuffled, 1.5).unwrap();
        prop_assert_eq!(a.n_clusters(), b.n_clusters());
        for i in 0..n {
            for j in 0..n {
                let same_a = a.labels[order[i]] == a.labels[order[j]];
                let same_b = b.labels[i] == b.labels[j];
                prop_assert_eq!(same_a, same_b);
            }
        }
    }

    #[test]
    fn explained_ratios_are_bounded(seed in 0u64..10_000, n in 3usize..40, d in 2usize..6) {
        let mut rng = rng_from(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).collect();
        let p = pca_2d(&rows).unwrap();
        prop_assert!(p.explained[0] >= p.explained[1] - 1e-9);
        prop_assert!(p.explained[0] <= 1.0 && p.explained[1] >= 0.0);
        prop_assert!(p.explained[0] + p.explained[1] <= 1.0 + 1e-9);
    }
}
