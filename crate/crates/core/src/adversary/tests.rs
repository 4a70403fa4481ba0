use super::*;
use crate::engine::{EngineConfig, UnitKind};
use crate::env::RewardConfig;
use crate::learners::{build_learner, RandomPolicy, TeamSpec};
use crate::rng::rng_from;
use crate::scenario::{builtin_scenario, ScenarioSpec};
use proptest::prelude::*;

fn env(name: &str) -> Env {
    Env::new(builtin_scenario(name).unwrap(), EngineConfig::default(), RewardConfig::default()).unwrap()
}

fn bot(env: &Env, team: Team) -> Box<dyn Learner> {
    Box::new(ScriptedBot::new(env.obs_layout(team).clone()))
}

fn small_learner() -> LearnerConfig {
    LearnerConfig {
        hidden: vec![16],
        batch_size: 4,
        buffer_capacity: 32,
        mixer_embed: 4,
        eps_anneal_steps: 2000,
        ..LearnerConfig::default()
    }
}

fn small_config(steps: u64, interval: u64) -> TrainConfig {
    TrainConfig {
        total_env_steps: steps,
        test_interval: interval,
        test_episodes: 8,
        learner: small_learner(),
        ..TrainConfig::default()
    }
}

fn learner(env: &Env, team: Team, algo: Algo, seed: u64) -> Box<dyn Learner> {
    build_learner(algo, &TeamSpec::of(env, team), &small_learner(), seed).unwrap()
}

#[test]
fn bot_mirror_match_ends_before_the_limit() {
    let mut e = env("3m");
    let (r, b) = (bot(&e, Team::Red), bot(&e, Team::Blue));
    let mut rngs = [rng_from(0), rng_from(1)];
    let rec = run_episode(&mut e, r.as_ref(), b.as_ref(), 0, &mut rngs, &EpisodeOptions::default()).unwrap();
    assert!(rec.steps < e.scenario().episode_step_limit, "{}", rec.steps);
    // identical scripts on a mirrored layout trade evenly down to mutual elimination
    assert_eq!(rec.outcome, Outcome::Draw);
    let w = e.world().unwrap();
    assert_eq!(w.alive_count(Team::Red), 0);
    assert_eq!(w.alive_count(Team::Blue), 0);
}

#[test]
fn random_play_mostly_draws() {
    let mut e = env("3m");
    let p = evaluate(&mut e, &RandomPolicy, &RandomPolicy, 200, 5).unwrap();
    assert_eq!(p.episodes(), 200);
    assert!(p.draws > 100, "{p:?}");
}

#[test]
fn bot_beats_random() {
    let mut e = env("3m");
    let b = bot(&e, Team::Red);
    let p = evaluate(&mut e, b.as_ref(), &RandomPolicy, 32, 0).unwrap();
    assert_eq!(p.episodes(), 32);
    assert!(p.wins >= 30, "{p:?}");
}

#[test]
fn frozen_self_play_draws_every_episode() {
    let mut e = env("3m");
    let mut l = learner(&e, Team::Red, Algo::Qmix, 4);
    l.freeze();
    let p = evaluate(&mut e, l.as_ref(), l.as_ref(), 32, 1).unwrap();
    assert_eq!((p.wins, p.draws, p.losses), (0, 32, 0));
    assert_eq!(p.mean_return_red, p.mean_return_blue);
}

#[test]
fn episodes_repeat_under_fixed_seeds() {
    let mut e = env("3m");
    let a = learner(&e, Team::Red, Algo::Iql, 1);
    let b = learner(&e, Team::Blue, Algo::Vdn, 2);
    let opts = EpisodeOptions {
        epsilon: [0.3, 0.3],
        collect: [true, true],
        ..EpisodeOptions::default()
    };
    let run = |e: &mut Env| {
        let mut rngs = [rng_from(7), rng_from(8)];
        run_episode(e, a.as_ref(), b.as_ref(), 3, &mut rngs, &opts).unwrap()
    };
    let (x, y) = (run(&mut e), run(&mut e));
    assert_eq!(x.red, y.red);
    assert_eq!(x.blue, y.blue);
    assert_eq!(x.outcome, y.outcome);
    assert_eq!(x.return_red.to_bits(), y.return_red.to_bits());
}

#[test]
fn collected_episodes_match_the_returns() {
    let mut e = env("3m");
    let b = bot(&e, Team::Red);
    let opts = EpisodeOptions {
        collect: [true, true],
        replay: Some(0),
        ..EpisodeOptions::default()
    };
    let mut rngs = [rng_from(0), rng_from(1)];
    let rec = run_episode(&mut e, b.as_ref(), &RandomPolicy, 2, &mut rngs, &opts).unwrap();
    let red = rec.red.unwrap();
    assert_eq!(red.len(), rec.steps as usize);
    assert_eq!(red.total_reward(), rec.return_red);
    assert_eq!(rec.replay.len(), rec.steps as usize);
    assert_eq!(rec.replay.last().unwrap().outcome, rec.outcome);
}

#[test]
fn step_cap_truncates() {
    let mut e = env("3m");
    let opts = EpisodeOptions {
        collect: [true, false],
        step_cap: Some(3),
        ..EpisodeOptions::default()
    };
    let mut rngs = [rng_from(0), rng_from(1)];
    let rec = run_episode(&mut e, &RandomPolicy, &RandomPolicy, 2, &mut rngs, &opts).unwrap();
    assert_eq!(rec.steps, 3);
    assert!(!rec.red.unwrap().terminated);
    assert_eq!(rec.outcome, Outcome::Ongoing);
}

#[test]
fn vs_bot_bookkeeping_and_budget() {
    let mut e = env("3m");
    let cfg = small_config(3000, 1000);
    let l = learner(&e, Team::Red, Algo::Iql, 0);
    let run = train_vs_bot(&mut e, l, &cfg, 0).unwrap();
    assert!(run.env_steps <= 3000);
    assert_eq!(run.env_steps, 3000);
    let steps: Vec<u64> = run.metrics.points.iter().map(|p| p.env_step).collect();
    assert_eq!(steps[0], 0);
    assert_eq!(*steps.last().unwrap(), 3000);
    assert!(steps.len() >= 4);
    for p in &run.metrics.points {
        assert_eq!(p.episodes(), 8);
    }
    assert_eq!(run.metrics.algo_red, "iql");
    assert_eq!(run.metrics.algo_blue, "bot");
    assert_eq!(run.metrics.mode, Mode::Bot);
}

#[test]
fn vs_bot_runs_are_reproducible() {
    let mut e = env("3m");
    let cfg = small_config(2000, 500);
    let l = learner(&e, Team::Red, Algo::Vdn, 3);
    let a = train_vs_bot(&mut e, l, &cfg, 3).unwrap();
    let l = learner(&e, Team::Red, Algo::Vdn, 3);
    let b = train_vs_bot(&mut e, l, &cfg, 3).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.learner.param_hash(), b.learner.param_hash());
}

#[test]
fn evaluations_do_not_perturb_training() {
    let mut e = env("3m");
    let l = learner(&e, Team::Red, Algo::Iql, 3);
    let a = train_vs_bot(&mut e, l, &small_config(2000, 300), 3).unwrap();
    let l = learner(&e, Team::Red, Algo::Iql, 3);
    let b = train_vs_bot(&mut e, l, &small_config(2000, 2000), 3).unwrap();
    assert_eq!(a.learner.param_hash(), b.learner.param_hash());
    assert_eq!(a.metrics.final_point(), b.metrics.final_point());
}

#[test]
fn paired_counts_are_dual() {
    let mut e = env("3m");
    let cfg = small_config(3000, 600);
    let (a, b) = (learner(&e, Team::Red, Algo::Iql, 1), learner(&e, Team::Blue, Algo::Iql, 2));
    let run = train_paired(&mut e, a, b, &cfg, 9).unwrap();
    assert!(run.warnings.is_empty());
    assert_eq!(run.metrics_a.points.len(), run.metrics_b.points.len());
    for (a, b) in run.metrics_a.points.iter().zip(&run.metrics_b.points) {
        assert_eq!(a.wins, b.losses);
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.episodes(), 8);
        assert_eq!(a.env_step, b.env_step);
    }
    assert!(run.learner_a.checkpoint().unwrap().manifest.train_steps > 0);
    assert!(run.learner_b.checkpoint().unwrap().manifest.train_steps > 0);
}

#[test]
fn paired_runs_are_reproducible() {
    let mut e = env("3m");
    let cfg = small_config(1500, 500);
    let go = |e: &mut Env| {
        let (a, b) = (learner(e, Team::Red, Algo::Qmix, 1), learner(e, Team::Blue, Algo::Iql, 2));
        train_paired(e, a, b, &cfg, 4).unwrap()
    };
    let (x, y) = (go(&mut e), go(&mut e));
    assert_eq!(x.metrics_a, y.metrics_a);
    assert_eq!(x.metrics_b, y.metrics_b);
    assert_eq!(x.learner_a.param_hash(), y.learner_a.param_hash());
}

#[test]
fn paired_on_asymmetric_scenario_warns() {
    let spec = ScenarioSpec::new("2v3", vec![(UnitKind::Marine, 2)], vec![(UnitKind::Marine, 3)], 40);
    let mut e = Env::new(spec, EngineConfig::default(), RewardConfig::default()).unwrap();
    let cfg = small_config(200, 200);
    let run = train_paired(&mut e, Box::new(RandomPolicy), Box::new(RandomPolicy), &cfg, 0).unwrap();
    assert_eq!(run.warnings.len(), 1);
    assert!(matches!(run.warnings[0], AdversaryWarning::AsymmetricScenario(_)));
}

#[test]
fn single_bot_pool_matches_vs_bot() {
    let mut e = env("3m");
    let cfg = small_config(1500, 500);
    let l = learner(&e, Team::Red, Algo::Iql, 5);
    let a = train_vs_bot(&mut e, l, &cfg, 5).unwrap();
    let pool = OpponentPool::new(vec![PoolMember::new("bot", bot(&e, Team::Blue))]).unwrap();
    let l = learner(&e, Team::Red, Algo::Iql, 5);
    let b = train_mixed(&mut e, l, &pool, &cfg, 5).unwrap();
    assert_eq!(a.metrics.points, b.metrics.points);
    assert_eq!(a.learner.param_hash(), b.learner.param_hash());
    assert_eq!(b.opponent_draws, vec![b.episodes]);
}

#[test]
fn pools_reject_mutable_members() {
    let e = env("3m");
    let members = vec![
        PoolMember::new("bot", bot(&e, Team::Blue)),
        PoolMember::new("live", learner(&e, Team::Blue, Algo::Iql, 0)),
    ];
    assert!(matches!(
        OpponentPool::new(members),
        Err(AdversaryError::MutablePoolMember { index: 1, .. })
    ));
    assert!(matches!(OpponentPool::new(vec![]), Err(AdversaryError::EmptyPool)));
}

#[test]
fn mixed_run_draws_every_member_and_keeps_hashes() {
    let mut e = env("3m");
    let mut members = vec![PoolMember::new("bot", bot(&e, Team::Blue))];
    for (k, algo) in [Algo::Iql, Algo::Vdn, Algo::Qmix].into_iter().enumerate() {
        let mut l = learner(&e, Team::Blue, algo, k as u64);
        l.freeze();
        members.push(PoolMember::new(algo.as_str(), l));
    }
    let pool = OpponentPool::new(members).unwrap();
    let before = pool.hashes();
    let mut cfg = small_config(50_000, 50_000);
    cfg.max_episodes = Some(400);
    let l = learner(&e, Team::Red, Algo::Vdn, 0);
    let run = train_mixed(&mut e, l, &pool, &cfg, 1).unwrap();
    assert_eq!(run.episodes, 400);
    assert_eq!(run.opponent_draws.iter().sum::<u64>(), 400);
    assert!(run.opponent_draws.iter().all(|&d| d > 60), "{:?}", run.opponent_draws);
    assert_eq!(pool.hashes(), before);
    assert_eq!(run.metrics.algo_blue, "pool4");
}

#[test]
fn pool_recipes() {
    let mut e = env("3m");
    let empty = PoolRecipe {
        members: vec![],
        ..PoolRecipe::default()
    };
    assert!(matches!(build_opponent_pool(&mut e, &empty), Err(AdversaryError::EmptyRecipe)));
    let recipe = PoolRecipe {
        steps_per_member: 600,
        learner: small_learner(),
        seed: 3,
        ..PoolRecipe::default()
    };
    let (pool, cks) = build_opponent_pool(&mut e, &recipe).unwrap();
    assert_eq!(pool.len(), 4);
    assert!(pool.members().iter().all(|m| m.learner.is_frozen()));
    assert_eq!(cks.len(), 3);
    for (ck, algo) in cks.iter().zip([Algo::Iql, Algo::Vdn, Algo::Qmix]) {
        assert_eq!(ck.manifest.algo, algo);
        assert_eq!(ck.manifest.env_steps, 600);
        assert_eq!(ck.manifest.mode.as_deref(), Some("pool"));
        assert_eq!(ck.manifest.scenario, "3m");
    }
    assert_ne!(cks[0].manifest.seed, cks[1].manifest.seed);
}

fn run_with(rates: &[(u32, u32)]) -> RunMetrics {
    RunMetrics {
        seed: 0,
        mode: Mode::Bot,
        scenario: "3m".into(),
        algo_red: "iql".into(),
        algo_blue: "bot".into(),
        test_episodes: 10,
        points: rates
            .iter()
            .enumerate()
            .map(|(k, &(w, d))| EvalPoint {
                env_step: k as u64 * 100,
                wins: w,
                draws: d,
                losses: 10 - w - d,
                mean_return_red: 0.5,
                mean_return_blue: -0.25,
            })
            .collect(),
    }
}

#[test]
fn median_examples() {
    let runs: Vec<RunMetrics> = [2, 4, 6, 8, 10].iter().map(|&w| run_with(&[(w, 0)])).collect();
    let c = median_win_rate(&runs).unwrap();
    assert_eq!(c.median, vec![0.6]);
    assert_eq!(c.mean, vec![0.6]);
    assert_eq!(c.q25, vec![0.4]);
    assert_eq!(c.q75, vec![0.8]);

    let one = run_with(&[(1, 2), (3, 0), (7, 1)]);
    let c = median_win_rate(std::slice::from_ref(&one)).unwrap();
    assert_eq!(c.median, vec![0.1, 0.3, 0.7]);
    assert_eq!(c.env_steps, vec![0, 100, 200]);

    let c = median_win_rate(&[run_with(&[(4, 0)]), run_with(&[(6, 0)])]).unwrap();
    assert!((c.median[0] - 0.5).abs() < 1e-15);

    assert!(matches!(
        median_win_rate(&[run_with(&[(4, 0)]), run_with(&[(4, 0), (5, 0)])]),
        Err(AdversaryError::MisalignedRuns)
    ));
    assert!(matches!(median_win_rate(&[]), Err(AdversaryError::NoRuns)));
}

#[test]
fn runs_align_by_evaluation_index() {
    let mut runs: Vec<RunMetrics> = [2, 4, 6].iter().map(|&w| run_with(&[(0, 0), (w, 0)])).collect();
    runs[0].points[1].env_step = 104;
    runs[1].points[1].env_step = 111;
    runs[2].points[1].env_step = 100;
    let c = median_win_rate(&runs).unwrap();
    assert_eq!(c.env_steps, vec![0, 104]);
    assert_eq!(c.median, vec![0.0, 0.4]);
}

#[test]
fn metrics_csv_round_trip() {
    let mut a = run_with(&[(1, 2), (3, 0)]);
    let mut b = run_with(&[(5, 5), (0, 0)]);
    b.seed = 1;
    a.points[0].mean_return_red = 0.1 + 0.2;
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with(
        "env_step,wins,draws,losses,win_rate,mean_return_red,mean_return_blue,seed,mode,scenario,algo_red,algo_blue\n"
    ));
    assert!(text.contains("100,3,0,7,0.3,0.5,-0.25,0,bot,3m,iql,bot"));
    let back = read_metrics_csv(buf.as_slice()).unwrap();
    assert_eq!(back, vec![a, b]);
}

#[test]
fn config_validation() {
    let mut c = TrainConfig::default();
    assert!(c.validate().is_ok());
    c.test_episodes = 0;
    assert!(c.validate().is_err());
    let c = TrainConfig {
        total_env_steps: 0,
        ..TrainConfig::default()
    };
    assert!(c.validate().is_err());
    assert_eq!(TrainConfig::for_mode(Mode::Paired).total_env_steps, 300_000);
    assert_eq!(TrainConfig::for_mode(Mode::Mixed).total_env_steps, 200_000);
    assert_eq!("paired".parse::<Mode>().unwrap(), Mode::Paired);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn every_point_sums_to_test_episodes(seed in 0u64..1000, n in 1u32..12, interval in 100u64..700) {
        let mut e = env("3m");
        let cfg = TrainConfig { test_episodes: n, ..small_config(1200, interval) };
        let l = learner(&e, Team::Red, Algo::Iql, seed);
        let run = train_paired(&mut e, l, Box::new(RandomPolicy), &cfg, seed).unwrap();
        prop_assert!(run.env_steps <= 1200);
        for (a, b) in run.metrics_a.points.iter().zip(&run.metrics_b.points) {
            prop_assert_eq!(a.episodes(), n);
            prop_assert_eq!(a.wins, b.losses);
        }
    }
}
