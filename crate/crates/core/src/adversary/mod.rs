//! Training controllers (vs the scripted bot, paired, mixed) and evaluation.

mod pool;
mod report;

pub use pool::{build_opponent_pool, OpponentPool, PoolMember, PoolRecipe};
pub use report::{median_win_rate, quantile, read_metrics_csv, write_metrics_csv, WinRateCurve, METRICS_COLUMNS};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Outcome, Team};
use crate::env::replay::ReplayRecord;
use crate::env::{Env, EnvError, TeamOutcome};
use crate::learners::{Algo, Episode, EpisodeBuilder, Learner, LearnerConfig, LearnerError, ScriptedBot};
use crate::rng::{derive_seed, derived_rng, streams, Rng};

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("pool member {index} ({name}) is not frozen")]
    MutablePoolMember { index: usize, name: String },
    #[error("pool member {index} ({name}) changed during the run")]
    PoolMemberChanged { index: usize, name: String },
    #[error("opponent pool is empty")]
    EmptyPool,
    #[error("pool recipe names no members")]
    EmptyRecipe,
    #[error("runs do not share evaluation points")]
    MisalignedRuns,
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("metrics file: {0}")]
    Metrics(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Non-fatal conditions reported alongside a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversaryWarning {
    AsymmetricScenario(String),
}

impl fmt::Display for AdversaryWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryWarning::AsymmetricScenario(s) => {
                write!(f, "scenario {s} is not symmetric; paired results are not side-fair")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(alias = "vsbot")]
    Bot,
    Paired,
    Mixed,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Bot => "bot",
            Mode::Paired => "paired",
            Mode::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Mode, AdversaryError> {
        match s {
            "bot" | "vsbot" => Ok(Mode::Bot),
            "paired" => Ok(Mode::Paired),
            "mixed" => Ok(Mode::Mixed),
            _ => Err(AdversaryError::InvalidConfig(format!("unknown mode {s:?}"))),
        }
    }
}

pub const DEFAULT_TEST_EPISODES: u32 = 32;
pub const DEFAULT_PAIRED_STEPS: u64 = 300_000;
pub const DEFAULT_MIXED_STEPS: u64 = 200_000;
pub const DEFAULT_BOT_STEPS: u64 = 300_000;

/// Settings for one training run. Step counts are environment steps: one
/// joint step of both teams counts once regardless of team sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub total_env_steps: u64,
    pub test_interval: u64,
    pub test_episodes: u32,
    pub seeds: Vec<u64>,
    /// Optional cap on training episodes; the step budget still applies.
    pub max_episodes: Option<u64>,
    /// Gradient steps taken after each collected episode.
    pub train_steps_per_episode: u32,
    pub learner: LearnerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Bot,
            total_env_steps: DEFAULT_BOT_STEPS,
            test_interval: 10_000,
            test_episodes: DEFAULT_TEST_EPISODES,
            seeds: (0..5).collect(),
            max_episodes: None,
            train_steps_per_episode: 1,
            learner: LearnerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn for_mode(mode: Mode) -> Self {
        let total_env_steps = match mode {
            Mode::Bot => DEFAULT_BOT_STEPS,
            Mode::Paired => DEFAULT_PAIRED_STEPS,
            Mode::Mixed => DEFAULT_MIXED_STEPS,
        };
        TrainConfig {
            mode,
            total_env_steps,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), AdversaryError> {
        if self.total_env_steps == 0 {
            return Err(AdversaryError::InvalidConfig("total_env_steps must be positive".into()));
        }
        if self.test_episodes == 0 {
            return Err(AdversaryError::InvalidConfig("test_episodes must be at least 1".into()));
        }
        if self.test_interval == 0 {
            return Err(AdversaryError::InvalidConfig("test_interval must be positive".into()));
        }
        self.learner.validate()?;
        Ok(())
    }
}

/// Result counts of one evaluation, from red's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub env_step: u64,
    pub wins: u32,
    pub draws: u32,
    pub losses: u32,
    pub mean_return_red: f64,
    pub mean_return_blue: f64,
}

impl EvalPoint {
    pub fn episodes(&self) -> u32 {
        self.wins + self.draws + self.losses
    }

    pub fn win_rate(&self) -> f64 {
        f64::from(self.wins) / f64::from(self.episodes())
    }

    /// The same evaluation seen from the other team.
    pub fn swapped(&self) -> EvalPoint {
        EvalPoint {
            env_step: self.env_step,
            wins: self.losses,
            draws: self.draws,
            losses: self.wins,
            mean_return_red: self.mean_return_blue,
            mean_return_blue: self.mean_return_red,
        }
    }
}

/// Evaluation history of one learner in one run. `algo_red` is the learner
/// the counts belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub mode: Mode,
    pub scenario: String,
    pub algo_red: String,
    pub algo_blue: String,
    pub test_episodes: u32,
    pub points: Vec<EvalPoint>,
}

impl RunMetrics {
    pub fn final_point(&self) -> Option<&EvalPoint> {
        self.points.last()
    }
}

/// Both teams' collected trajectories and the episode result.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub red: Option<Episode>,
    pub blue: Option<Episode>,
    pub outcome: Outcome,
    pub steps: u32,
    pub return_red: f64,
    pub return_blue: f64,
    pub replay: Vec<ReplayRecord>,
}

#[derive(Debug, Clone)]
pub struct EpisodeOptions {
    pub epsilon: [f64; 2],
    /// Store trajectories for red / blue.
    pub collect: [bool; 2],
    /// Stop after this many steps (the episode is then stored as truncated).
    pub step_cap: Option<u32>,
    /// Record per-step replay snapshots under this episode index.
    pub replay: Option<u64>,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions {
            epsilon: [0.0, 0.0],
            collect: [false, false],
            step_cap: None,
            replay: None,
        }
    }
}

fn check_fits(env: &Env, team: Team, learner: &dyn Learner) -> Result<(), AdversaryError> {
    if let Some(ck) = learner.checkpoint() {
        let i = env.team_info(team);
        if ck.team.n_agents != i.n_agents || ck.team.obs_len != i.obs_len || ck.team.n_actions != i.n_actions {
            return Err(LearnerError::CheckpointScenarioMismatch {
                expected: env.scenario().name.clone(),
                found: ck.manifest.scenario,
            }
            .into());
        }
    }
    Ok(())
}

/// Plays one episode in lockstep: each team acts on its own observations,
/// then the world advances once.
pub fn run_episode(
    env: &mut Env,
    red: &dyn Learner,
    blue: &dyn Learner,
    reset_seed: u64,
    rngs: &mut [Rng; 2],
    opts: &EpisodeOptions,
) -> Result<EpisodeRecord, AdversaryError> {
    let (mut r, mut b) = env.reset(reset_seed)?;
    let info = [env.team_info(Team::Red), env.team_info(Team::Blue)];
    let mut builders: [Option<EpisodeBuilder>; 2] = [0, 1].map(|k| {
        opts.collect[k].then(|| EpisodeBuilder::new(info[k].n_agents, info[k].obs_len, info[k].state_len, info[k].n_actions))
    });
    if let Some(bl) = &mut builders[0] {
        bl.push_view(&r.observations, &r.state, &r.masks);
    }
    if let Some(bl) = &mut builders[1] {
        bl.push_view(&b.observations, &b.state, &b.masks);
    }
    let mut last: [Vec<Option<usize>>; 2] = [vec![None; info[0].n_agents], vec![None; info[1].n_agents]];
    let (mut ret_r, mut ret_b) = (0.0, 0.0);
    let mut steps = 0u32;
    let mut replay = Vec::new();
    let [rng_r, rng_b] = rngs;
    loop {
        if opts.step_cap.is_some_and(|c| steps >= c) {
            break;
        }
        let ra = red.act(&r.observations, &r.masks, &last[0], opts.epsilon[0], rng_r)?;
        let ba = blue.act(&b.observations, &b.masks, &last[1], opts.epsilon[1], rng_b)?;
        let (nr, nb, events) = env.step_with_events(&ra, &ba)?;
        steps += 1;
        ret_r += nr.reward;
        ret_b += nb.reward;
        if let Some(bl) = &mut builders[0] {
            bl.push_transition(&ra, nr.reward);
            bl.push_view(&nr.observations, &nr.state, &nr.masks);
        }
        if let Some(bl) = &mut builders[1] {
            bl.push_transition(&ba, nb.reward);
            bl.push_view(&nb.observations, &nb.state, &nb.masks);
        }
        if let Some(ep) = opts.replay {
            let world = env.world().expect("stepped");
            replay.push(ReplayRecord::capture(
                ep,
                &env.scenario().name,
                world,
                &ra,
                &ba,
                (nr.reward, nb.reward),
                events,
                env.outcome(),
            ));
        }
        last = [ra.into_iter().map(Some).collect(), ba.into_iter().map(Some).collect()];
        r = nr;
        b = nb;
        if r.terminated {
            break;
        }
    }
    let outcome = env.outcome();
    // time-limit draws and truncated episodes bootstrap from the last view
    let world = env.world().expect("reset");
    let eliminated = world.alive_count(Team::Red) == 0 || world.alive_count(Team::Blue) == 0;
    let [br, bb] = builders;
    Ok(EpisodeRecord {
        red: br.map(|bl| bl.finish(eliminated)),
        blue: bb.map(|bl| bl.finish(eliminated)),
        outcome,
        steps,
        return_red: ret_r,
        return_blue: ret_b,
        replay,
    })
}

/// Greedy evaluation over `n_episodes`. Episode `i` uses the layout seed
/// and policy streams derived from `(seed, i)`, so results do not depend on
/// evaluation order or on any training stream.
pub fn evaluate(env: &mut Env, red: &dyn Learner, blue: &dyn Learner, n_episodes: u32, seed: u64) -> Result<EvalPoint, AdversaryError> {
    evaluate_with(env, n_episodes, seed, |_| (red, blue))
}

/// Episode `index` of a greedy evaluation seeded by `seed`, optionally with
/// its replay. [`evaluate`] plays exactly these episodes.
pub fn evaluation_episode(
    env: &mut Env,
    red: &dyn Learner,
    blue: &dyn Learner,
    seed: u64,
    index: u64,
    replay: bool,
) -> Result<EpisodeRecord, AdversaryError> {
    let episode_seed = derive_seed(seed, streams::EVALUATION, index);
    let mut rngs = [
        derived_rng(episode_seed, streams::RED_POLICY, 0),
        derived_rng(episode_seed, streams::BLUE_POLICY, 0),
    ];
    let opts = EpisodeOptions {
        replay: replay.then_some(index),
        ..EpisodeOptions::default()
    };
    let layout = derive_seed(seed, streams::EPISODE_LAYOUT, index);
    run_episode(env, red, blue, layout, &mut rngs, &opts)
}

fn evaluate_with<'a>(
    env: &mut Env,
    n_episodes: u32,
    seed: u64,
    mut pick: impl FnMut(u32) -> (&'a dyn Learner, &'a dyn Learner),
) -> Result<EvalPoint, AdversaryError> {
    if n_episodes == 0 {
        return Err(AdversaryError::InvalidConfig("n_episodes must be at least 1".into()));
    }
    let mut p = EvalPoint {
        env_step: 0,
        wins: 0,
        draws: 0,
        losses: 0,
        mean_return_red: 0.0,
        mean_return_blue: 0.0,
    };
    for i in 0..n_episodes {
        let (red, blue) = pick(i);
        let rec = evaluation_episode(env, red, blue, seed, u64::from(i), false)?;
        match TeamOutcome::of(rec.outcome, Team::Red) {
            Some(TeamOutcome::Win) => p.wins += 1,
            Some(TeamOutcome::Loss) => p.losses += 1,
            _ => p.draws += 1,
        }
        p.mean_return_red += rec.return_red;
        p.mean_return_blue += rec.return_blue;
    }
    p.mean_return_red /= f64::from(n_episodes);
    p.mean_return_blue /= f64::from(n_episodes);
    Ok(p)
}

/// Evaluation seed of the point taken at `env_step`: an independent stream
/// keyed by the step, so a point's result does not depend on the schedule.
fn eval_seed(run_seed: u64, env_step: u64) -> u64 {
    derive_seed(run_seed, streams::EVALUATION, env_step)
}

/// Schedules evaluations at step 0, every `test_interval` steps, and at the
/// end of the budget.
struct EvalClock {
    interval: u64,
    next: u64,
    last_step: Option<u64>,
}

impl EvalClock {
    fn new(interval: u64) -> Self {
        EvalClock {
            interval,
            next: 0,
            last_step: None,
        }
    }

    fn due(&self, steps: u64) -> bool {
        steps >= self.next
    }

    fn needs_final(&self, steps: u64) -> bool {
        self.last_step != Some(steps)
    }

    fn tick(&mut self, steps: u64) {
        self.last_step = Some(steps);
        while self.next <= steps {
            self.next += self.interval;
        }
    }
}

/// A finished single-learner run.
pub struct TrainedRun {
    pub metrics: RunMetrics,
    pub learner: Box<dyn Learner>,
    pub env_steps: u64,
    pub episodes: u64,
    pub warnings: Vec<AdversaryWarning>,
    /// Mixed mode: how often each pool member was drawn.
    pub opponent_draws: Vec<u64>,
}

/// A finished paired run.
pub struct PairedRun {
    pub metrics_a: RunMetrics,
    pub metrics_b: RunMetrics,
    pub learner_a: Box<dyn Learner>,
    pub learner_b: Box<dyn Learner>,
    pub env_steps: u64,
    pub episodes: u64,
    pub warnings: Vec<AdversaryWarning>,
}

fn train_one(learner: &mut dyn Learner, episode: Option<Episode>, steps: u32) {
    if let Some(ep) = episode {
        learner.observe(ep);
    }
    if !learner.is_frozen() {
        for _ in 0..steps {
            if learner.train_step().is_none() {
                break;
            }
        }
    }
}

fn budget_left(config: &TrainConfig, steps: u64, episodes: u64) -> bool {
    steps < config.total_env_steps && config.max_episodes.is_none_or(|m| episodes < m)
}

fn step_cap(config: &TrainConfig, env: &Env, steps: u64) -> Option<u32> {
    let left = config.total_env_steps - steps;
    (left < u64::from(env.scenario().episode_step_limit)).then_some(left as u32)
}

fn point_at(mut p: EvalPoint, steps: u64) -> EvalPoint {
    p.env_step = steps;
    p
}

/// Trains red against the frozen scripted bot on blue.
pub fn train_vs_bot(env: &mut Env, learner: Box<dyn Learner>, config: &TrainConfig, seed: u64) -> Result<TrainedRun, AdversaryError> {
    let bot: Box<dyn Learner> = Box::new(ScriptedBot::new(env.obs_layout(Team::Blue).clone()));
    let pool = OpponentPool::new(vec![PoolMember::new("bot", bot)])?;
    let mut run = train_against_pool(env, learner, &pool, config, seed, Mode::Bot)?;
    run.metrics.algo_blue = Algo::Bot.to_string();
    Ok(run)
}

/// Trains red against opponents drawn per episode from a frozen pool.
pub fn train_mixed(
    env: &mut Env,
    learner: Box<dyn Learner>,
    pool: &OpponentPool,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedRun, AdversaryError> {
    train_against_pool(env, learner, pool, config, seed, Mode::Mixed)
}

fn train_against_pool(
    env: &mut Env,
    mut learner: Box<dyn Learner>,
    pool: &OpponentPool,
    config: &TrainConfig,
    seed: u64,
    mode: Mode,
) -> Result<TrainedRun, AdversaryError> {
    config.validate()?;
    pool.check_frozen()?;
    check_fits(env, Team::Red, learner.as_ref())?;
    for m in pool.members() {
        check_fits(env, Team::Blue, m.learner.as_ref())?;
    }
    let hashes = pool.hashes();
    let mut metrics = RunMetrics {
        seed,
        mode,
        scenario: env.scenario().name.clone(),
        algo_red: learner.algo().to_string(),
        algo_blue: pool.label(),
        test_episodes: config.test_episodes,
        points: Vec::new(),
    };
    let mut rngs = [
        derived_rng(seed, streams::RED_POLICY, 0),
        derived_rng(seed, streams::BLUE_POLICY, 0),
    ];
    let mut draw_rng = derived_rng(seed, streams::OPPONENT_DRAW, 0);
    let mut draws = vec![0u64; pool.len()];
    let mut clock = EvalClock::new(config.test_interval);
    let (mut steps, mut episodes) = (0u64, 0u64);
    let evaluate_now = |env: &mut Env, learner: &dyn Learner, steps: u64| {
        let n = pool.len() as u32;
        evaluate_with(env, config.test_episodes, eval_seed(seed, steps), |i| {
            (learner, pool.member((i % n) as usize).learner.as_ref())
        })
    };
    while budget_left(config, steps, episodes) {
        if clock.due(steps) {
            clock.tick(steps);
            metrics.points.push(point_at(evaluate_now(env, learner.as_ref(), steps)?, steps));
        }
        let who = pool.sample(&mut draw_rng);
        draws[who] += 1;
        let opts = EpisodeOptions {
            epsilon: [config.learner.epsilon_at(steps), 0.0],
            collect: [!learner.is_frozen(), false],
            step_cap: step_cap(config, env, steps),
            replay: None,
        };
        let layout = derive_seed(seed, streams::EPISODE_LAYOUT, episodes);
        let rec = run_episode(env, learner.as_ref(), pool.member(who).learner.as_ref(), layout, &mut rngs, &opts)?;
        steps += u64::from(rec.steps);
        episodes += 1;
        train_one(learner.as_mut(), rec.red, config.train_steps_per_episode);
    }
    if clock.needs_final(steps) {
        clock.tick(steps);
        metrics.points.push(point_at(evaluate_now(env, learner.as_ref(), steps)?, steps));
    }
    pool.verify_hashes(&hashes)?;
    Ok(TrainedRun {
        metrics,
        learner,
        env_steps: steps,
        episodes,
        warnings: Vec::new(),
        opponent_draws: draws,
    })
}

/// Trains two learners against each other: A on red, B on blue, both
/// updating after every shared episode. Evaluations play A against B
/// greedily; B's counts are A's seen from the other side.
pub fn train_paired(
    env: &mut Env,
    mut a: Box<dyn Learner>,
    mut b: Box<dyn Learner>,
    config: &TrainConfig,
    seed: u64,
) -> Result<PairedRun, AdversaryError> {
    config.validate()?;
    check_fits(env, Team::Red, a.as_ref())?;
    check_fits(env, Team::Blue, b.as_ref())?;
    let mut warnings = Vec::new();
    if !env.scenario().symmetric {
        let w = AdversaryWarning::AsymmetricScenario(env.scenario().name.clone());
        log::warn!("{w}");
        warnings.push(w);
    }
    let scenario = env.scenario().name.clone();
    let mut metrics_a = RunMetrics {
        seed,
        mode: Mode::Paired,
        scenario: scenario.clone(),
        algo_red: a.algo().to_string(),
        algo_blue: b.algo().to_string(),
        test_episodes: config.test_episodes,
        points: Vec::new(),
    };
    let mut metrics_b = RunMetrics {
        algo_red: b.algo().to_string(),
        algo_blue: a.algo().to_string(),
        ..metrics_a.clone()
    };
    let mut rngs = [
        derived_rng(seed, streams::RED_POLICY, 0),
        derived_rng(seed, streams::BLUE_POLICY, 0),
    ];
    let mut clock = EvalClock::new(config.test_interval);
    let (mut steps, mut episodes) = (0u64, 0u64);
    let mut record = |env: &mut Env, a: &dyn Learner, b: &dyn Learner, steps: u64| -> Result<(), AdversaryError> {
        let p = point_at(evaluate(env, a, b, config.test_episodes, eval_seed(seed, steps))?, steps);
        metrics_a.points.push(p);
        metrics_b.points.push(p.swapped());
        Ok(())
    };
    while budget_left(config, steps, episodes) {
        if clock.due(steps) {
            clock.tick(steps);
            record(env, a.as_ref(), b.as_ref(), steps)?;
        }
        let eps = config.learner.epsilon_at(steps);
        let opts = EpisodeOptions {
            epsilon: [eps, eps],
            collect: [!a.is_frozen(), !b.is_frozen()],
            step_cap: step_cap(config, env, steps),
            replay: None,
        };
        let layout = derive_seed(seed, streams::EPISODE_LAYOUT, episodes);
        let rec = run_episode(env, a.as_ref(), b.as_ref(), layout, &mut rngs, &opts)?;
        steps += u64::from(rec.steps);
        episodes += 1;
        train_one(a.as_mut(), rec.red, config.train_steps_per_episode);
        train_one(b.as_mut(), rec.blue, config.train_steps_per_episode);
    }
    if clock.needs_final(steps) {
        clock.tick(steps);
        record(env, a.as_ref(), b.as_ref(), steps)?;
    }
    Ok(PairedRun {
        metrics_a,
        metrics_b,
        learner_a: a,
        learner_b: b,
        env_steps: steps,
        episodes,
        warnings,
    })
}

#[cfg(test)]
mod tests;
