//! Dual-team environment: reset/step lifecycle, mirrored observations and
//! global states, action masks and per-team rewards.

mod encode;
pub mod replay;

pub use encode::{
    available_actions, encode_observation, encode_state, frame_sign, state_len, world_direction,
    ActionMask, ObsLayout, ACTION_EAST, ACTION_NOOP, ACTION_NORTH, ACTION_SOUTH, ACTION_STOP,
    ACTION_WEST, TARGET_BASE,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    step_world, terminal_status, Command, Direction, EngineConfig, EngineError, Outcome, StepEvents,
    Team, TeamEvents, WorldState, SIGHT_RANGE,
};
use crate::scenario::{spawn_layout, ScenarioError, ScenarioSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub kill_bonus: f64,
    pub win_bonus: f64,
    /// Weight of self-inflicted harm (damage taken plus death penalties).
    pub self_damage_weight: f64,
    pub death_penalty: f64,
    pub draw_penalty: f64,
    pub loss_penalty: f64,
    pub scale_target: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            kill_bonus: 10.0,
            win_bonus: 200.0,
            self_damage_weight: 0.5,
            death_penalty: 10.0,
            draw_penalty: 50.0,
            loss_penalty: 50.0,
            scale_target: 20.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let all = [
            self.kill_bonus,
            self.win_bonus,
            self.self_damage_weight,
            self.death_penalty,
            self.draw_penalty,
            self.loss_penalty,
            self.scale_target,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(EnvError::InvalidConfig("reward terms must be finite and >= 0".into()))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsConfig {
    /// Put the weapon-cooldown column on the ally rows of the global state
    /// instead of the enemy rows.
    pub cooldown_on_allies: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeamOutcome {
    Win,
    Draw,
    Loss,
}

impl TeamOutcome {
    pub fn of(outcome: Outcome, team: Team) -> Option<TeamOutcome> {
        match (outcome, team) {
            (Outcome::Ongoing, _) => None,
            (Outcome::Draw, _) => Some(TeamOutcome::Draw),
            (Outcome::RedWin, Team::Red) | (Outcome::BlueWin, Team::Blue) => Some(TeamOutcome::Win),
            _ => Some(TeamOutcome::Loss),
        }
    }
}

/// Everything one team receives after `reset` or `step`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeamStepResult {
    pub observations: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    pub masks: Vec<ActionMask>,
    pub reward: f64,
    pub terminated: bool,
    pub outcome: Option<TeamOutcome>,
    pub info: TeamEvents,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("{team} agent {agent}: action {code} is not available")]
    UnavailableAction { team: Team, agent: usize, code: usize },
    #[error("{team} sent {got} actions for {expected} agents")]
    WrongActionCount { team: Team, expected: usize, got: usize },
    #[error("episode already terminated; call reset")]
    EpisodeAlreadyTerminated,
    #[error("step before reset")]
    NotReset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Static sizes of one team's interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamInfo {
    pub n_agents: usize,
    pub n_enemies: usize,
    pub obs_len: usize,
    pub state_len: usize,
    pub n_actions: usize,
}

/// Per-step reward for `team`:
///
/// `[dealt + kill·kills − β(taken + death·deaths) + win·1(win) − draw·1(draw) − loss·1(loss)] · scale`
/// with `scale = scale_target / (Σ_enemy (max_health + max_shield) + kill·E + win)`.
pub fn compute_reward(
    events: &StepEvents,
    outcome: Outcome,
    team: Team,
    cfg: &RewardConfig,
    scenario: &ScenarioSpec,
) -> f64 {
    let ev = events.team(team);
    let mut raw = ev.damage_dealt + cfg.kill_bonus * f64::from(ev.kills)
        - cfg.self_damage_weight * (ev.damage_taken + cfg.death_penalty * f64::from(ev.deaths));
    match TeamOutcome::of(outcome, team) {
        Some(TeamOutcome::Win) => raw += cfg.win_bonus,
        Some(TeamOutcome::Draw) => raw -= cfg.draw_penalty,
        Some(TeamOutcome::Loss) => raw -= cfg.loss_penalty,
        None => {}
    }
    raw * reward_scale(team, cfg, scenario)
}

pub fn reward_scale(team: Team, cfg: &RewardConfig, scenario: &ScenarioSpec) -> f64 {
    let enemies = scenario.units(team.opponent());
    let pool: f64 = enemies
        .iter()
        .map(|k| {
            let s = k.spec();
            s.max_health + s.max_shield
        })
        .sum();
    let max_return = pool + cfg.kill_bonus * enemies.len() as f64 + cfg.win_bonus;
    cfg.scale_target / max_return
}

/// One environment instance owns one world.
#[derive(Debug, Clone)]
pub struct Env {
    scenario: ScenarioSpec,
    engine: EngineConfig,
    reward: RewardConfig,
    obs: ObsConfig,
    layouts: [ObsLayout; 2],
    n_actions: [usize; 2],
    world: Option<WorldState>,
    outcome: Outcome,
}

impl Env {
    pub fn new(scenario: ScenarioSpec, engine: EngineConfig, reward: RewardConfig) -> Result<Env, EnvError> {
        Env::with_obs_config(scenario, engine, reward, ObsConfig::default())
    }

    pub fn with_obs_config(
        scenario: ScenarioSpec,
        engine: EngineConfig,
        reward: RewardConfig,
        obs: ObsConfig,
    ) -> Result<Env, EnvError> {
        scenario.validate()?;
        engine.validate()?;
        reward.validate()?;
        // surfaces ArenaTooSmall here rather than on every reset
        spawn_layout(&scenario, 0)?;
        let types = scenario.unit_types();
        let layout = |team: Team| ObsLayout {
            team,
            n_enemies: scenario.team_size(team.opponent()),
            n_allies: scenario.team_size(team),
            unit_types: types.clone(),
            sight_range: SIGHT_RANGE,
        };
        let n_actions = |team: Team| {
            let has_healer = scenario.units(team).iter().any(|k| k.spec().is_healer);
            let own = if has_healer { scenario.team_size(team) } else { 0 };
            TARGET_BASE + scenario.team_size(team.opponent()).max(own)
        };
        Ok(Env {
            layouts: [layout(Team::Red), layout(Team::Blue)],
            n_actions: [n_actions(Team::Red), n_actions(Team::Blue)],
            scenario,
            engine,
            reward,
            obs,
            world: None,
            outcome: Outcome::Ongoing,
        })
    }

    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    pub fn engine_config(&self) -> &EngineConfig {
        &self.engine
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn obs_layout(&self, team: Team) -> &ObsLayout {
        &self.layouts[team.index()]
    }

    pub fn team_info(&self, team: Team) -> TeamInfo {
        let layout = self.obs_layout(team);
        TeamInfo {
            n_agents: layout.n_allies,
            n_enemies: layout.n_enemies,
            obs_len: layout.len(),
            state_len: state_len(
                layout.n_enemies,
                layout.n_allies,
                layout.type_width(),
                self.obs.cooldown_on_allies,
            ),
            n_actions: self.n_actions[team.index()],
        }
    }

    pub fn world(&self) -> Option<&WorldState> {
        self.world.as_ref()
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn is_terminated(&self) -> bool {
        self.outcome.is_terminal()
    }

    /// Starts a new episode from the seeded mirrored layout.
    pub fn reset(&mut self, seed: u64) -> Result<(TeamStepResult, TeamStepResult), EnvError> {
        let layout = spawn_layout(&self.scenario, seed)?;
        let world = self.scenario.initial_world(&layout, &self.engine);
        self.outcome = Outcome::Ongoing;
        self.world = Some(world);
        let events = StepEvents::default();
        Ok((
            self.team_result(Team::Red, &events, 0.0),
            self.team_result(Team::Blue, &events, 0.0),
        ))
    }

    /// Restores an arbitrary world (used by tests and replays).
    pub fn set_world(&mut self, world: WorldState) {
        self.outcome = terminal_status(&world, self.scenario.episode_step_limit);
        self.world = Some(world);
    }

    pub fn masks(&self, team: Team) -> Vec<ActionMask> {
        let Some(world) = &self.world else { return vec![] };
        (0..world.team(team).len())
            .map(|i| available_actions(world, team, i, self.n_actions[team.index()], &self.engine))
            .collect()
    }

    pub fn observation(&self, team: Team, agent: usize) -> Vec<f64> {
        let world = self.world.as_ref().expect("reset first");
        encode_observation(world, team, agent, self.obs_layout(team), &self.engine)
    }

    pub fn state(&self, team: Team) -> Vec<f64> {
        let world = self.world.as_ref().expect("reset first");
        encode_state(world, team, self.obs_layout(team), self.obs.cooldown_on_allies)
    }

    fn team_result(&self, team: Team, events: &StepEvents, reward: f64) -> TeamStepResult {
        let world = self.world.as_ref().expect("world present");
        let n = world.team(team).len();
        TeamStepResult {
            observations: (0..n).map(|i| self.observation(team, i)).collect(),
            state: self.state(team),
            masks: self.masks(team),
            reward,
            terminated: self.outcome.is_terminal(),
            outcome: TeamOutcome::of(self.outcome, team),
            info: *events.team(team),
        }
    }

    /// Translates a team-frame action code into an engine command.
    pub fn decode_action(&self, team: Team, agent: usize, code: usize) -> Command {
        let world = self.world.as_ref().expect("reset first");
        let unit = &world.team(team)[agent];
        let mv = |d: Direction| Command::Move(world_direction(team, d));
        match code {
            ACTION_NOOP => Command::NoOp,
            ACTION_STOP => Command::Stop,
            ACTION_NORTH => mv(Direction::North),
            ACTION_SOUTH => mv(Direction::South),
            ACTION_EAST => mv(Direction::East),
            ACTION_WEST => mv(Direction::West),
            c if unit.spec.is_healer => Command::Heal(c - TARGET_BASE),
            c => Command::Attack(c - TARGET_BASE),
        }
    }

    /// Checks a team's joint action against the current masks.
    pub fn validate_actions(&self, team: Team, actions: &[usize]) -> Result<(), EnvError> {
        let masks = self.masks(team);
        if actions.len() != masks.len() {
            return Err(EnvError::WrongActionCount {
                team,
                expected: masks.len(),
                got: actions.len(),
            });
        }
        for (agent, (&code, mask)) in actions.iter().zip(&masks).enumerate() {
            if !mask.get(code).copied().unwrap_or(false) {
                return Err(EnvError::UnavailableAction { team, agent, code });
            }
        }
        Ok(())
    }

    pub fn step(
        &mut self,
        red_actions: &[usize],
        blue_actions: &[usize],
    ) -> Result<(TeamStepResult, TeamStepResult), EnvError> {
        let (red, blue, _) = self.step_with_events(red_actions, blue_actions)?;
        Ok((red, blue))
    }

    /// Like [`Env::step`], also returning the raw engine events.
    pub fn step_with_events(
        &mut self,
        red_actions: &[usize],
        blue_actions: &[usize],
    ) -> Result<(TeamStepResult, TeamStepResult, StepEvents), EnvError> {
        if self.world.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.outcome.is_terminal() {
            return Err(EnvError::EpisodeAlreadyTerminated);
        }
        self.validate_actions(Team::Red, red_actions)?;
        self.validate_actions(Team::Blue, blue_actions)?;
        let commands = [
            red_actions
                .iter()
                .enumerate()
                .map(|(i, &c)| self.decode_action(Team::Red, i, c))
                .collect(),
            blue_actions
                .iter()
                .enumerate()
                .map(|(i, &c)| self.decode_action(Team::Blue, i, c))
                .collect(),
        ];
        let world = self.world.as_ref().expect("checked above");
        let (next, events) = step_world(world, &commands, &self.engine)?;
        self.outcome = terminal_status(&next, self.scenario.episode_step_limit);
        self.world = Some(next);
        let r_red = compute_reward(&events, self.outcome, Team::Red, &self.reward, &self.scenario);
        let r_blue = compute_reward(&events, self.outcome, Team::Blue, &self.reward, &self.scenario);
        Ok((
            self.team_result(Team::Red, &events, r_red),
            self.team_result(Team::Blue, &events, r_blue),
            events,
        ))
    }

    /// Ends the current episode with `loser` forfeiting (used when a remote
    /// client misses its deadline).
    pub fn forfeit(&mut self, loser: Team) -> Result<(TeamStepResult, TeamStepResult), EnvError> {
        let outcome = match loser {
            Team::Red => Outcome::BlueWin,
            Team::Blue => Outcome::RedWin,
        };
        self.end_episode(outcome)
    }

    /// Ends the current episode with `outcome` without advancing the world.
    pub fn end_episode(&mut self, outcome: Outcome) -> Result<(TeamStepResult, TeamStepResult), EnvError> {
        if self.world.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.outcome.is_terminal() {
            return Err(EnvError::EpisodeAlreadyTerminated);
        }
        if !outcome.is_terminal() {
            return Err(EnvError::InvalidConfig("episode must end with a terminal outcome".into()));
        }
        self.outcome = outcome;
        let events = StepEvents::default();
        let r_red = compute_reward(&events, self.outcome, Team::Red, &self.reward, &self.scenario);
        let r_blue = compute_reward(&events, self.outcome, Team::Blue, &self.reward, &self.scenario);
        Ok((
            self.team_result(Team::Red, &events, r_red),
            self.team_result(Team::Blue, &events, r_blue),
        ))
    }
}
