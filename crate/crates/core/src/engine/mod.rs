//! Deterministic fixed-timestep 2D combat simulation.
//!
//! A step resolves in a fixed order:
//!
//! 1. move commands displace their units,
//! 2. units holding an attack (or heal) order whose target is out of range
//!    approach it along the straight line; fire/approach decisions read the
//!    positions left by phase 1,
//! 3. every ready attack is computed against the pre-attack state,
//! 4. damage then heals are applied simultaneously,
//! 5. cooldowns tick down by `step_dt`, or reset to the attack period on firing,
//! 6. shields regenerate,
//! 7. the clock advances.
//!
//! Because damage is applied all at once, two units can kill each other in the
//! same step, and a point-reflected world evolves into the point reflection of
//! the original successor, bit for bit.

mod units;

pub use units::{
    apply_damage, apply_heal, compute_damage, ArmorClass, Race, Unit, UnitKind, UnitSpec,
    ATTACK_RANGE, DEFAULT_HEAL_PER_ACTION, DEFAULT_SPLASH_RADIUS, SIGHT_RANGE,
};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Team {
    Red,
    Blue,
}

impl Team {
    pub const BOTH: [Team; 2] = [Team::Red, Team::Blue];

    pub fn index(self) -> usize {
        match self {
            Team::Red => 0,
            Team::Blue => 1,
        }
    }

    pub fn opponent(self) -> Team {
        match self {
            Team::Red => Team::Blue,
            Team::Blue => Team::Red,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Team::Red => "red",
            Team::Blue => "blue",
        }
    }
}

impl fmt::Display for Team {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn length(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (other - self).length()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Rectangular arena. Unit positions are stored relative to its center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Arena {
    pub fn new(width: f64, height: f64) -> Self {
        Arena { width, height }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn contains(&self, rel: Vec2) -> bool {
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        rel.x >= -hw && rel.x <= hw && rel.y >= -hh && rel.y <= hh
    }

    pub fn clamp(&self, rel: Vec2) -> Vec2 {
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        Vec2::new(rel.x.clamp(-hw, hw), rel.y.clamp(-hh, hh))
    }

    pub fn to_world(&self, rel: Vec2) -> Vec2 {
        rel + self.center()
    }

    pub fn to_relative(&self, world: Vec2) -> Vec2 {
        world - self.center()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub step_dt: f64,
    pub shield_regen_delay: f64,
    pub shield_regen_rate: f64,
    pub allow_overlap: bool,
    pub splash_radius: f64,
    pub heal_per_action: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            step_dt: 0.5,
            shield_regen_delay: 10.0,
            shield_regen_rate: 2.0,
            allow_overlap: true,
            splash_radius: DEFAULT_SPLASH_RADIUS,
            heal_per_action: DEFAULT_HEAL_PER_ACTION,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |what: &str| Err(EngineError::InvalidConfig(what.to_string()));
        if !(self.step_dt > 0.0 && self.step_dt.is_finite()) {
            return bad("step_dt must be > 0");
        }
        if !(self.shield_regen_delay >= 0.0
            && self.shield_regen_rate >= 0.0
            && self.splash_radius >= 0.0
            && self.heal_per_action >= 0.0)
        {
            return bad("rates and radii must be >= 0");
        }
        if !self.allow_overlap {
            return bad("allow_overlap = false is not supported (no collision model)");
        }
        Ok(())
    }

    /// Built-in spec of `kind` with the configurable heal and splash values applied.
    pub fn unit_spec(&self, kind: UnitKind) -> UnitSpec {
        let mut spec = kind.spec();
        if spec.is_healer {
            spec.heal_per_action = self.heal_per_action;
        }
        if spec.splash_radius > 0.0 {
            spec.splash_radius = self.splash_radius;
        }
        spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
    ];

    pub fn unit_vector(self) -> Vec2 {
        match self {
            Direction::North => Vec2::new(0.0, 1.0),
            Direction::South => Vec2::new(0.0, -1.0),
            Direction::East => Vec2::new(1.0, 0.0),
            Direction::West => Vec2::new(-1.0, 0.0),
        }
    }

    /// The direction under point reflection through the arena center.
    pub fn reflected(self) -> Direction {
        match self {
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
        }
    }
}

/// Engine-level order for one unit. Target indices address the enemy team
/// (`Attack`) or the unit's own team (`Heal`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    NoOp,
    Stop,
    Move(Direction),
    Attack(usize),
    Heal(usize),
}

impl Command {
    pub fn reflected(self) -> Command {
        match self {
            Command::Move(d) => Command::Move(d.reflected()),
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("{0} cannot attack")]
    NotAnAttacker(UnitKind),
    #[error("{0} cannot heal")]
    NotAHealer(UnitKind),
    #[error("{team} unit {unit} cannot heal unit {target}")]
    InvalidHealTarget { team: Team, unit: usize, target: usize },
    #[error("{team} unit {unit} is dead and can only take NoOp")]
    CommandForDeadUnit { team: Team, unit: usize },
    #[error("{team} unit {unit} targets index {target}, which does not exist")]
    MalformedTarget { team: Team, unit: usize, target: usize },
    #[error("{team} sent {got} commands for {expected} units")]
    CommandCountMismatch { team: Team, expected: usize, got: usize },
    #[error("attack-move target is dead")]
    TargetDead,
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TeamEvents {
    pub damage_dealt: f64,
    pub kills: u32,
    pub damage_taken: f64,
    pub deaths: u32,
    pub heals: f64,
}

impl TeamEvents {
    pub fn accumulate(&mut self, other: &TeamEvents) {
        self.damage_dealt += other.damage_dealt;
        self.kills += other.kills;
        self.damage_taken += other.damage_taken;
        self.deaths += other.deaths;
        self.heals += other.heals;
    }
}

/// Per-team raw event totals of one step (indexed by [`Team::index`]).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub teams: [TeamEvents; 2],
}

impl StepEvents {
    pub fn team(&self, team: Team) -> &TeamEvents {
        &self.teams[team.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ongoing,
    RedWin,
    BlueWin,
    Draw,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Ongoing
    }

    pub fn winner(self) -> Option<Team> {
        match self {
            Outcome::RedWin => Some(Team::Red),
            Outcome::BlueWin => Some(Team::Blue),
            _ => None,
        }
    }
}

/// Full simulation snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldState {
    pub teams: [Vec<Unit>; 2],
    pub arena: Arena,
    pub step: u32,
    pub time: f64,
}

impl WorldState {
    pub fn new(arena: Arena, red: Vec<Unit>, blue: Vec<Unit>) -> Self {
        WorldState {
            teams: [red, blue],
            arena,
            step: 0,
            time: 0.0,
        }
    }

    pub fn team(&self, team: Team) -> &[Unit] {
        &self.teams[team.index()]
    }

    pub fn alive_count(&self, team: Team) -> usize {
        self.team(team).iter().filter(|u| u.alive).count()
    }

    /// Point reflection through the arena center with the team labels swapped.
    pub fn reflected(&self) -> WorldState {
        let flip = |units: &[Unit], team: Team| -> Vec<Unit> {
            units
                .iter()
                .map(|u| Unit {
                    pos: -u.pos,
                    team,
                    ..*u
                })
                .collect()
        };
        WorldState {
            teams: [
                flip(&self.teams[1], Team::Red),
                flip(&self.teams[0], Team::Blue),
            ],
            arena: self.arena,
            step: self.step,
            time: self.time,
        }
    }
}

/// What an attack (or heal) order does this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackMove {
    /// In range and ready.
    Fire,
    /// In range, weapon cooling down.
    Hold,
    /// Out of range: step toward the target.
    Approach(Vec2),
}

/// Attack-move macro: approach out-of-range targets, fire on in-range ones.
pub fn resolve_attack_move(
    unit: &Unit,
    target: &Unit,
    step_dt: f64,
    arena: &Arena,
) -> Result<AttackMove, EngineError> {
    if !target.alive {
        return Err(EngineError::TargetDead);
    }
    let offset = target.pos - unit.pos;
    let dist = offset.length();
    if dist > unit.spec.attack_range {
        let travel = (unit.spec.move_speed * step_dt).min(dist);
        let dest = unit.pos + offset * (travel / dist);
        return Ok(AttackMove::Approach(arena.clamp(dest)));
    }
    if unit.spec.is_healer || unit.weapon_cooldown <= 0.0 {
        Ok(AttackMove::Fire)
    } else {
        Ok(AttackMove::Hold)
    }
}

/// Shield regeneration for every living shielded unit whose last damage is at
/// least `shield_regen_delay` old.
pub fn regen_shields(world: &WorldState, cfg: &EngineConfig) -> WorldState {
    let mut out = world.clone();
    regen_in_place(&mut out, cfg);
    out
}

fn regen_in_place(world: &mut WorldState, cfg: &EngineConfig) {
    let now = world.time;
    for unit in world.teams.iter_mut().flatten() {
        if !unit.alive || unit.spec.max_shield <= 0.0 {
            continue;
        }
        let rested = match unit.last_damaged_at {
            None => true,
            Some(t) => now - t >= cfg.shield_regen_delay,
        };
        if rested {
            unit.shield = (unit.shield + cfg.shield_regen_rate * cfg.step_dt).min(unit.spec.max_shield);
        }
    }
}

pub fn terminal_status(world: &WorldState, step_limit: u32) -> Outcome {
    let red = world.alive_count(Team::Red);
    let blue = world.alive_count(Team::Blue);
    match (red, blue) {
        (0, 0) => Outcome::Draw,
        (_, 0) => Outcome::RedWin,
        (0, _) => Outcome::BlueWin,
        _ if world.step >= step_limit => Outcome::Draw,
        _ => Outcome::Ongoing,
    }
}

fn validate_commands(world: &WorldState, commands: &[Vec<Command>; 2]) -> Result<(), EngineError> {
    for team in Team::BOTH {
        let units = world.team(team);
        let cmds = &commands[team.index()];
        if cmds.len() != units.len() {
            return Err(EngineError::CommandCountMismatch {
                team,
                expected: units.len(),
                got: cmds.len(),
            });
        }
        let enemies = world.team(team.opponent()).len();
        for (unit, cmd) in units.iter().zip(cmds) {
            if !unit.alive {
                if *cmd != Command::NoOp {
                    return Err(EngineError::CommandForDeadUnit { team, unit: unit.id });
                }
                continue;
            }
            match *cmd {
                Command::Attack(k) => {
                    if !unit.spec.can_attack() {
                        return Err(EngineError::NotAnAttacker(unit.kind()));
                    }
                    if k >= enemies {
                        return Err(EngineError::MalformedTarget { team, unit: unit.id, target: k });
                    }
                }
                Command::Heal(k) => {
                    if !unit.spec.is_healer {
                        return Err(EngineError::NotAHealer(unit.kind()));
                    }
                    if k >= units.len() {
                        return Err(EngineError::MalformedTarget { team, unit: unit.id, target: k });
                    }
                    if units[k].spec.is_healer {
                        return Err(EngineError::InvalidHealTarget { team, unit: unit.id, target: k });
                    }
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// Advances the world by one step. `commands[t]` holds one command per unit of
/// team `t` (dead units must get `NoOp`).
pub fn step_world(
    world: &WorldState,
    commands: &[Vec<Command>; 2],
    cfg: &EngineConfig,
) -> Result<(WorldState, StepEvents), EngineError> {
    validate_commands(world, commands)?;
    let dt = cfg.step_dt;
    let now = world.time;
    let mut next = world.clone();

    // (1) movement
    for t in 0..2 {
        for (unit, cmd) in next.teams[t].iter_mut().zip(&commands[t]) {
            if let (true, Command::Move(dir)) = (unit.alive, cmd) {
                let dest = unit.pos + dir.unit_vector() * (unit.spec.move_speed * dt);
                unit.pos = next.arena.clamp(dest);
            }
        }
    }

    // (2) attack-move decisions against post-movement positions
    let moved = next.clone();
    let mut firing: [Vec<Option<usize>>; 2] = [
        vec![None; moved.teams[0].len()],
        vec![None; moved.teams[1].len()],
    ];
    for t in 0..2 {
        let own = &moved.teams[t];
        let enemy = &moved.teams[1 - t];
        for (i, cmd) in commands[t].iter().enumerate() {
            let unit = &own[i];
            if !unit.alive {
                continue;
            }
            let target = match *cmd {
                Command::Attack(k) => &enemy[k],
                Command::Heal(k) => &own[k],
                _ => continue,
            };
            match resolve_attack_move(unit, target, dt, &moved.arena) {
                Ok(AttackMove::Fire) => firing[t][i] = Some(target.id),
                Ok(AttackMove::Approach(dest)) => next.teams[t][i].pos = dest,
                Ok(AttackMove::Hold) | Err(EngineError::TargetDead) => {}
                Err(e) => return Err(e),
            }
        }
    }

    // (3) attacks and heals computed against the pre-attack state
    let mut incoming: [Vec<f64>; 2] = [
        vec![0.0; next.teams[0].len()],
        vec![0.0; next.teams[1].len()],
    ];
    let mut heal_in: [Vec<f64>; 2] = incoming.clone();
    for t in 0..2 {
        let e = 1 - t;
        for (i, target) in firing[t].iter().enumerate() {
            let Some(k) = *target else { continue };
            let shooter = &next.teams[t][i];
            if shooter.spec.is_healer {
                heal_in[t][k] += shooter.spec.heal_per_action;
                continue;
            }
            let victim = &next.teams[e][k];
            incoming[e][k] += compute_damage(&shooter.spec, &victim.spec)?;
            if shooter.spec.splash_radius > 0.0 {
                for (j, other) in next.teams[e].iter().enumerate() {
                    if j != k && other.alive && other.pos.distance(victim.pos) <= shooter.spec.splash_radius {
                        incoming[e][j] += compute_damage(&shooter.spec, &other.spec)?;
                    }
                }
            }
        }
    }

    // (4) simultaneous application: damage first, then heals on survivors
    let mut events = StepEvents::default();
    for t in 0..2 {
        let e = 1 - t;
        for (unit, &amount) in next.teams[t].iter_mut().zip(&incoming[t]) {
            if amount <= 0.0 || !unit.alive {
                continue;
            }
            let removed = unit.take_damage(amount, now);
            events.teams[t].damage_taken += removed;
            events.teams[e].damage_dealt += removed;
            if !unit.alive {
                events.teams[t].deaths += 1;
                events.teams[e].kills += 1;
            }
        }
    }
    for t in 0..2 {
        for (unit, &amount) in next.teams[t].iter_mut().zip(&heal_in[t]) {
            if amount > 0.0 {
                events.teams[t].heals += unit.receive_heal(amount);
            }
        }
    }

    // (5) cooldowns
    for t in 0..2 {
        for (i, unit) in next.teams[t].iter_mut().enumerate() {
            if firing[t][i].is_some() && !unit.spec.is_healer {
                unit.weapon_cooldown = unit.spec.attack_period.unwrap_or(0.0);
            } else {
                unit.weapon_cooldown = (unit.weapon_cooldown - dt).max(0.0);
            }
            if !unit.alive {
                unit.weapon_cooldown = 0.0;
            }
        }
    }

    // (6) shields, (7) clock
    regen_in_place(&mut next, cfg);
    next.step += 1;
    next.time = next.step as f64 * dt;
    Ok((next, events))
}
