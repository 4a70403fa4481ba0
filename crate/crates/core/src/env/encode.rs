//! Observation, global-state and action-mask encodings.
//!
//! Every team sees the world in its own frame: red uses the arena frame, blue
//! the point-reflected one, so both perceive themselves spawning west and
//! attacking east. Slots are ordered by unit id.

use crate::engine::{Direction, EngineConfig, Team, Unit, UnitKind, WorldState};

pub type ActionMask = Vec<bool>;

pub const ACTION_NOOP: usize = 0;
pub const ACTION_STOP: usize = 1;
pub const ACTION_NORTH: usize = 2;
pub const ACTION_SOUTH: usize = 3;
pub const ACTION_EAST: usize = 4;
pub const ACTION_WEST: usize = 5;
/// First target action; `TARGET_BASE + k` addresses enemy `k` (or ally `k`
/// for a healer).
pub const TARGET_BASE: usize = 6;

const MOVE_DIRECTIONS: [Direction; 4] = [
    Direction::North,
    Direction::South,
    Direction::East,
    Direction::West,
];

/// Sign of the team frame: red sees arena coordinates, blue reflected ones.
pub fn frame_sign(team: Team) -> f64 {
    match team {
        Team::Red => 1.0,
        Team::Blue => -1.0,
    }
}

/// A team-frame direction expressed in arena coordinates.
pub fn world_direction(team: Team, dir: Direction) -> Direction {
    match team {
        Team::Red => dir,
        Team::Blue => dir.reflected(),
    }
}

/// Field layout of one team's observation vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsLayout {
    pub team: Team,
    pub n_enemies: usize,
    pub n_allies: usize,
    pub unit_types: Vec<UnitKind>,
    pub sight_range: f64,
}

impl ObsLayout {
    pub const MOVE_FEATURES: usize = 4;

    pub fn type_width(&self) -> usize {
        self.unit_types.len()
    }

    pub fn enemy_width(&self) -> usize {
        6 + self.type_width()
    }

    pub fn ally_width(&self) -> usize {
        5 + self.type_width()
    }

    pub fn enemy_offset(&self, k: usize) -> usize {
        Self::MOVE_FEATURES + k * self.enemy_width()
    }

    /// Offset of the `j`-th ally slot (self excluded).
    pub fn ally_offset(&self, j: usize) -> usize {
        self.enemy_offset(self.n_enemies) + j * self.ally_width()
    }

    pub fn own_offset(&self) -> usize {
        self.ally_offset(self.n_allies - 1)
    }

    /// `4 + E(6+T) + (A-1)(5+T) + (2+T)`
    pub fn len(&self) -> usize {
        self.own_offset() + 2 + self.type_width()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn type_index(&self, kind: UnitKind) -> usize {
        self.unit_types
            .iter()
            .position(|&k| k == kind)
            .expect("unit kind outside the scenario's type list")
    }

    /// Decodes a one-hot block back to a unit kind; `None` for an empty slot.
    pub fn decode_type(&self, one_hot: &[f64]) -> Option<UnitKind> {
        one_hot
            .iter()
            .position(|&v| v > 0.5)
            .map(|i| self.unit_types[i])
    }
}

fn shield_fraction(u: &Unit) -> f64 {
    if u.spec.max_shield > 0.0 {
        u.shield / u.spec.max_shield
    } else {
        0.0
    }
}

fn move_available(world: &WorldState, unit: &Unit, team: Team, dir: Direction, cfg: &EngineConfig) -> bool {
    let step = world_direction(team, dir).unit_vector() * (unit.spec.move_speed * cfg.step_dt);
    world.arena.contains(unit.pos + step)
}

/// Per-agent observation vector in the team's mirrored frame. Dead agents get
/// all zeros.
pub fn encode_observation(
    world: &WorldState,
    team: Team,
    agent: usize,
    layout: &ObsLayout,
    cfg: &EngineConfig,
) -> Vec<f64> {
    let mut obs = vec![0.0; layout.len()];
    let me = &world.team(team)[agent];
    if !me.alive {
        return obs;
    }
    let sign = frame_sign(team);
    let sight = layout.sight_range;
    let t_off = |off: usize, kind: UnitKind| off + layout.type_index(kind);

    for (i, dir) in MOVE_DIRECTIONS.into_iter().enumerate() {
        obs[i] = f64::from(u8::from(move_available(world, me, team, dir, cfg)));
    }

    let enemies = world.team(team.opponent());
    for (k, e) in enemies.iter().enumerate() {
        let offset = e.pos - me.pos;
        let dist = offset.length();
        if !e.alive || dist > sight {
            continue;
        }
        let base = layout.enemy_offset(k);
        obs[base] = (k + 1) as f64 / layout.n_enemies as f64;
        obs[base + 1] = dist / sight;
        obs[base + 2] = sign * offset.x / sight;
        obs[base + 3] = sign * offset.y / sight;
        obs[base + 4] = e.health / e.spec.max_health;
        obs[base + 5] = shield_fraction(e);
        obs[t_off(base + 6, e.kind())] = 1.0;
    }

    let allies = world.team(team);
    for (j, a) in allies.iter().filter(|a| a.id != me.id).enumerate() {
        let offset = a.pos - me.pos;
        let dist = offset.length();
        if !a.alive || dist > sight {
            continue;
        }
        let base = layout.ally_offset(j);
        obs[base] = dist / sight;
        obs[base + 1] = sign * offset.x / sight;
        obs[base + 2] = sign * offset.y / sight;
        obs[base + 3] = a.health / a.spec.max_health;
        obs[base + 4] = shield_fraction(a);
        obs[t_off(base + 5, a.kind())] = 1.0;
    }

    let base = layout.own_offset();
    obs[base] = me.health / me.spec.max_health;
    obs[base + 1] = shield_fraction(me);
    obs[t_off(base + 2, me.kind())] = 1.0;
    obs
}

/// Training-only global state: every unit of both teams, enemies first,
/// positions relative to the arena center in the team's frame, normalized by
/// the arena half-extent.
pub fn encode_state(world: &WorldState, team: Team, layout: &ObsLayout, cooldown_on_allies: bool) -> Vec<f64> {
    let sign = frame_sign(team);
    let (hw, hh) = (world.arena.width / 2.0, world.arena.height / 2.0);
    let t = layout.type_width();
    let enemies = world.team(team.opponent());
    let allies = world.team(team);
    let len = state_len(enemies.len(), allies.len(), t, cooldown_on_allies);
    let mut state = Vec::with_capacity(len);

    let mut row = |u: &Unit, with_cd: bool| {
        if !u.alive {
            let width = if with_cd { 5 + t } else { 4 + t };
            state.extend(std::iter::repeat_n(0.0, width));
            return;
        }
        state.push(u.health / u.spec.max_health);
        if with_cd {
            let cd = match u.spec.attack_period {
                Some(p) if p > 0.0 => u.weapon_cooldown / p,
                _ => 0.0,
            };
            state.push(cd);
        }
        state.push(sign * u.pos.x / hw);
        state.push(sign * u.pos.y / hh);
        state.push(shield_fraction(u));
        let mut one_hot = vec![0.0; t];
        one_hot[layout.type_index(u.kind())] = 1.0;
        state.extend(one_hot);
    };
    for e in enemies {
        row(e, !cooldown_on_allies);
    }
    for a in allies {
        row(a, cooldown_on_allies);
    }
    debug_assert_eq!(state.len(), len);
    state
}

/// Global-state length: enemy rows are `[health, cd, x, y, shield, type..]`
/// (`5+T`) and ally rows drop the cooldown (`4+T`); swapped when the cooldown
/// column moves to allies.
pub fn state_len(n_enemies: usize, n_allies: usize, type_width: usize, cooldown_on_allies: bool) -> usize {
    let (e, a) = if cooldown_on_allies { (4, 5) } else { (5, 4) };
    n_enemies * (e + type_width) + n_allies * (a + type_width)
}

/// Action availability for one agent. `n_actions` is the team's action-space
/// size.
pub fn available_actions(
    world: &WorldState,
    team: Team,
    agent: usize,
    n_actions: usize,
    cfg: &EngineConfig,
) -> ActionMask {
    let mut mask = vec![false; n_actions];
    let me = &world.team(team)[agent];
    if !me.alive {
        mask[ACTION_NOOP] = true;
        return mask;
    }
    mask[ACTION_STOP] = true;
    for (i, dir) in MOVE_DIRECTIONS.into_iter().enumerate() {
        mask[ACTION_NORTH + i] = move_available(world, me, team, dir, cfg);
    }
    let sight = me.spec.sight_range;
    if me.spec.is_healer {
        for (k, ally) in world.team(team).iter().enumerate() {
            if k != agent && ally.alive && !ally.spec.is_healer && me.pos.distance(ally.pos) <= sight {
                mask[TARGET_BASE + k] = true;
            }
        }
    } else if me.spec.can_attack() {
        for (k, enemy) in world.team(team.opponent()).iter().enumerate() {
            if enemy.alive && me.pos.distance(enemy.pos) <= sight {
                mask[TARGET_BASE + k] = true;
            }
        }
    }
    mask
}
