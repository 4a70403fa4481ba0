//! Static unit parameters and live per-unit battle state.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::{EngineError, Team, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArmorClass {
    Light,
    Armored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Race {
    Terran,
    Protoss,
}

/// The six built-in unit types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Marine,
    Marauder,
    Medivac,
    Zealot,
    Stalker,
    Colossus,
}

impl UnitKind {
    pub const ALL: [UnitKind; 6] = [
        UnitKind::Marine,
        UnitKind::Marauder,
        UnitKind::Medivac,
        UnitKind::Zealot,
        UnitKind::Stalker,
        UnitKind::Colossus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Marine => "Marine",
            UnitKind::Marauder => "Marauder",
            UnitKind::Medivac => "Medivac",
            UnitKind::Zealot => "Zealot",
            UnitKind::Stalker => "Stalker",
            UnitKind::Colossus => "Colossus",
        }
    }

    /// Plural key used in scenario config documents (`marines = 3`).
    pub fn config_key(self) -> &'static str {
        match self {
            UnitKind::Marine => "marines",
            UnitKind::Marauder => "marauders",
            UnitKind::Medivac => "medivacs",
            UnitKind::Zealot => "zealots",
            UnitKind::Stalker => "stalkers",
            UnitKind::Colossus => "colossi",
        }
    }

    pub fn from_config_key(key: &str) -> Option<UnitKind> {
        UnitKind::ALL.into_iter().find(|k| k.config_key() == key)
    }

    pub fn spec(self) -> UnitSpec {
        builtin_spec(self)
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Static combat parameters of a unit type.
///
/// Rates are per time unit; `attack_period` is the time between two attacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitSpec {
    pub kind: UnitKind,
    pub race: Race,
    pub max_health: f64,
    pub max_shield: f64,
    pub attack_range: f64,
    pub sight_range: f64,
    pub base_damage: Option<f64>,
    pub bonus_vs: Option<(ArmorClass, f64)>,
    pub attack_period: Option<f64>,
    pub move_speed: f64,
    pub armor_class: ArmorClass,
    pub is_healer: bool,
    pub heal_per_action: f64,
    pub splash_radius: f64,
}

impl UnitSpec {
    pub fn spec_id(&self) -> u8 {
        self.kind as u8
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn can_attack(&self) -> bool {
        self.base_damage.is_some()
    }
}

pub const ATTACK_RANGE: f64 = 6.0;
pub const SIGHT_RANGE: f64 = 9.0;
pub const DEFAULT_HEAL_PER_ACTION: f64 = 7.0;
pub const DEFAULT_SPLASH_RADIUS: f64 = 1.0;

fn builtin_spec(kind: UnitKind) -> UnitSpec {
    let base = UnitSpec {
        kind,
        race: Race::Terran,
        max_health: 0.0,
        max_shield: 0.0,
        attack_range: ATTACK_RANGE,
        sight_range: SIGHT_RANGE,
        base_damage: None,
        bonus_vs: None,
        attack_period: None,
        move_speed: 2.25,
        armor_class: ArmorClass::Light,
        is_healer: false,
        heal_per_action: 0.0,
        splash_radius: 0.0,
    };
    match kind {
        UnitKind::Marine => UnitSpec {
            max_health: 45.0,
            base_damage: Some(6.0),
            attack_period: Some(0.86),
            ..base
        },
        UnitKind::Marauder => UnitSpec {
            max_health: 125.0,
            base_damage: Some(10.0),
            bonus_vs: Some((ArmorClass::Armored, 20.0)),
            attack_period: Some(1.5),
            armor_class: ArmorClass::Armored,
            ..base
        },
        // The table lists no move speed for the Medivac; it keeps pace with the
        // infantry it supports.
        UnitKind::Medivac => UnitSpec {
            max_health: 150.0,
            armor_class: ArmorClass::Armored,
            is_healer: true,
            heal_per_action: DEFAULT_HEAL_PER_ACTION,
            ..base
        },
        UnitKind::Zealot => UnitSpec {
            race: Race::Protoss,
            max_health: 100.0,
            max_shield: 50.0,
            base_damage: Some(16.0),
            attack_period: Some(1.2),
            ..base
        },
        UnitKind::Stalker => UnitSpec {
            race: Race::Protoss,
            max_health: 80.0,
            max_shield: 80.0,
            base_damage: Some(13.0),
            bonus_vs: Some((ArmorClass::Armored, 18.0)),
            attack_period: Some(1.87),
            armor_class: ArmorClass::Armored,
            ..base
        },
        UnitKind::Colossus => UnitSpec {
            race: Race::Protoss,
            max_health: 200.0,
            max_shield: 150.0,
            base_damage: Some(20.0),
            bonus_vs: Some((ArmorClass::Light, 30.0)),
            attack_period: Some(1.5),
            armor_class: ArmorClass::Armored,
            splash_radius: DEFAULT_SPLASH_RADIUS,
            ..base
        },
    }
}

/// Damage one attack of `attacker` deals to a unit of type `target`.
pub fn compute_damage(attacker: &UnitSpec, target: &UnitSpec) -> Result<f64, EngineError> {
    let base = attacker.base_damage.ok_or(EngineError::NotAnAttacker(attacker.kind))?;
    Ok(match attacker.bonus_vs {
        Some((class, bonus)) if class == target.armor_class => bonus,
        _ => base,
    })
}

/// Live state of one unit.
///
/// `pos` is stored relative to the arena center so that point reflection is an
/// exact sign flip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Unit {
    pub id: usize,
    pub team: Team,
    pub spec: UnitSpec,
    pub pos: Vec2,
    pub health: f64,
    pub shield: f64,
    pub weapon_cooldown: f64,
    pub alive: bool,
    pub last_damaged_at: Option<f64>,
}

impl Unit {
    pub fn new(id: usize, team: Team, spec: UnitSpec, pos: Vec2) -> Self {
        Unit {
            id,
            team,
            spec,
            pos,
            health: spec.max_health,
            shield: spec.max_shield,
            weapon_cooldown: 0.0,
            alive: true,
            last_damaged_at: None,
        }
    }

    pub fn kind(&self) -> UnitKind {
        self.spec.kind
    }

    /// Shield absorbs first, the rest goes to health. Returns the hit points
    /// actually removed (overkill is not counted).
    pub fn take_damage(&mut self, amount: f64, now: f64) -> f64 {
        if !self.alive || amount <= 0.0 {
            return 0.0;
        }
        let absorbed = amount.min(self.shield);
        self.shield -= absorbed;
        let overflow = amount - absorbed;
        let lost = overflow.min(self.health);
        self.health -= lost;
        if self.health <= 0.0 {
            self.health = 0.0;
            self.alive = false;
        }
        self.last_damaged_at = Some(now);
        absorbed + lost
    }

    /// Returns the health actually restored.
    pub fn receive_heal(&mut self, amount: f64) -> f64 {
        if !self.alive {
            return 0.0;
        }
        let gained = amount.min(self.spec.max_health - self.health).max(0.0);
        self.health += gained;
        gained
    }
}

/// Pure form of [`Unit::take_damage`].
pub fn apply_damage(unit: &Unit, amount: f64, now: f64) -> Unit {
    let mut out = *unit;
    out.take_damage(amount, now);
    out
}

/// Heals `target` by the healer's per-step amount. Shields are never healed.
pub fn apply_heal(healer: &Unit, target: &Unit) -> Result<Unit, EngineError> {
    if !healer.spec.is_healer {
        return Err(EngineError::NotAHealer(healer.kind()));
    }
    if !target.alive || target.team != healer.team || target.spec.is_healer {
        return Err(EngineError::InvalidHealTarget {
            team: healer.team,
            unit: healer.id,
            target: target.id,
        });
    }
    if healer.pos.distance(target.pos) > healer.spec.attack_range {
        return Err(EngineError::InvalidHealTarget {
            team: healer.team,
            unit: healer.id,
            target: target.id,
        });
    }
    let mut out = *target;
    out.receive_heal(healer.spec.heal_per_action);
    Ok(out)
}
