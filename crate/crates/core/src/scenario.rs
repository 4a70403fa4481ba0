//! Scenario registry, config documents and mirrored spawn layouts.
//!
//! Red spawns in column formation west of the arena center; blue is always the
//! exact point reflection of red, jitter included.

use rand::Rng as _;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;
use toml::{Table, Value};

use crate::engine::{Arena, EngineConfig, Team, Unit, UnitKind, Vec2, WorldState};
use crate::rng::rng_from;

pub const DEFAULT_ARENA: f64 = 32.0;
pub const DEFAULT_SPAWN_SPREAD: f64 = 0.5;
/// Distance from the arena center to the front spawn column.
pub const DEFAULT_FRONT_OFFSET: f64 = 13.0;
/// Row and column spacing of the spawn formation.
pub const FORMATION_SPACING: f64 = 2.0;
/// Minimum distance between the formation and the north/south arena edges.
pub const FORMATION_MARGIN: f64 = 2.0;

pub type Composition = Vec<(UnitKind, u32)>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub red: Composition,
    pub blue: Composition,
    pub arena: Arena,
    pub episode_step_limit: u32,
    pub spawn_spread: f64,
    pub front_offset: f64,
    pub symmetric: bool,
}

impl ScenarioSpec {
    pub fn new(
        name: impl Into<String>,
        red: Composition,
        blue: Composition,
        episode_step_limit: u32,
    ) -> Self {
        let mut spec = ScenarioSpec {
            name: name.into(),
            red,
            blue,
            arena: Arena::new(DEFAULT_ARENA, DEFAULT_ARENA),
            episode_step_limit,
            spawn_spread: DEFAULT_SPAWN_SPREAD,
            front_offset: DEFAULT_FRONT_OFFSET,
            symmetric: false,
        };
        spec.symmetric = spec.compositions_match();
        spec
    }

    pub fn composition(&self, team: Team) -> &Composition {
        match team {
            Team::Red => &self.red,
            Team::Blue => &self.blue,
        }
    }

    /// Unit kinds of one team in unit-id order.
    pub fn units(&self, team: Team) -> Vec<UnitKind> {
        self.composition(team)
            .iter()
            .flat_map(|&(kind, n)| std::iter::repeat_n(kind, n as usize))
            .collect()
    }

    pub fn team_size(&self, team: Team) -> usize {
        self.composition(team).iter().map(|&(_, n)| n as usize).sum()
    }

    /// Distinct unit kinds across both teams, in canonical order. Defines the
    /// one-hot unit-type encoding.
    pub fn unit_types(&self) -> Vec<UnitKind> {
        let mut kinds: Vec<UnitKind> = self
            .red
            .iter()
            .chain(&self.blue)
            .map(|&(k, _)| k)
            .collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    fn compositions_match(&self) -> bool {
        fn totals(c: &Composition) -> BTreeMap<UnitKind, u32> {
            let mut m = BTreeMap::new();
            for &(k, n) in c {
                *m.entry(k).or_insert(0) += n;
            }
            m
        }
        totals(&self.red) == totals(&self.blue)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for team in Team::BOTH {
            if self.composition(team).is_empty() {
                return Err(ScenarioError::EmptyTeam(team));
            }
            for &(kind, n) in self.composition(team) {
                if n == 0 {
                    return Err(ScenarioError::NonPositiveCount {
                        team,
                        unit: kind.config_key().to_string(),
                    });
                }
            }
        }
        if !(self.arena.width > 0.0 && self.arena.height > 0.0) {
            return Err(ScenarioError::InvalidValue {
                key: "arena".into(),
                reason: "dimensions must be positive".into(),
            });
        }
        if self.episode_step_limit == 0 {
            return Err(ScenarioError::InvalidValue {
                key: "step_limit".into(),
                reason: "must be positive".into(),
            });
        }
        if !(self.spawn_spread >= 0.0 && self.front_offset >= 0.0) {
            return Err(ScenarioError::InvalidValue {
                key: "spawn_spread/front_offset".into(),
                reason: "must be >= 0".into(),
            });
        }
        Ok(())
    }

    /// Builds the initial world for this scenario.
    pub fn initial_world(&self, layout: &Layout, engine: &EngineConfig) -> WorldState {
        let build = |team: Team, offsets: &[Vec2]| -> Vec<Unit> {
            self.units(team)
                .into_iter()
                .zip(offsets)
                .enumerate()
                .map(|(id, (kind, &pos))| Unit::new(id, team, engine.unit_spec(kind), pos))
                .collect()
        };
        WorldState::new(
            self.arena,
            build(Team::Red, &layout.red_offsets),
            build(Team::Blue, &layout.blue_offsets),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("unknown base scenario `{0}`")]
    UnknownBaseScenario(String),
    #[error("unknown unit name `{name}` in [{team}]")]
    UnknownUnitName { team: Team, name: String },
    #[error("[{team}] {unit}: count must be positive")]
    NonPositiveCount { team: Team, unit: String },
    #[error("{0} team has no units")]
    EmptyTeam(Team),
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("arena too small for the spawn formation: {0}")]
    ArenaTooSmall(String),
}

/// Default episode step limit of each built-in scenario.
fn default_step_limit(name: &str) -> u32 {
    match name {
        "3m" | "8m" | "2s3z" => 120,
        "10m_vs_11m" | "MMM2" => 180,
        "25m" => 200,
        _ => 150,
    }
}

/// The ten built-in scenarios in table order.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    use UnitKind::*;
    let rows: [(&str, Composition, Composition); 10] = [
        ("3m", vec![(Marine, 3)], vec![(Marine, 3)]),
        ("8m", vec![(Marine, 8)], vec![(Marine, 8)]),
        ("25m", vec![(Marine, 25)], vec![(Marine, 25)]),
        (
            "MMM",
            vec![(Medivac, 1), (Marauder, 2), (Marine, 7)],
            vec![(Medivac, 1), (Marauder, 2), (Marine, 7)],
        ),
        (
            "2s3z",
            vec![(Stalker, 2), (Zealot, 3)],
            vec![(Stalker, 2), (Zealot, 3)],
        ),
        (
            "3s5z",
            vec![(Stalker, 3), (Zealot, 5)],
            vec![(Stalker, 3), (Zealot, 5)],
        ),
        (
            "1c3s5z",
            vec![(Colossus, 1), (Stalker, 3), (Zealot, 5)],
            vec![(Colossus, 1), (Stalker, 3), (Zealot, 5)],
        ),
        ("5m_vs_6m", vec![(Marine, 5)], vec![(Marine, 6)]),
        ("10m_vs_11m", vec![(Marine, 10)], vec![(Marine, 11)]),
        (
            "MMM2",
            vec![(Medivac, 1), (Marauder, 2), (Marine, 7)],
            vec![(Medivac, 1), (Marauder, 3), (Marine, 8)],
        ),
    ];
    rows.into_iter()
        .map(|(name, red, blue)| ScenarioSpec::new(name, red, blue, default_step_limit(name)))
        .collect()
}

pub fn builtin_scenario(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ScenarioError::UnknownBaseScenario(name.to_string()))
}

/// Spawn positions, stored relative to the arena center.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layout {
    pub center: Vec2,
    pub red_offsets: Vec<Vec2>,
    pub blue_offsets: Vec<Vec2>,
}

impl Layout {
    pub fn red_positions(&self) -> Vec<Vec2> {
        self.red_offsets.iter().map(|&o| self.center + o).collect()
    }

    pub fn blue_positions(&self) -> Vec<Vec2> {
        self.blue_offsets.iter().map(|&o| self.center + o).collect()
    }
}

/// Column-formation layout with seeded jitter. Slots are generated for the
/// larger team; red takes the first `|red|` slots and blue the point
/// reflections of the first `|blue|`.
pub fn spawn_layout(spec: &ScenarioSpec, seed: u64) -> Result<Layout, ScenarioError> {
    let slots = spec.team_size(Team::Red).max(spec.team_size(Team::Blue));
    let (hw, hh) = (spec.arena.width / 2.0, spec.arena.height / 2.0);
    let usable = spec.arena.height - 2.0 * FORMATION_MARGIN;
    if usable < 0.0 {
        return Err(ScenarioError::ArenaTooSmall(format!(
            "height {} leaves no room for a column",
            spec.arena.height
        )));
    }
    let max_rows = (usable / FORMATION_SPACING).floor() as usize + 1;
    let columns = slots.div_ceil(max_rows);
    let rows = slots.div_ceil(columns.max(1));

    let mut rng = rng_from(seed);
    let spread = spec.spawn_spread;
    let mut red = Vec::with_capacity(slots);
    for s in 0..slots {
        let col = s / rows;
        let row = s % rows;
        let in_col = rows.min(slots - col * rows);
        let y = (row as f64 - (in_col as f64 - 1.0) / 2.0) * FORMATION_SPACING;
        let x = -(spec.front_offset + col as f64 * FORMATION_SPACING);
        let (jx, jy) = if spread > 0.0 {
            (
                rng.random_range(-spread..=spread),
                rng.random_range(-spread..=spread),
            )
        } else {
            (0.0, 0.0)
        };
        if x.abs() + spread > hw || y.abs() + spread > hh {
            return Err(ScenarioError::ArenaTooSmall(format!(
                "slot {s} at ({x}, {y}) with spread {spread} exceeds a {}x{} arena",
                spec.arena.width, spec.arena.height
            )));
        }
        red.push(Vec2::new(x + jx, y + jy));
    }
    let blue: Vec<Vec2> = red.iter().map(|&p| -p).collect();
    Ok(Layout {
        center: spec.arena.center(),
        red_offsets: red[..spec.team_size(Team::Red)].to_vec(),
        blue_offsets: blue[..spec.team_size(Team::Blue)].to_vec(),
    })
}

/// A scenario plus the engine settings declared alongside it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSpec,
    pub engine: EngineConfig,
}

pub const SCENARIO_SECTIONS: [&str; 4] = ["scenario", "red", "blue", "engine"];

/// Parses a `key = value` scenario document (TOML syntax) with sections
/// `[scenario]`, `[red]`, `[blue]` and `[engine]`. Unknown sections or keys
/// are errors.
pub fn parse_scenario_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ScenarioError::Syntax(e.message().to_string()))?;
    if let Some(section) = table.keys().find(|k| !SCENARIO_SECTIONS.contains(&k.as_str())) {
        return Err(ScenarioError::UnknownSection(section.clone()));
    }
    scenario_from_table(&table)
}

fn section<'a>(table: &'a Table, name: &str) -> Result<Option<&'a Table>, ScenarioError> {
    match table.get(name) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(ScenarioError::InvalidValue {
            key: name.to_string(),
            reason: "expected a section".into(),
        }),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ScenarioError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(ScenarioError::InvalidValue {
            key: key.to_string(),
            reason: "expected a number".into(),
        }),
    }
}

fn as_u32(key: &str, v: &Value) -> Result<i64, ScenarioError> {
    match v {
        Value::Integer(i) => Ok(*i),
        _ => Err(ScenarioError::InvalidValue {
            key: key.to_string(),
            reason: "expected an integer".into(),
        }),
    }
}

/// Reads the scenario-related sections of an already parsed document; other
/// sections are ignored so callers can embed a scenario in a larger file.
pub fn scenario_from_table(table: &Table) -> Result<ScenarioConfig, ScenarioError> {
    let head = section(table, "scenario")?.cloned().unwrap_or_default();
    let mut spec = match head.get("base") {
        Some(Value::String(base)) => builtin_scenario(base)?,
        Some(_) => {
            return Err(ScenarioError::InvalidValue {
                key: "base".into(),
                reason: "expected a string".into(),
            })
        }
        None => {
            let limit = head
                .get("step_limit")
                .ok_or_else(|| ScenarioError::MissingKey("scenario.step_limit".into()))?;
            let limit = as_u32("step_limit", limit)?;
            ScenarioSpec::new("custom", vec![], vec![], limit.max(0) as u32)
        }
    };
    let mut renamed = false;
    for (key, value) in &head {
        match key.as_str() {
            "base" => {}
            "name" => {
                spec.name = value
                    .as_str()
                    .ok_or_else(|| ScenarioError::InvalidValue {
                        key: "name".into(),
                        reason: "expected a string".into(),
                    })?
                    .to_string();
                renamed = true;
            }
            "arena_width" => spec.arena.width = as_f64(key, value)?,
            "arena_height" => spec.arena.height = as_f64(key, value)?,
            "step_limit" => {
                let n = as_u32(key, value)?;
                if n <= 0 {
                    return Err(ScenarioError::InvalidValue {
                        key: key.clone(),
                        reason: "must be positive".into(),
                    });
                }
                spec.episode_step_limit = n as u32;
            }
            "spawn_spread" => spec.spawn_spread = as_f64(key, value)?,
            "front_offset" => spec.front_offset = as_f64(key, value)?,
            _ => {
                return Err(ScenarioError::UnknownKey {
                    section: "scenario".into(),
                    key: key.clone(),
                })
            }
        }
    }

    let mut overridden = false;
    for team in Team::BOTH {
        let Some(units) = section(table, team.as_str())? else { continue };
        for (key, value) in units {
            let kind = UnitKind::from_config_key(key).ok_or_else(|| ScenarioError::UnknownUnitName {
                team,
                name: key.clone(),
            })?;
            let count = as_u32(key, value)?;
            if count <= 0 {
                return Err(ScenarioError::NonPositiveCount { team, unit: key.clone() });
            }
            let comp = match team {
                Team::Red => &mut spec.red,
                Team::Blue => &mut spec.blue,
            };
            match comp.iter_mut().find(|(k, _)| *k == kind) {
                Some(entry) => entry.1 = count as u32,
                None => comp.push((kind, count as u32)),
            }
            overridden = true;
        }
    }
    if overridden && !renamed && head.contains_key("base") {
        spec.name = format!("{}-custom", spec.name);
    }
    spec.symmetric = spec.compositions_match();
    spec.validate()?;

    let mut engine = EngineConfig::default();
    if let Some(eng) = section(table, "engine")? {
        for (key, value) in eng {
            match key.as_str() {
                "step_dt" => engine.step_dt = as_f64(key, value)?,
                "shield_regen_delay" => engine.shield_regen_delay = as_f64(key, value)?,
                "shield_regen_rate" => engine.shield_regen_rate = as_f64(key, value)?,
                "splash_radius" => engine.splash_radius = as_f64(key, value)?,
                "heal_per_action" => engine.heal_per_action = as_f64(key, value)?,
                "allow_overlap" => {
                    engine.allow_overlap = value.as_bool().ok_or_else(|| ScenarioError::InvalidValue {
                        key: key.clone(),
                        reason: "expected true/false".into(),
                    })?
                }
                _ => {
                    return Err(ScenarioError::UnknownKey {
                        section: "engine".into(),
                        key: key.clone(),
                    })
                }
            }
        }
    }
    engine.validate().map_err(|e| ScenarioError::InvalidValue {
        key: "engine".into(),
        reason: e.to_string(),
    })?;
    Ok(ScenarioConfig { scenario: spec, engine })
}

fn fmt_f64(v: f64) -> String {
    // `{:?}` is round-trip exact and always keeps a decimal point or exponent
    format!("{v:?}")
}

/// Serializes a config as a self-contained document (no `base`), so that
/// `parse_scenario_config(to_config_string(c)) == c`.
pub fn to_config_string(config: &ScenarioConfig) -> String {
    let s = &config.scenario;
    let e = &config.engine;
    let mut out = String::new();
    let _ = writeln!(out, "[scenario]");
    let _ = writeln!(out, "name = {:?}", s.name);
    let _ = writeln!(out, "arena_width = {}", fmt_f64(s.arena.width));
    let _ = writeln!(out, "arena_height = {}", fmt_f64(s.arena.height));
    let _ = writeln!(out, "step_limit = {}", s.episode_step_limit);
    let _ = writeln!(out, "spawn_spread = {}", fmt_f64(s.spawn_spread));
    let _ = writeln!(out, "front_offset = {}", fmt_f64(s.front_offset));
    for team in Team::BOTH {
        let _ = writeln!(out, "\n[{team}]");
        for &(kind, n) in s.composition(team) {
            let _ = writeln!(out, "{} = {n}", kind.config_key());
        }
    }
    let _ = writeln!(out, "\n[engine]");
    let _ = writeln!(out, "step_dt = {}", fmt_f64(e.step_dt));
    let _ = writeln!(out, "shield_regen_delay = {}", fmt_f64(e.shield_regen_delay));
    let _ = writeln!(out, "shield_regen_rate = {}", fmt_f64(e.shield_regen_rate));
    let _ = writeln!(out, "allow_overlap = {}", e.allow_overlap);
    let _ = writeln!(out, "splash_radius = {}", fmt_f64(e.splash_radius));
    let _ = writeln!(out, "heal_per_action = {}", fmt_f64(e.heal_per_action));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use UnitKind::*;

    #[test]
    fn registry_matches_table() {
        let all = builtin_scenarios();
        let names: Vec<_> = all.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            ["3m", "8m", "25m", "MMM", "2s3z", "3s5z", "1c3s5z", "5m_vs_6m", "10m_vs_11m", "MMM2"]
        );
        let mmm2 = builtin_scenario("MMM2").unwrap();
        assert_eq!(mmm2.red, vec![(Medivac, 1), (Marauder, 2), (Marine, 7)]);
        assert_eq!(mmm2.blue, vec![(Medivac, 1), (Marauder, 3), (Marine, 8)]);
        assert!(!mmm2.symmetric);
        let mmm = builtin_scenario("MMM").unwrap();
        assert_eq!(mmm.team_size(Team::Red), 10);
        assert!(mmm.symmetric);
        let three = builtin_scenario("3m").unwrap();
        assert_eq!(three.red, vec![(Marine, 3)]);
        assert!(three.symmetric);
        let five = builtin_scenario("5m_vs_6m").unwrap();
        assert_eq!((five.team_size(Team::Red), five.team_size(Team::Blue)), (5, 6));
        assert!(!five.symmetric);
        let symmetric: Vec<_> = all.iter().filter(|s| s.symmetric).map(|s| s.name.as_str()).collect();
        assert_eq!(symmetric, ["3m", "8m", "25m", "MMM", "2s3z", "3s5z", "1c3s5z"]);
        assert!(matches!(builtin_scenario("4m"), Err(ScenarioError::UnknownBaseScenario(_))));
    }

    #[test]
    fn three_marine_layout_without_jitter() {
        let mut spec = builtin_scenario("3m").unwrap();
        spec.spawn_spread = 0.0;
        let layout = spawn_layout(&spec, 7).unwrap();
        assert_eq!(layout.red_positions()[0], Vec2::new(3.0, 14.0));
        assert_eq!(layout.blue_positions()[0], Vec2::new(29.0, 18.0));

        spec.front_offset = 4.0;
        let layout = spawn_layout(&spec, 7).unwrap();
        assert_eq!(layout.center, Vec2::new(16.0, 16.0));
        assert_eq!(
            layout.red_positions(),
            vec![Vec2::new(12.0, 14.0), Vec2::new(12.0, 16.0), Vec2::new(12.0, 18.0)]
        );
        assert_eq!(
            layout.blue_positions(),
            vec![Vec2::new(20.0, 18.0), Vec2::new(20.0, 16.0), Vec2::new(20.0, 14.0)]
        );
    }

    #[test]
    fn every_builtin_layout_fits() {
        for spec in builtin_scenarios() {
            let layout = spawn_layout(&spec, 3).unwrap();
            assert_eq!(layout.red_offsets.len(), spec.team_size(Team::Red));
            assert_eq!(layout.blue_offsets.len(), spec.team_size(Team::Blue));
            for p in layout.red_offsets.iter().chain(&layout.blue_offsets) {
                assert!(spec.arena.contains(*p), "{} {p:?}", spec.name);
            }
        }
    }

    #[test]
    fn arena_too_small() {
        let mut spec = builtin_scenario("25m").unwrap();
        spec.arena = Arena::new(10.0, 10.0);
        assert!(matches!(spawn_layout(&spec, 0), Err(ScenarioError::ArenaTooSmall(_))));
    }

    #[test]
    fn config_overrides() {
        let cfg = parse_scenario_config("[scenario]\nbase = \"8m\"\n[red]\nmarines = 9\n").unwrap();
        assert_eq!(cfg.scenario.red, vec![(Marine, 9)]);
        assert_eq!(cfg.scenario.blue, vec![(Marine, 8)]);
        assert!(!cfg.scenario.symmetric);

        let plain = parse_scenario_config("[scenario]\nbase = \"3m\"\n").unwrap();
        assert_eq!(plain.scenario, builtin_scenario("3m").unwrap());
        assert_eq!(plain.engine, EngineConfig::default());

        assert!(matches!(
            parse_scenario_config("[scenario]\nbase = \"3m\"\n[red]\nmarines = 0\n"),
            Err(ScenarioError::NonPositiveCount { team: Team::Red, .. })
        ));
        assert!(matches!(
            parse_scenario_config("[scenario]\nbase = \"3m\"\n[blue]\nzerglings = 4\n"),
            Err(ScenarioError::UnknownUnitName { team: Team::Blue, .. })
        ));
        assert!(matches!(
            parse_scenario_config("[scenario]\nbase = \"9z\"\n"),
            Err(ScenarioError::UnknownBaseScenario(_))
        ));
        assert!(matches!(
            parse_scenario_config("[scenario]\nbase = \"3m\"\ncolour = 1\n"),
            Err(ScenarioError::UnknownKey { .. })
        ));
        assert!(matches!(
            parse_scenario_config("[scenario]\nbase = \"3m\"\n[engine]\nwarp = 2\n"),
            Err(ScenarioError::UnknownKey { .. })
        ));
        assert!(matches!(
            parse_scenario_config("[weather]\nrain = 1\n"),
            Err(ScenarioError::UnknownSection(_))
        ));
    }

    #[test]
    fn config_engine_and_arena_keys() {
        let text = "[scenario]\nbase = \"2s3z\"\narena_width = 40\nstep_limit = 99\nspawn_spread = 0\n\
                    [engine]\nstep_dt = 0.25\nshield_regen_rate = 3\n";
        let cfg = parse_scenario_config(text).unwrap();
        assert_eq!(cfg.scenario.arena.width, 40.0);
        assert_eq!(cfg.scenario.episode_step_limit, 99);
        assert_eq!(cfg.scenario.spawn_spread, 0.0);
        assert_eq!(cfg.engine.step_dt, 0.25);
        assert_eq!(cfg.engine.shield_regen_rate, 3.0);
        assert!(cfg.scenario.symmetric);
    }

    #[test]
    fn serialization_round_trips_builtins() {
        for spec in builtin_scenarios() {
            let cfg = ScenarioConfig { scenario: spec, engine: EngineConfig::default() };
            let text = to_config_string(&cfg);
            assert_eq!(parse_scenario_config(&text).unwrap(), cfg);
        }
    }

    fn comp_strategy() -> impl Strategy<Value = Composition> {
        prop::sample::subsequence(UnitKind::ALL.to_vec(), 1..=3)
            .prop_flat_map(|kinds| {
                let n = kinds.len();
                (Just(kinds), prop::collection::vec(1u32..6, n))
            })
            .prop_map(|(kinds, counts)| kinds.into_iter().zip(counts).collect())
    }

    proptest! {
        #[test]
        fn layouts_are_point_reflections(seed in any::<u64>(), idx in 0usize..10) {
            let spec = &builtin_scenarios()[idx];
            let layout = spawn_layout(spec, seed).unwrap();
            let red = layout.red_positions();
            let blue = layout.blue_positions();
            for (r, b) in red.iter().zip(&blue) {
                prop_assert!(((r.x + b.x) / 2.0 - 16.0).abs() < 1e-12);
                prop_assert!(((r.y + b.y) / 2.0 - 16.0).abs() < 1e-12);
            }
            for (r, b) in layout.red_offsets.iter().zip(&layout.blue_offsets) {
                prop_assert_eq!(*b, -*r);
            }
            prop_assert_eq!(&layout, &spawn_layout(spec, seed).unwrap());
        }

        #[test]
        fn arbitrary_specs_round_trip(
            red in comp_strategy(),
            blue in comp_strategy(),
            limit in 1u32..500,
            spread in 0.0f64..2.0,
            width in 20.0f64..80.0,
            dt in 0.1f64..1.0,
        ) {
            let mut spec = ScenarioSpec::new("custom-run", red, blue, limit);
            spec.spawn_spread = spread;
            spec.arena.width = width;
            let engine = EngineConfig { step_dt: dt, ..EngineConfig::default() };
            let cfg = ScenarioConfig { scenario: spec, engine };
            prop_assert_eq!(parse_scenario_config(&to_config_string(&cfg)).unwrap(), cfg);
        }
    }
}
