//! Newline-delimited JSON replay log, one record per environment step.
//!
//! Each line is a [`ReplayRecord`] with `schema_version = 1`. Positions are in
//! arena coordinates (origin at the bottom-left corner). Actions are the
//! team-frame codes each team submitted.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Outcome, StepEvents, Team, WorldState};

pub const REPLAY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSnapshot {
    pub id: usize,
    pub team: Team,
    pub kind: String,
    pub x: f64,
    pub y: f64,
    pub health: f64,
    pub shield: f64,
    pub cooldown: f64,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub schema_version: u32,
    pub episode: u64,
    pub scenario: String,
    /// Step index after this transition (1 for the first step).
    pub step: u32,
    pub units: Vec<UnitSnapshot>,
    pub red_actions: Vec<usize>,
    pub blue_actions: Vec<usize>,
    pub red_reward: f64,
    pub blue_reward: f64,
    pub events: StepEvents,
    pub outcome: Outcome,
}

impl ReplayRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn capture(
        episode: u64,
        scenario: &str,
        world: &WorldState,
        red_actions: &[usize],
        blue_actions: &[usize],
        rewards: (f64, f64),
        events: StepEvents,
        outcome: Outcome,
    ) -> ReplayRecord {
        let units = Team::BOTH
            .iter()
            .flat_map(|&t| world.team(t))
            .map(|u| {
                let p = world.arena.to_world(u.pos);
                UnitSnapshot {
                    id: u.id,
                    team: u.team,
                    kind: u.kind().name().to_string(),
                    x: p.x,
                    y: p.y,
                    health: u.health,
                    shield: u.shield,
                    cooldown: u.weapon_cooldown,
                    alive: u.alive,
                }
            })
            .collect();
        ReplayRecord {
            schema_version: REPLAY_SCHEMA_VERSION,
            episode,
            scenario: scenario.to_string(),
            step: world.step,
            units,
            red_actions: red_actions.to_vec(),
            blue_actions: blue_actions.to_vec(),
            red_reward: rewards.0,
            blue_reward: rewards.1,
            events,
            outcome,
        }
    }

    pub fn actions(&self, team: Team) -> &[usize] {
        match team {
            Team::Red => &self.red_actions,
            Team::Blue => &self.blue_actions,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: unsupported schema version {found}")]
    Version { line: usize, found: u32 },
}

pub fn write_record<W: Write>(out: &mut W, record: &ReplayRecord) -> Result<(), ReplayError> {
    let line = serde_json::to_string(record).map_err(|e| ReplayError::Parse { line: 0, source: e })?;
    writeln!(out, "{line}")?;
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<ReplayRecord>, ReplayError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReplayRecord =
            serde_json::from_str(&line).map_err(|e| ReplayError::Parse { line: i + 1, source: e })?;
        if rec.schema_version != REPLAY_SCHEMA_VERSION {
            return Err(ReplayError::Version {
                line: i + 1,
                found: rec.schema_version,
            });
        }
        records.push(rec);
    }
    Ok(records)
}
