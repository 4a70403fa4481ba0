//! Deterministic dual-team micro-combat environment with self-play training
//! harnesses, value-decomposition learners and analysis tools.

pub mod adversary;
pub mod engine;
pub mod env;
pub mod learners;
pub mod metrics;
pub mod nn;
pub mod proto;
pub mod rng;
pub mod scenario;
