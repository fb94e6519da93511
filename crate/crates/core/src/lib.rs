//! Deterministic agent-based building evacuation under fire and smoke.

pub mod agents;
pub mod engine;
pub mod experiment;
pub mod hazard;
pub mod navigation;
pub mod rng;
pub mod scenario;

pub use engine::{run_to_completion, Backend, SimConfig, Simulation, Snapshot};
pub use scenario::{load_blueprint, parse_blueprint, Cell, GridMap};
