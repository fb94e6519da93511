//! Occupant model: attributes, runtime state, the phase machine and goal
//! selection. Movement lives in [`social_force`] and [`cellular`].

pub mod cellular;
pub mod social_force;

use std::collections::BTreeSet;

use glam::DVec2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hazard::HazardField;
use crate::navigation::{herding_direction, visible_sign_direction, FloorFields};
use crate::scenario::{Cell, Compass, GridMap};

pub use cellular::{step_cellular_automaton, CaOutcome, CaTarget, Occupancy};
pub use social_force::{step_social_force, ForceParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("{requested} agents requested but only {available} spawn cells are free")]
    Overcrowded { requested: usize, available: usize },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

/// Per-occupant behavioural attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    /// m/s
    pub max_speed: f64,
    /// meters
    pub vision_range: f64,
    /// Seconds between the alarm and starting to evacuate.
    pub reaction_time: f64,
    /// Probability of stopping to help someone in trouble.
    pub collaboration: f64,
    /// Probability of keeping the current goal at each decision step.
    pub insistence: f64,
    /// Probability of knowing any one exit.
    pub knowledge: f64,
    pub body_radius: f64,
    pub mass: f64,
}

impl Default for AgentProfile {
    fn default() -> Self {
        Self {
            max_speed: 1.3,
            vision_range: 10.0,
            reaction_time: 0.0,
            collaboration: 0.2,
            insistence: 0.8,
            knowledge: 1.0,
            body_radius: 0.25,
            mass: 80.0,
        }
    }
}

impl AgentProfile {
    pub fn validate(&self) -> Result<(), AgentError> {
        for (name, p) in [
            ("collaboration", self.collaboration),
            ("insistence", self.insistence),
            ("knowledge", self.knowledge),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AgentError::InvalidProfile(format!("{name} = {p} not in [0,1]")));
            }
        }
        for (name, v) in [
            ("max_speed", self.max_speed),
            ("vision_range", self.vision_range),
            ("body_radius", self.body_radius),
            ("mass", self.mass),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(AgentError::InvalidProfile(format!("{name} = {v} must be > 0")));
            }
        }
        if self.reaction_time.is_nan() || self.reaction_time < 0.0 {
            return Err(AgentError::InvalidProfile(format!(
                "reaction_time = {} must be >= 0",
                self.reaction_time
            )));
        }
        Ok(())
    }
}

/// Closed interval sampled uniformly; `lo == hi` is a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi <= self.lo {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// NPC population distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileDistribution {
    pub max_speed: Range,
    pub reaction_time: Range,
    pub vision_range: f64,
    pub collaboration: f64,
    pub insistence: f64,
    pub knowledge: f64,
    pub body_radius: f64,
    pub mass: f64,
}

impl Default for ProfileDistribution {
    fn default() -> Self {
        let base = AgentProfile::default();
        Self {
            max_speed: Range::new(1.0, 1.5),
            reaction_time: Range::new(1.0, 10.0),
            vision_range: base.vision_range,
            collaboration: base.collaboration,
            insistence: base.insistence,
            knowledge: base.knowledge,
            body_radius: base.body_radius,
            mass: base.mass,
        }
    }
}

impl ProfileDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AgentProfile {
        AgentProfile {
            max_speed: self.max_speed.sample(rng),
            reaction_time: self.reaction_time.sample(rng),
            vision_range: self.vision_range,
            collaboration: self.collaboration,
            insistence: self.insistence,
            knowledge: self.knowledge,
            body_radius: self.body_radius,
            mass: self.mass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Normal,
    Evacuating,
    Escaped,
    Incapacitated,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Escaped | Phase::Incapacitated)
    }

    /// Legal single transitions of the phase machine (self-loops included).
    pub fn can_become(self, next: Phase) -> bool {
        use Phase::*;
        matches!(
            (self, next),
            (Normal, Normal | Evacuating)
                | (Evacuating, Evacuating | Escaped | Incapacitated)
                | (Escaped, Escaped)
                | (Incapacitated, Incapacitated)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Goal {
    Exit(u32),
    Sign(DVec2),
    Herd(DVec2),
    Wander(DVec2),
}

impl Goal {
    pub fn direction(&self) -> Option<DVec2> {
        match self {
            Goal::Exit(_) => None,
            Goal::Sign(d) | Goal::Herd(d) | Goal::Wander(d) => Some(*d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: u32,
    pub is_player: bool,
    pub profile: AgentProfile,
    /// meters
    pub position: DVec2,
    pub velocity: DVec2,
    pub health: f64,
    pub phase: Phase,
    pub goal: Option<Goal>,
    pub known_exits: BTreeSet<u32>,
    /// Partner this agent is helping.
    pub helping: Option<u32>,
    /// Helper leading this agent.
    pub led_by: Option<u32>,
    /// 1 while able to move, 0 once incapacitated.
    pub mobility: f64,
    /// Cellular-automaton move credit, in cells.
    pub move_credit: f64,
    /// Seconds from the alarm to reaching an exit.
    pub egress_time: Option<f64>,
}

impl AgentState {
    pub fn new(id: u32, profile: AgentProfile, position: DVec2) -> Self {
        Self {
            id,
            is_player: false,
            profile,
            position,
            velocity: DVec2::ZERO,
            health: 100.0,
            phase: Phase::Normal,
            goal: None,
            known_exits: BTreeSet::new(),
            helping: None,
            led_by: None,
            mobility: 1.0,
            move_credit: 0.0,
            egress_time: None,
        }
    }

    pub fn incapacitate(&mut self) {
        self.phase = Phase::Incapacitated;
        self.mobility = 0.0;
        self.velocity = DVec2::ZERO;
        self.helping = None;
    }

    pub fn cell(&self, map: &GridMap) -> Cell {
        map.cell_of(self.position)
    }
}

/// Place `count` agents on distinct, randomly chosen spawn cells.
pub fn sample_population<R: Rng + ?Sized>(
    map: &GridMap,
    count: usize,
    dist: &ProfileDistribution,
    rng: &mut R,
) -> Result<Vec<AgentState>, AgentError> {
    sample_population_on(map, &map.spawn_cells, count, 0, dist, rng)
}

/// As [`sample_population`] but drawing from `cells` and numbering agents
/// from `first_id`.
pub fn sample_population_on<R: Rng + ?Sized>(
    map: &GridMap,
    cells: &[Cell],
    count: usize,
    first_id: u32,
    dist: &ProfileDistribution,
    rng: &mut R,
) -> Result<Vec<AgentState>, AgentError> {
    if count > cells.len() {
        return Err(AgentError::Overcrowded {
            requested: count,
            available: cells.len(),
        });
    }
    let mut pool = cells.to_vec();
    let (chosen, _) = rand::seq::SliceRandom::partial_shuffle(pool.as_mut_slice(), rng, count);
    let chosen = chosen.to_vec();
    let mut agents = Vec::with_capacity(count);
    for (k, cell) in chosen.into_iter().enumerate() {
        let profile = dist.sample(rng);
        let mut agent = AgentState::new(first_id + k as u32, profile, map.cell_center(cell));
        agent.known_exits = sample_known_exits(map, profile.knowledge, rng);
        agents.push(agent);
    }
    Ok(agents)
}

/// Each exit is known independently with probability `knowledge`.
pub fn sample_known_exits<R: Rng + ?Sized>(
    map: &GridMap,
    knowledge: f64,
    rng: &mut R,
) -> BTreeSet<u32> {
    map.exits
        .iter()
        .filter(|_| rng.random_bool(knowledge.clamp(0.0, 1.0)))
        .map(|e| e.id)
        .collect()
}

/// Duration of `ticks` steps of `dt` seconds. Dividing by the tick rate
/// keeps whole-rate clocks exact: 478 ticks at 0.05 s is 23.9 s, not
/// 23.900000000000002.
pub fn ticks_to_seconds(ticks: u64, dt: f64) -> f64 {
    ticks as f64 / (1.0 / dt)
}

/// Phase transitions driven by the alarm clock and exit contact.
///
/// Normal becomes Evacuating once `(now - alarm) * dt >= reaction_time`;
/// Evacuating becomes Escaped on an exit cell, stamping the egress time.
pub fn update_phase(
    agent: &AgentState,
    map: &GridMap,
    alarm_tick: Option<u64>,
    now_tick: u64,
    dt: f64,
) -> AgentState {
    let mut next = agent.clone();
    let Some(alarm) = alarm_tick else {
        return next;
    };
    if now_tick < alarm {
        return next;
    }
    let elapsed = ticks_to_seconds(now_tick - alarm, dt);
    if next.phase == Phase::Normal && elapsed + 1e-9 >= next.profile.reaction_time {
        next.phase = Phase::Evacuating;
    }
    if next.phase == Phase::Evacuating && map.exit_id_at(next.cell(map)).is_some() {
        next.phase = Phase::Escaped;
        next.egress_time = Some(elapsed);
        next.velocity = DVec2::ZERO;
    }
    next
}

/// Shared read-only inputs for goal selection.
pub struct DecisionContext<'a> {
    pub map: &'a GridMap,
    pub fields: &'a FloorFields,
    pub smoke: &'a HazardField,
    pub neighbors: &'a [AgentState],
    pub opacity_coeff: f64,
    pub herding_radius: f64,
}

/// Choose the agent's goal for this decision step.
///
/// With probability `insistence` the current goal is kept, except that a
/// heading goal yields to the nearest visible sign. Otherwise, in order:
/// nearest known exit by floor field, visible sign, herd heading, wander.
pub fn decide_goal<R: Rng + ?Sized>(agent: &AgentState, ctx: &DecisionContext, rng: &mut R) -> Goal {
    let sign = || {
        visible_sign_direction(
            ctx.map,
            agent.position,
            ctx.smoke,
            agent.profile.vision_range,
            ctx.opacity_coeff,
        )
    };
    if let Some(current) = agent.goal {
        if rng.random_bool(agent.profile.insistence.clamp(0.0, 1.0)) {
            // A visible sign replaces any sign, herd or wander heading.
            if !matches!(current, Goal::Exit(_)) {
                if let Some(dir) = sign() {
                    return Goal::Sign(dir);
                }
            }
            return current;
        }
    }
    let here = agent.cell(ctx.map);
    if let Some((exit, _)) = ctx.fields.nearest_known(&agent.known_exits, here) {
        return Goal::Exit(exit);
    }
    if let Some(dir) = sign() {
        return Goal::Sign(dir);
    }
    if let Some(dir) = herding_direction(agent, ctx.neighbors, ctx.herding_radius) {
        return Goal::Herd(dir);
    }
    Goal::Wander(random_walkable_direction(ctx.map, here, rng))
}

/// A compass direction whose neighbouring cell is walkable, chosen uniformly.
pub fn random_walkable_direction<R: Rng + ?Sized>(map: &GridMap, cell: Cell, rng: &mut R) -> DVec2 {
    let open: Vec<Compass> = Compass::ALL
        .into_iter()
        .filter(|c| {
            let u = c.unit();
            map.is_walkable(cell.offset(u.x.round() as i32, u.y.round() as i32))
        })
        .collect();
    let pool = if open.is_empty() { Compass::ALL.to_vec() } else { open };
    pool[rng.random_range(0..pool.len())].unit()
}

/// Health below which an evacuating agent can be helped.
pub const INJURED_HEALTH: f64 = 50.0;

fn needs_help(a: &AgentState) -> bool {
    a.led_by.is_none()
        && a.helping.is_none()
        && (a.phase == Phase::Incapacitated
            || (a.phase == Phase::Evacuating && a.health < INJURED_HEALTH))
}

/// Possibly start helping the nearest neighbour in need within vision.
pub fn apply_collaboration<R: Rng + ?Sized>(
    agent: &AgentState,
    neighbors: &[AgentState],
    rng: &mut R,
) -> AgentState {
    let mut next = agent.clone();
    if agent.phase != Phase::Evacuating
        || agent.helping.is_some()
        || agent.led_by.is_some()
        || agent.health < INJURED_HEALTH
    {
        return next;
    }
    let target = neighbors
        .iter()
        .filter(|n| n.id != agent.id && needs_help(n))
        .map(|n| (n.position.distance(agent.position), n))
        .filter(|(d, _)| *d <= agent.profile.vision_range)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    if let Some((_, partner)) = target {
        if rng.random_bool(agent.profile.collaboration.clamp(0.0, 1.0)) {
            next.helping = Some(partner.id);
        }
    }
    next
}

/// Travel speed of a helper and the person it leads.
pub fn pair_speed(a: &AgentProfile, b: &AgentProfile) -> f64 {
    0.5 * a.max_speed.min(b.max_speed)
}
