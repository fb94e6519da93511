//! The simulation loop.
//!
//! Tick order: player input, fire and smoke, phases, goal decisions (at the
//! decision cadence), movement, harm, escape detection. The alarm sounds at
//! the ignition tick and all egress times are measured from it.

use std::collections::BTreeMap;
use std::sync::Arc;

use glam::DVec2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{
    self, apply_collaboration, decide_goal, pair_speed, random_walkable_direction,
    sample_known_exits, sample_population_on, step_cellular_automaton, step_social_force, ticks_to_seconds,
    update_phase, AgentError, AgentProfile, AgentState, CaTarget, DecisionContext, ForceParams,
    Goal, Occupancy, Phase, ProfileDistribution,
};
use crate::experiment::{GroupLabel, Outcome, SessionRecord};
use crate::hazard::{ignite_random_room, HazardError, HazardField, HazardParams};
use crate::navigation::{visible_sign_direction, FloorField, FloorFields};
use crate::rng::SimRngs;
use crate::scenario::{Cell, GridMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Agents(#[from] AgentError),
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error("simulation already ended ({0:?})")]
    SimEnded(Outcome),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backend {
    #[serde(rename = "force")]
    SocialForce,
    #[serde(rename = "ca")]
    CellularAutomaton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlayerControl {
    /// Steered by the same decision model as NPCs.
    Autonomous,
    /// Steered by [`StepInputs::player_direction`].
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerConfig {
    pub profile: AgentProfile,
    pub control: PlayerControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Seconds per tick.
    pub dt: f64,
    pub backend: Backend,
    pub seed: u64,
    pub npc_count: usize,
    /// Seconds after the alarm before the run times out.
    pub max_sim_time: f64,
    pub hazard: HazardParams,
    pub force: ForceParams,
    pub profile_distribution: ProfileDistribution,
    pub player: Option<PlayerConfig>,
    /// Smoke opacity per meter of density-weighted path.
    pub opacity_coeff: f64,
    pub herding_radius: f64,
    /// Seconds between goal re-evaluations.
    pub decision_interval: f64,
    /// Floor fields are rebuilt around the fire once this many new cells burn.
    pub field_rebuild_cells: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            backend: Backend::SocialForce,
            seed: 0,
            npc_count: 30,
            max_sim_time: 600.0,
            hazard: HazardParams::default(),
            force: ForceParams::default(),
            profile_distribution: ProfileDistribution::default(),
            player: None,
            opacity_coeff: 0.5,
            herding_radius: 3.0,
            decision_interval: 1.0,
            field_rebuild_cells: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(EngineError::InvalidConfig(format!("dt {} not in (0, 0.1]", self.dt)));
        }
        if self.max_sim_time.is_nan() || self.max_sim_time <= 0.0 {
            return Err(EngineError::InvalidConfig("max_sim_time must be positive".into()));
        }
        if self.decision_interval.is_nan() || self.decision_interval <= 0.0 {
            return Err(EngineError::InvalidConfig("decision_interval must be positive".into()));
        }
        self.hazard.validate()?;
        if let Some(p) = &self.player {
            p.profile.validate()?;
        }
        Ok(())
    }

    /// Short stable hash of the full configuration.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInputs {
    /// Desired heading for an externally controlled player, components in
    /// [-1, 1]. `None` keeps the previous input.
    pub player_direction: Option<DVec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Event {
    Ignition { room: String },
    Alarm,
    AgentEscaped { id: u32, time: f64 },
    AgentIncapacitated { id: u32 },
    GoalChanged { id: u32, goal: Goal },
    SimEnded { reason: Outcome },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub tick: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Ordered event timeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog {
    entries: Vec<LoggedEvent>,
}

impl EventLog {
    pub fn push(&mut self, tick: u64, event: Event) {
        debug_assert!(self.entries.last().is_none_or(|e| e.tick <= tick));
        self.entries.push(LoggedEvent { tick, event });
    }

    pub fn entries(&self) -> &[LoggedEvent] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of [`EventLog::to_json_lines`], hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_lines().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Census {
    pub inside: usize,
    pub escaped: usize,
    pub incapacitated: usize,
}

impl Census {
    pub fn total(&self) -> usize {
        self.inside + self.escaped + self.incapacitated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub agents: Vec<AgentState>,
    pub hazard: HazardField,
    pub alarm_active: bool,
    pub alarm_tick: Option<u64>,
    pub elapsed_since_alarm: f64,
    pub initial_population: usize,
}

impl Snapshot {
    pub fn census(&self) -> Census {
        let mut c = Census::default();
        for a in &self.agents {
            match a.phase {
                Phase::Normal | Phase::Evacuating => c.inside += 1,
                Phase::Escaped => c.escaped += 1,
                Phase::Incapacitated => c.incapacitated += 1,
            }
        }
        c
    }

    pub fn player(&self) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.is_player)
    }

    pub fn agent(&self, id: u32) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }
}

/// Player agents always carry id 0; NPCs are numbered from 1.
pub const PLAYER_ID: u32 = 0;

#[derive(Clone, Copy)]
enum Steering {
    /// Descend the field for this exit; `masked` picks the fire-aware set.
    Field { exit: u32, masked: bool },
    Direction(DVec2),
    Stay,
}

/// One running evacuation.
#[derive(Debug, Clone)]
pub struct Simulation {
    map: Arc<GridMap>,
    config: SimConfig,
    snapshot: Snapshot,
    log: EventLog,
    rngs: SimRngs,
    base_fields: FloorFields,
    fields: FloorFields,
    fields_burning: usize,
    occupancy: Option<Occupancy>,
    player_input: DVec2,
    ticks_per_decision: u64,
    ended: Option<Outcome>,
}

impl Simulation {
    /// Spawn the population, ignite a random room and sound the alarm at
    /// tick 0. Maps with no room eligible to burn get the alarm alone.
    pub fn new(map: Arc<GridMap>, config: SimConfig) -> Result<Self, EngineError> {
        let mut sim = Self::build(map, config)?;
        // A map without a room that can burn still runs as a plain drill.
        match ignite_random_room(&sim.map, &mut sim.rngs.ignition, 0) {
            Ok(hazard) => {
                let room = hazard.ignition_room.clone().unwrap_or_default();
                sim.snapshot.hazard = hazard;
                sim.log.push(0, Event::Ignition { room });
            }
            Err(HazardError::NoRooms) => {}
            Err(e) => return Err(e.into()),
        }
        sim.snapshot.alarm_active = true;
        sim.snapshot.alarm_tick = Some(0);
        sim.log.push(0, Event::Alarm);
        Ok(sim)
    }

    /// A quiet building: no fire, no alarm, no clock. Agents stay in their
    /// Normal phase; an external player can still walk around.
    pub fn new_quiet(map: Arc<GridMap>, config: SimConfig) -> Result<Self, EngineError> {
        Self::build(map, config)
    }

    fn build(map: Arc<GridMap>, config: SimConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let mut rngs = SimRngs::new(config.seed);
        let mut agents = Vec::with_capacity(config.npc_count + 1);
        let mut free_cells = map.spawn_cells.clone();
        if let Some(player) = &config.player {
            let start = map.start_cell();
            free_cells.retain(|c| *c != start);
            let mut p = AgentState::new(PLAYER_ID, player.profile, map.cell_center(start));
            p.is_player = true;
            p.known_exits = sample_known_exits(&map, player.profile.knowledge, &mut rngs.population);
            agents.push(p);
        }
        agents.extend(sample_population_on(
            &map,
            &free_cells,
            config.npc_count,
            1,
            &config.profile_distribution,
            &mut rngs.population,
        )?);
        let occupancy = match config.backend {
            Backend::CellularAutomaton => {
                let mut occ = Occupancy::new(&map);
                for a in &agents {
                    occ.claim(a.cell(&map), a.id);
                }
                Some(occ)
            }
            Backend::SocialForce => None,
        };
        let base_fields = FloorFields::build(&map, None);
        let ticks_per_decision = ((config.decision_interval / config.dt).round() as u64).max(1);
        let population = agents.len();
        Ok(Self {
            snapshot: Snapshot {
                tick: 0,
                agents,
                hazard: HazardField::clear(&map),
                alarm_active: false,
                alarm_tick: None,
                elapsed_since_alarm: 0.0,
                initial_population: population,
            },
            fields: base_fields.clone(),
            base_fields,
            fields_burning: 0,
            map,
            config,
            log: EventLog::default(),
            rngs,
            occupancy,
            player_input: DVec2::ZERO,
            ticks_per_decision,
            ended: None,
        })
    }

    pub fn map(&self) -> &Arc<GridMap> {
        &self.map
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.snapshot
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.ended
    }

    pub fn fields(&self) -> &FloorFields {
        &self.fields
    }

    /// Why the run should stop now, if it should.
    pub fn termination(&self) -> Option<Outcome> {
        if let Some(o) = self.ended {
            return Some(o);
        }
        if !self.snapshot.alarm_active {
            return None;
        }
        if self.snapshot.agents.iter().all(|a| a.phase.is_terminal()) {
            return Some(Outcome::AllResolved);
        }
        if self.snapshot.elapsed_since_alarm + 1e-9 >= self.config.max_sim_time {
            return Some(Outcome::Timeout);
        }
        None
    }

    /// Close the run, logging `SimEnded`. Idempotent.
    pub fn finish(&mut self, outcome: Outcome) {
        if self.ended.is_none() {
            self.ended = Some(outcome);
            self.log.push(self.snapshot.tick, Event::SimEnded { reason: outcome });
        }
    }

    /// Advance one tick.
    pub fn step(&mut self, inputs: &StepInputs) -> Result<&Snapshot, EngineError> {
        if let Some(o) = self.ended {
            return Err(EngineError::SimEnded(o));
        }
        let map = Arc::clone(&self.map);
        let dt = self.config.dt;
        self.snapshot.tick += 1;
        let tick = self.snapshot.tick;

        if let Some(dir) = inputs.player_direction {
            self.player_input = dir.clamp(DVec2::splat(-1.0), DVec2::splat(1.0));
        }

        if self.snapshot.alarm_active {
            let hazard = &mut self.snapshot.hazard;
            hazard.spread_fire(&map, &self.config.hazard, dt, &mut self.rngs.fire);
            hazard.diffuse_smoke(&map, &self.config.hazard, dt);
            if hazard.burning_count() >= self.fields_burning + self.config.field_rebuild_cells {
                self.fields = FloorFields::build(&map, Some(hazard.burning_mask()));
                self.fields_burning = hazard.burning_count();
            }
        }

        self.update_phases();

        let decision_tick = self
            .snapshot
            .alarm_tick
            .is_some_and(|a| tick >= a && (tick - a).is_multiple_of(self.ticks_per_decision));
        self.decide(decision_tick);
        if decision_tick {
            self.collaborate();
        }

        self.move_agents();
        self.apply_harm();
        self.detect_escapes();

        if let Some(a) = self.snapshot.alarm_tick {
            self.snapshot.elapsed_since_alarm = ticks_to_seconds(tick - a, dt);
        }
        debug_assert_eq!(self.snapshot.census().total(), self.snapshot.initial_population);
        Ok(&self.snapshot)
    }

    fn update_phases(&mut self) {
        let (alarm, now, dt) = (self.snapshot.alarm_tick, self.snapshot.tick, self.config.dt);
        for a in self.snapshot.agents.iter_mut() {
            if a.phase == Phase::Normal {
                *a = update_phase(a, &self.map, alarm, now, dt);
            }
        }
    }

    fn is_external(&self, a: &AgentState) -> bool {
        a.is_player
            && matches!(
                self.config.player,
                Some(PlayerConfig { control: PlayerControl::External, .. })
            )
    }

    fn decide(&mut self, decision_tick: bool) {
        let map = Arc::clone(&self.map);
        let prev = self.snapshot.agents.clone();
        let tick = self.snapshot.tick;
        for i in 0..prev.len() {
            let agent = &prev[i];
            if agent.phase != Phase::Evacuating || self.is_external(agent) {
                continue;
            }
            if agent.goal.is_some() && !decision_tick {
                continue;
            }
            let mut working = agent.clone();
            if decision_tick && self.discover_exits(&mut working) {
                working.goal = None;
            }
            let ctx = DecisionContext {
                map: &map,
                fields: &self.fields,
                smoke: &self.snapshot.hazard,
                neighbors: &prev,
                opacity_coeff: self.config.opacity_coeff,
                herding_radius: self.config.herding_radius,
            };
            let goal = decide_goal(&working, &ctx, &mut self.rngs.decisions);
            if agent.goal != Some(goal) {
                self.log.push(tick, Event::GoalChanged { id: agent.id, goal });
            }
            let slot = &mut self.snapshot.agents[i];
            slot.known_exits = working.known_exits;
            slot.goal = Some(goal);
        }
    }

    /// Learn exits with a cell in view. True if anything new was learned.
    fn discover_exits(&self, agent: &mut AgentState) -> bool {
        if agent.known_exits.len() == self.map.exits.len() {
            return false;
        }
        let here = agent.cell(&self.map);
        let mut learned = false;
        for exit in &self.map.exits {
            if agent.known_exits.contains(&exit.id) {
                continue;
            }
            let seen = exit.cells.iter().any(|c| {
                self.map.cell_center(*c).distance(agent.position) <= agent.profile.vision_range
                    && self
                        .map
                        .line_of_sight(here, *c, &self.snapshot.hazard, self.config.opacity_coeff)
                        .unwrap_or(false)
            });
            if seen {
                agent.known_exits.insert(exit.id);
                learned = true;
            }
        }
        learned
    }

    fn collaborate(&mut self) {
        for i in 0..self.snapshot.agents.len() {
            let a = &self.snapshot.agents[i];
            if a.is_player || a.phase != Phase::Evacuating || a.helping.is_some() || a.led_by.is_some() {
                continue;
            }
            let candidates: Vec<AgentState> = self
                .snapshot
                .agents
                .iter()
                .filter(|n| !n.is_player)
                .cloned()
                .collect();
            let next = apply_collaboration(a, &candidates, &mut self.rngs.collaboration);
            if let Some(partner) = next.helping {
                self.snapshot.agents[i].helping = Some(partner);
                if let Some(p) = self.snapshot.agents.iter_mut().find(|p| p.id == partner) {
                    p.led_by = Some(next.id);
                }
            }
        }
    }

    fn steering(&self, a: &AgentState) -> Steering {
        if a.phase.is_terminal() || a.mobility <= 0.0 {
            return Steering::Stay;
        }
        if self.is_external(a) {
            return if self.player_input == DVec2::ZERO {
                Steering::Stay
            } else {
                Steering::Direction(self.player_input)
            };
        }
        if a.phase != Phase::Evacuating {
            return Steering::Stay;
        }
        match a.goal {
            Some(Goal::Exit(id)) => {
                let here = a.cell(&self.map);
                let masked = self.fields.get(id).is_some_and(|f| f.distance(here).is_finite());
                if masked || self.base_fields.get(id).is_some() {
                    Steering::Field { exit: id, masked }
                } else {
                    Steering::Stay
                }
            }
            Some(g) => Steering::Direction(g.direction().unwrap_or(DVec2::ZERO)),
            None => Steering::Stay,
        }
    }

    fn field(&self, exit: u32, masked: bool) -> &FloorField {
        let set = if masked { &self.fields } else { &self.base_fields };
        set.get(exit).expect("exit field")
    }

    fn speed_of(&self, a: &AgentState, agents: &[AgentState]) -> f64 {
        if let Some(partner) = a.helping.and_then(|p| agents.iter().find(|x| x.id == p)) {
            return pair_speed(&a.profile, &partner.profile);
        }
        a.profile.max_speed
    }

    /// A heading that runs straight into a wall switches to a visible sign
    /// or else a fresh random direction.
    fn reroll_blocked_heading(&mut self, i: usize) {
        let a = &self.snapshot.agents[i];
        let Some(Goal::Wander(dir) | Goal::Sign(dir) | Goal::Herd(dir)) = a.goal else {
            return;
        };
        if self.is_external(a) || a.phase != Phase::Evacuating {
            return;
        }
        let here = a.cell(&self.map);
        let ahead = Cell::new(here.x + dir.x.round() as i32, here.y + dir.y.round() as i32);
        if self.map.is_walkable(ahead) {
            return;
        }
        let walkable = |d: DVec2| {
            self.map
                .is_walkable(Cell::new(here.x + d.x.round() as i32, here.y + d.y.round() as i32))
        };
        let sign = visible_sign_direction(
            &self.map,
            a.position,
            &self.snapshot.hazard,
            a.profile.vision_range,
            self.config.opacity_coeff,
        )
        .filter(|d| walkable(*d));
        let goal = match sign {
            Some(d) => Goal::Sign(d),
            None => Goal::Wander(random_walkable_direction(&self.map, here, &mut self.rngs.decisions)),
        };
        let id = a.id;
        self.snapshot.agents[i].goal = Some(goal);
        self.log.push(self.snapshot.tick, Event::GoalChanged { id, goal });
    }

    fn move_agents(&mut self) {
        for i in 0..self.snapshot.agents.len() {
            self.reroll_blocked_heading(i);
        }
        match self.config.backend {
            Backend::SocialForce => self.move_social_force(),
            Backend::CellularAutomaton => self.move_cellular(),
        }
    }

    fn move_social_force(&mut self) {
        let map = Arc::clone(&self.map);
        let prev = self.snapshot.agents.clone();
        let inside: Vec<AgentState> = prev
            .iter()
            .filter(|a| a.phase != Phase::Escaped)
            .cloned()
            .collect();
        let mut next = prev.clone();
        for (i, a) in prev.iter().enumerate() {
            if a.phase.is_terminal() || a.led_by.is_some() {
                continue;
            }
            let dir = match self.steering(a) {
                Steering::Field { exit, masked } => {
                    let f = self.field(exit, masked);
                    let here = a.cell(&map);
                    f.descent(&map, here)
                        .map(|c| (map.cell_center(c) - a.position).normalize_or_zero())
                        .unwrap_or(DVec2::ZERO)
                }
                Steering::Direction(d) => d.normalize_or_zero(),
                Steering::Stay => DVec2::ZERO,
            };
            let speed = self.speed_of(a, &prev);
            next[i] = step_social_force(a, &inside, &map, &self.config.force, self.config.dt, dir, speed);
        }
        for (i, a) in prev.iter().enumerate() {
            let Some(partner) = a.helping else { continue };
            if next[i].position == a.position {
                continue;
            }
            if let Some(j) = prev.iter().position(|x| x.id == partner) {
                next[j].position = a.position;
                next[j].velocity = next[i].velocity;
            }
        }
        self.snapshot.agents = next;
    }

    fn move_cellular(&mut self) {
        let map = Arc::clone(&self.map);
        let mut occ = self.occupancy.take().expect("CA backend has occupancy");
        let dt = self.config.dt;
        // Ascending id order resolves competing claims.
        let mut order: Vec<usize> = (0..self.snapshot.agents.len()).collect();
        order.sort_by_key(|&i| self.snapshot.agents[i].id);
        for i in order {
            let a = self.snapshot.agents[i].clone();
            if a.phase.is_terminal() || a.led_by.is_some() {
                continue;
            }
            let speed = self.speed_of(&a, &self.snapshot.agents);
            let steering = self.steering(&a);
            let fields = if matches!(steering, Steering::Field { masked: true, .. }) {
                &self.fields
            } else {
                &self.base_fields
            };
            let target = match steering {
                Steering::Field { exit, .. } => CaTarget::Field(fields.get(exit).expect("exit field")),
                Steering::Direction(d) => CaTarget::Direction(d.normalize_or_zero()),
                Steering::Stay => CaTarget::Stay,
            };
            let (moved, outcome) =
                step_cellular_automaton(&a, &mut occ, target, &map, &mut self.rngs.movement, dt, speed);
            if outcome.moved {
                if let Some(partner) = a.helping {
                    if let Some(j) = self.snapshot.agents.iter().position(|x| x.id == partner) {
                        let follower = &mut self.snapshot.agents[j];
                        let from = follower.cell(&map);
                        let to = a.cell(&map);
                        if occ.is_free(to) {
                            occ.release(from, follower.id);
                            occ.claim(to, follower.id);
                            follower.position = a.position;
                            follower.velocity = moved.velocity;
                        }
                    }
                }
            }
            self.snapshot.agents[i] = moved;
        }
        self.occupancy = Some(occ);
    }

    fn apply_harm(&mut self) {
        if !self.snapshot.alarm_active {
            return;
        }
        let tick = self.snapshot.tick;
        let mut dropped = Vec::new();
        for a in self.snapshot.agents.iter_mut() {
            if a.phase.is_terminal() {
                continue;
            }
            let next = self
                .snapshot
                .hazard
                .apply_harm(&self.map, a, &self.config.hazard, self.config.dt);
            if next.phase == Phase::Incapacitated {
                self.log.push(tick, Event::AgentIncapacitated { id: next.id });
                dropped.push((a.id, a.helping));
            }
            *a = next;
        }
        for (id, helping) in dropped {
            self.dissolve_pair(id, helping);
        }
    }

    fn detect_escapes(&mut self) {
        let (alarm, tick, dt) = (self.snapshot.alarm_tick, self.snapshot.tick, self.config.dt);
        let mut left = Vec::new();
        for a in self.snapshot.agents.iter_mut() {
            if a.phase != Phase::Evacuating {
                continue;
            }
            let next = update_phase(a, &self.map, alarm, tick, dt);
            if next.phase == Phase::Escaped {
                let time = next.egress_time.unwrap_or_default();
                self.log.push(tick, Event::AgentEscaped { id: next.id, time });
                if let Some(occ) = self.occupancy.as_mut() {
                    occ.release(next.cell(&self.map), next.id);
                }
                left.push((next.id, next.helping));
            }
            *a = next;
        }
        for (id, helping) in left {
            self.dissolve_pair(id, helping);
        }
    }

    fn dissolve_pair(&mut self, id: u32, helping: Option<u32>) {
        for a in self.snapshot.agents.iter_mut() {
            if a.id == id {
                a.helping = None;
                a.led_by = None;
            } else if Some(a.id) == helping || a.led_by == Some(id) {
                a.led_by = None;
            } else if a.helping == Some(id) {
                a.helping = None;
            }
        }
    }

    /// Player and NPC results as a session record.
    pub fn to_record(&self, session_id: impl Into<String>, group: Option<GroupLabel>) -> SessionRecord {
        let npcs: Vec<&AgentState> = self.snapshot.agents.iter().filter(|a| !a.is_player).collect();
        let npc_egress_times: Vec<f64> = npcs.iter().filter_map(|a| a.egress_time).collect();
        SessionRecord {
            session_id: session_id.into(),
            group,
            seed: self.config.seed,
            config_digest: self.config.digest(),
            player_egress_time: self.snapshot.player().and_then(|p| p.egress_time),
            npc_escaped: npc_egress_times.len(),
            npc_total: npcs.len(),
            npc_egress_times,
            events: self.log.clone(),
            outcome: self.ended.unwrap_or(Outcome::Aborted),
            repeat: false,
        }
    }
}

/// Step until every agent is resolved or time runs out.
pub fn run_to_completion(map: Arc<GridMap>, config: SimConfig) -> Result<SessionRecord, EngineError> {
    run_observed(map, config, |_| {}).map(|sim| sim.to_record(format!("run-{}", sim.config.seed), None))
}

/// Like [`run_to_completion`], calling `observe` with the initial snapshot
/// and after every tick. Returns the finished simulation.
pub fn run_observed(
    map: Arc<GridMap>,
    config: SimConfig,
    mut observe: impl FnMut(&Snapshot),
) -> Result<Simulation, EngineError> {
    let mut sim = Simulation::new(map, config)?;
    observe(&sim.snapshot);
    loop {
        if let Some(outcome) = sim.termination() {
            sim.finish(outcome);
            break;
        }
        sim.step(&StepInputs::default())?;
        observe(&sim.snapshot);
    }
    Ok(sim)
}

/// Per-agent phase traces, for checking the phase machine.
#[derive(Debug, Default)]
pub struct PhaseTracer {
    pub traces: BTreeMap<u32, Vec<Phase>>,
}

impl PhaseTracer {
    pub fn observe(&mut self, snap: &Snapshot) {
        for a in &snap.agents {
            let t = self.traces.entry(a.id).or_default();
            if t.last() != Some(&a.phase) {
                t.push(a.phase);
            }
        }
    }

    /// True when every trace follows Normal -> Evacuating -> terminal.
    pub fn all_valid(&self) -> bool {
        self.traces.values().all(|t| {
            t.first() == Some(&Phase::Normal)
                && t.windows(2).all(|w| w[0].can_become(w[1]))
        })
    }
}

impl From<agents::AgentProfile> for PlayerConfig {
    fn from(profile: agents::AgentProfile) -> Self {
        Self {
            profile,
            control: PlayerControl::Autonomous,
        }
    }
}
