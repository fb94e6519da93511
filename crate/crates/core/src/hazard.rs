//! Fire ignition and spread, smoke diffusion, and harm to occupants.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentState, Phase};
use crate::scenario::{Cell, CellKind, GridMap, ORTHOGONAL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HazardError {
    #[error("no candidate room for ignition (non-spawn rooms with walkable cells)")]
    NoRooms,
    #[error("invalid hazard parameter {name}: {value}")]
    InvalidParam { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardParams {
    /// Per-second ignition probability for each walkable orthogonal neighbour.
    pub p_spread: f64,
    /// Density per second added on burning cells.
    pub smoke_emission: f64,
    /// Dimensionless per-step mixing coefficient.
    pub smoke_diffusion: f64,
    pub harm_threshold: f64,
    /// Health per second lost above `harm_threshold`.
    pub harm_rate: f64,
    /// Health per second lost on a burning cell.
    pub fire_harm_rate: f64,
}

impl Default for HazardParams {
    fn default() -> Self {
        Self {
            p_spread: 0.05,
            smoke_emission: 0.1,
            smoke_diffusion: 0.2,
            harm_threshold: 0.6,
            harm_rate: 5.0,
            fire_harm_rate: 50.0,
        }
    }
}

impl HazardParams {
    pub fn validate(&self) -> Result<(), HazardError> {
        let checks = [
            ("p_spread", self.p_spread, 1.0),
            ("smoke_emission", self.smoke_emission, f64::INFINITY),
            ("smoke_diffusion", self.smoke_diffusion, 1.0),
            ("harm_threshold", self.harm_threshold, f64::INFINITY),
            ("harm_rate", self.harm_rate, f64::INFINITY),
            ("fire_harm_rate", self.fire_harm_rate, f64::INFINITY),
        ];
        for (name, value, max) in checks {
            if !(value >= 0.0 && value <= max) {
                return Err(HazardError::InvalidParam { name, value });
            }
        }
        Ok(())
    }
}

/// Converts a per-second probability to a per-step one so outcomes do not
/// depend on the tick length.
pub fn per_step_probability(p_per_second: f64, dt: f64) -> f64 {
    1.0 - (1.0 - p_per_second).powf(dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardField {
    width: usize,
    burning: Vec<bool>,
    /// Burning cell indices in ignition order.
    burning_order: Vec<usize>,
    smoke: Vec<f64>,
    pub ignition_room: Option<String>,
    pub ignition_tick: Option<u64>,
}

impl HazardField {
    /// No fire, no smoke.
    pub fn clear(map: &GridMap) -> Self {
        Self {
            width: map.width,
            burning: vec![false; map.len()],
            burning_order: Vec::new(),
            smoke: vec![0.0; map.len()],
            ignition_room: None,
            ignition_tick: None,
        }
    }

    /// Uniform smoke over every walkable cell.
    pub fn with_uniform_smoke(map: &GridMap, density: f64) -> Self {
        let mut field = Self::clear(map);
        for (i, kind) in map.cells.iter().enumerate() {
            if kind.is_walkable() {
                field.smoke[i] = density.clamp(0.0, 1.0);
            }
        }
        field
    }

    fn idx(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    pub fn is_burning(&self, map: &GridMap, c: Cell) -> bool {
        map.in_bounds(c) && self.burning[self.idx(c)]
    }

    pub fn burning_mask(&self) -> &[bool] {
        &self.burning
    }

    pub fn burning_count(&self) -> usize {
        self.burning_order.len()
    }

    /// Burning cells in the order they caught fire.
    pub fn burning_cells<'a>(&'a self, map: &'a GridMap) -> impl Iterator<Item = Cell> + 'a {
        self.burning_order.iter().map(|&i| map.cell_at(i))
    }

    pub fn smoke_at(&self, map: &GridMap, c: Cell) -> f64 {
        if map.in_bounds(c) {
            self.smoke.get(self.idx(c)).copied().unwrap_or(0.0)
        } else {
            0.0
        }
    }

    pub fn smoke(&self) -> &[f64] {
        &self.smoke
    }

    pub fn total_smoke(&self) -> f64 {
        self.smoke.iter().sum()
    }

    /// Sets a cell burning. Walls and exits never burn.
    pub fn ignite(&mut self, map: &GridMap, c: Cell) -> bool {
        if !map.in_bounds(c) || !can_burn(map.kind(c)) {
            return false;
        }
        let i = self.idx(c);
        if self.burning[i] {
            return false;
        }
        self.burning[i] = true;
        self.burning_order.push(i);
        true
    }

    pub fn set_smoke(&mut self, map: &GridMap, c: Cell, density: f64) {
        if map.is_walkable(c) {
            let i = self.idx(c);
            self.smoke[i] = density.clamp(0.0, 1.0);
        }
    }

    /// Fire spread over one step of `dt` seconds.
    pub fn step_fire<R: Rng + ?Sized>(
        &self,
        map: &GridMap,
        params: &HazardParams,
        dt: f64,
        rng: &mut R,
    ) -> HazardField {
        let mut next = self.clone();
        next.spread_fire(map, params, dt, rng);
        next
    }

    pub(crate) fn spread_fire<R: Rng + ?Sized>(
        &mut self,
        map: &GridMap,
        params: &HazardParams,
        dt: f64,
        rng: &mut R,
    ) {
        if params.p_spread <= 0.0 || self.burning_order.is_empty() {
            return;
        }
        let q = per_step_probability(params.p_spread, dt);
        let mut candidates: Vec<usize> = Vec::new();
        for &i in &self.burning_order {
            let c = map.cell_at(i);
            for (dx, dy) in ORTHOGONAL {
                let n = c.offset(dx, dy);
                if map.in_bounds(n) && can_burn(map.kind(n)) && !self.burning[self.idx(n)] {
                    candidates.push(self.idx(n));
                }
            }
        }
        // One draw per candidate, ascending index, against the pre-step set.
        candidates.sort_unstable();
        candidates.dedup();
        for i in candidates {
            if q >= 1.0 || rng.random::<f64>() < q {
                self.burning[i] = true;
                self.burning_order.push(i);
            }
        }
    }

    /// Smoke diffusion and emission over one step.
    pub fn step_smoke(&self, map: &GridMap, params: &HazardParams, dt: f64) -> HazardField {
        let mut next = self.clone();
        next.diffuse_smoke(map, params, dt);
        next
    }

    /// Conservative neighbour exchange: each walkable orthogonal pair swaps
    /// `smoke_diffusion / 4` of its density difference, so in the interior a
    /// cell moves `smoke_diffusion` of the way towards its neighbour mean and
    /// total mass is preserved when nothing is emitted.
    pub(crate) fn diffuse_smoke(&mut self, map: &GridMap, params: &HazardParams, dt: f64) {
        let d = params.smoke_diffusion / 4.0;
        let emit = params.smoke_emission * dt;
        if self.burning_order.is_empty() && self.smoke.iter().all(|&s| s == 0.0) {
            return;
        }
        let w = map.width;
        let old = &self.smoke;
        let mut new = old.clone();
        if d > 0.0 {
            for i in 0..old.len() {
                if !map.cells[i].is_walkable() {
                    continue;
                }
                let x = i % w;
                let mut flux = 0.0;
                if x + 1 < w && map.cells[i + 1].is_walkable() {
                    flux += old[i + 1] - old[i];
                }
                if x > 0 && map.cells[i - 1].is_walkable() {
                    flux += old[i - 1] - old[i];
                }
                if i + w < old.len() && map.cells[i + w].is_walkable() {
                    flux += old[i + w] - old[i];
                }
                if i >= w && map.cells[i - w].is_walkable() {
                    flux += old[i - w] - old[i];
                }
                new[i] = old[i] + d * flux;
            }
        }
        if emit > 0.0 {
            for &i in &self.burning_order {
                new[i] += emit;
            }
        }
        for (i, v) in new.iter_mut().enumerate() {
            *v = if map.cells[i].is_walkable() {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        self.smoke = new;
    }

    /// Health loss from smoke and fire for one agent over `dt` seconds.
    ///
    /// A `Normal` agent that gets hurt starts evacuating instead of being
    /// incapacitated in the same step; incapacitation always follows an
    /// `Evacuating` phase.
    pub fn apply_harm(
        &self,
        map: &GridMap,
        agent: &AgentState,
        params: &HazardParams,
        dt: f64,
    ) -> AgentState {
        let mut next = agent.clone();
        if agent.phase.is_terminal() {
            return next;
        }
        let cell = map.cell_of(agent.position);
        let mut loss = 0.0;
        if self.smoke_at(map, cell) > params.harm_threshold {
            loss += params.harm_rate * dt;
        }
        if self.is_burning(map, cell) {
            loss += params.fire_harm_rate * dt;
        }
        next.health = (next.health - loss).max(0.0);
        match next.phase {
            Phase::Normal if loss > 0.0 => next.phase = Phase::Evacuating,
            Phase::Evacuating if next.health <= 0.0 => next.incapacitate(),
            _ => {}
        }
        next
    }
}

fn can_burn(kind: CellKind) -> bool {
    matches!(kind, CellKind::Floor | CellKind::Door)
}

/// Start a fire in one uniformly chosen non-spawn room at `tick`.
pub fn ignite_random_room<R: Rng + ?Sized>(
    map: &GridMap,
    rng: &mut R,
    tick: u64,
) -> Result<HazardField, HazardError> {
    let candidates: Vec<_> = map
        .rooms
        .iter()
        .filter(|r| !r.spawn)
        .filter(|r| r.cells().any(|c| map.in_bounds(c) && can_burn(map.kind(c))))
        .collect();
    let room = candidates.choose(rng).ok_or(HazardError::NoRooms)?;
    let cells: Vec<Cell> = room
        .cells()
        .filter(|c| map.in_bounds(*c) && can_burn(map.kind(*c)))
        .collect();
    let origin = *cells.choose(rng).expect("room has burnable cells");
    let mut field = HazardField::clear(map);
    field.ignite(map, origin);
    field.ignition_room = Some(room.name.clone());
    field.ignition_tick = Some(tick);
    Ok(field)
}
