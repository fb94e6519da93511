//! Cellular-automaton movement: one agent per cell, moving down a floor
//! field (or along a heading) as move credit accumulates.

use glam::DVec2;
use rand::Rng;

use super::AgentState;
use crate::navigation::FloorField;
use crate::scenario::{Cell, GridMap};

/// Cell claims, one agent id per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    width: usize,
    cells: Vec<Option<u32>>,
}

impl Occupancy {
    pub fn new(map: &GridMap) -> Self {
        Self {
            width: map.width,
            cells: vec![None; map.len()],
        }
    }

    fn idx(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    pub fn get(&self, c: Cell) -> Option<u32> {
        self.cells.get(self.idx(c)).copied().flatten()
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.get(c).is_none()
    }

    /// Claims `c` for `id`; false if someone else holds it.
    pub fn claim(&mut self, c: Cell, id: u32) -> bool {
        let i = self.idx(c);
        match self.cells[i] {
            Some(other) if other != id => false,
            _ => {
                self.cells[i] = Some(id);
                true
            }
        }
    }

    pub fn release(&mut self, c: Cell, id: u32) {
        let i = self.idx(c);
        if self.cells[i] == Some(id) {
            self.cells[i] = None;
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// What the agent is trying to do this step.
#[derive(Debug, Clone, Copy)]
pub enum CaTarget<'a> {
    /// Descend a floor field.
    Field(&'a FloorField),
    /// Walk along a heading.
    Direction(DVec2),
    Stay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CaOutcome {
    pub moved: bool,
    /// No walkable cell lies in the wanted direction.
    pub wall_contact: bool,
}

const CREDIT_EPS: f64 = 1e-9;

/// One CA update for `agent`, claiming its target cell in `occupancy`.
///
/// Credit grows by `max_speed * dt / cell_size`; a move costs its length in
/// cells (1 or sqrt 2). Among free candidates the lowest effective value
/// wins: the field distance, or minus the projection of the step onto the
/// heading. Equal values are broken uniformly with `rng`. A blocked agent
/// keeps at most one cell of credit.
pub fn step_cellular_automaton<R: Rng + ?Sized>(
    agent: &AgentState,
    occupancy: &mut Occupancy,
    target: CaTarget<'_>,
    map: &GridMap,
    rng: &mut R,
    dt: f64,
    max_speed: f64,
) -> (AgentState, CaOutcome) {
    let mut next = agent.clone();
    let speed = max_speed * agent.mobility;
    let mut outcome = CaOutcome::default();
    if speed <= 0.0 || matches!(target, CaTarget::Stay) {
        next.velocity = DVec2::ZERO;
        next.move_credit = next.move_credit.min(1.0);
        return (next, outcome);
    }
    next.move_credit += speed * dt / map.cell_size;
    if next.move_credit + CREDIT_EPS < 1.0 {
        return (next, outcome);
    }

    let here = agent.cell(map);
    let score = |n: Cell| -> Option<f64> {
        match target {
            CaTarget::Field(field) => {
                let d = field.distance(n);
                (d < field.distance(here)).then_some(d)
            }
            CaTarget::Direction(dir) => {
                let step = DVec2::new((n.x - here.x) as f64, (n.y - here.y) as f64).normalize();
                let proj = step.dot(dir);
                (proj > 1e-9).then_some(-proj)
            }
            CaTarget::Stay => None,
        }
    };

    let mut wanted = 0usize;
    let mut best: Vec<(Cell, f64)> = Vec::new();
    let mut best_score = f64::INFINITY;
    for (n, len) in map.walkable_neighbors(here, None) {
        let Some(s) = score(n) else { continue };
        wanted += 1;
        if !occupancy.is_free(n) {
            continue;
        }
        if s < best_score {
            best_score = s;
            best.clear();
            best.push((n, len));
        } else if s == best_score {
            best.push((n, len));
        }
    }
    outcome.wall_contact = wanted == 0;

    let choice = match best.len() {
        0 => None,
        1 => Some(best[0]),
        k => Some(best[rng.random_range(0..k)]),
    };
    match choice {
        Some((cell, len)) => {
            occupancy.release(here, agent.id);
            occupancy.claim(cell, agent.id);
            let step = DVec2::new((cell.x - here.x) as f64, (cell.y - here.y) as f64).normalize();
            next.position = map.cell_center(cell);
            next.velocity = step * speed;
            next.move_credit -= len;
            outcome.moved = true;
        }
        None => {
            next.velocity = DVec2::ZERO;
            next.move_credit = next.move_credit.min(1.0);
        }
    }
    (next, outcome)
}
