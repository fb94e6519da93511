//! Floor fields, sign guidance and herding.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use glam::DVec2;
use thiserror::Error;

use crate::agents::{AgentState, Phase};
use crate::hazard::HazardField;
use crate::scenario::{Cell, GridMap};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NavError {
    #[error("unknown exit id {0}")]
    UnknownExit(u32),
    #[error("exit set is empty")]
    EmptyExitSet,
}

/// Geodesic distance in meters from every cell to the nearest goal cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorField {
    width: usize,
    distances: Vec<f64>,
    pub exit_set: BTreeSet<u32>,
}

impl FloorField {
    /// `+inf` for walls and unreachable cells.
    pub fn distance(&self, c: Cell) -> f64 {
        if c.x < 0 || c.y < 0 || c.x as usize >= self.width {
            return f64::INFINITY;
        }
        self.distances
            .get(c.y as usize * self.width + c.x as usize)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// Lowest-valued walkable neighbour strictly below `c`, if any.
    pub fn descent(&self, map: &GridMap, c: Cell) -> Option<Cell> {
        let here = self.distance(c);
        map.walkable_neighbors(c, None)
            .map(|(n, _)| (n, self.distance(n)))
            .filter(|(_, d)| *d < here)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(n, _)| n)
    }
}

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    index: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra from the cells of `exit_ids`.
pub fn compute_floor_field(
    map: &GridMap,
    exit_ids: &BTreeSet<u32>,
) -> Result<FloorField, NavError> {
    compute_floor_field_avoiding(map, exit_ids, None)
}

/// As [`compute_floor_field`], treating cells flagged in `blocked` (by
/// index, e.g. burning cells) as walls.
pub fn compute_floor_field_avoiding(
    map: &GridMap,
    exit_ids: &BTreeSet<u32>,
    blocked: Option<&[bool]>,
) -> Result<FloorField, NavError> {
    if exit_ids.is_empty() {
        return Err(NavError::EmptyExitSet);
    }
    let mut distances = vec![f64::INFINITY; map.len()];
    let mut heap = BinaryHeap::new();
    for &id in exit_ids {
        let exit = map.exit(id).ok_or(NavError::UnknownExit(id))?;
        for &c in &exit.cells {
            let i = map.index(c);
            if blocked.is_some_and(|b| b[i]) {
                continue;
            }
            distances[i] = 0.0;
            heap.push(Frontier { dist: 0.0, index: i });
        }
    }
    let cs = map.cell_size;
    while let Some(Frontier { dist, index }) = heap.pop() {
        if dist > distances[index] {
            continue;
        }
        let c = map.cell_at(index);
        for (n, steps) in map.walkable_neighbors(c, blocked) {
            let j = map.index(n);
            let nd = dist + steps * cs;
            if nd < distances[j] {
                distances[j] = nd;
                heap.push(Frontier { dist: nd, index: j });
            }
        }
    }
    Ok(FloorField {
        width: map.width,
        distances,
        exit_set: exit_ids.clone(),
    })
}

/// One field per exit, keyed by exit id.
#[derive(Debug, Clone, Default)]
pub struct FloorFields {
    pub per_exit: BTreeMap<u32, FloorField>,
}

impl FloorFields {
    pub fn build(map: &GridMap, blocked: Option<&[bool]>) -> Self {
        let per_exit = map
            .exits
            .iter()
            .map(|e| {
                let field = compute_floor_field_avoiding(map, &BTreeSet::from([e.id]), blocked)
                    .expect("exit ids come from the map");
                (e.id, field)
            })
            .collect();
        Self { per_exit }
    }

    pub fn get(&self, exit_id: u32) -> Option<&FloorField> {
        self.per_exit.get(&exit_id)
    }

    /// Nearest exit among `known`, by distance from `c`. Unreachable exits
    /// are skipped; ties go to the lower id.
    pub fn nearest_known(&self, known: &BTreeSet<u32>, c: Cell) -> Option<(u32, f64)> {
        known
            .iter()
            .filter_map(|id| self.per_exit.get(id).map(|f| (*id, f.distance(c))))
            .filter(|(_, d)| d.is_finite())
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Direction of the nearest sign the agent can see, if any.
///
/// A sign counts when it lies within `min(vision_range, sign range)` and the
/// line of sight to it is clear of walls and thick smoke.
pub fn visible_sign_direction(
    map: &GridMap,
    agent_pos: DVec2,
    smoke: &HazardField,
    vision_range: f64,
    opacity_coeff: f64,
) -> Option<DVec2> {
    let here = map.cell_of(agent_pos);
    if !map.in_bounds(here) {
        return None;
    }
    let mut best: Option<(f64, DVec2)> = None;
    for sign in &map.signs {
        let dist = agent_pos.distance(map.cell_center(sign.cell));
        if dist > vision_range.min(sign.visibility_range) {
            continue;
        }
        if best.is_some_and(|(d, _)| d <= dist) {
            continue;
        }
        if map
            .line_of_sight(here, sign.cell, smoke, opacity_coeff)
            .unwrap_or(false)
        {
            best = Some((dist, sign.pointed_direction.unit()));
        }
    }
    best.map(|(_, dir)| dir)
}

/// Normalised mean heading of evacuating neighbours within `radius`.
pub fn herding_direction(
    agent: &AgentState,
    neighbors: &[AgentState],
    radius: f64,
) -> Option<DVec2> {
    let mut sum = DVec2::ZERO;
    let mut any = false;
    for n in neighbors {
        if n.id == agent.id || n.phase != Phase::Evacuating {
            continue;
        }
        if n.position.distance(agent.position) > radius {
            continue;
        }
        if let Some(h) = n.velocity.try_normalize() {
            sum += h;
            any = true;
        }
    }
    if !any || sum.length() < 1e-9 {
        return None;
    }
    Some(sum.normalize())
}
