//! Continuous social-force movement.
//!
//! Each agent relaxes towards its desired velocity over `tau` seconds and is
//! pushed away from other bodies and walls by an exponential repulsion
//! `A * exp((r_sum - d) / B)` along the separating normal. Body compression
//! and sliding friction are not modelled.

use glam::DVec2;
use serde::{Deserialize, Serialize};

use super::{AgentState, Phase};
use crate::scenario::{Cell, GridMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceParams {
    /// Repulsion strength, N.
    pub a: f64,
    /// Repulsion range, m.
    pub b: f64,
    /// Relaxation time, s.
    pub tau: f64,
    /// Interactions beyond this gap (m) are ignored.
    pub cutoff: f64,
}

impl Default for ForceParams {
    fn default() -> Self {
        Self {
            a: 2000.0,
            b: 0.08,
            tau: 0.5,
            cutoff: 1.5,
        }
    }
}

/// `(desired - velocity) / tau`.
pub fn driving_acceleration(desired: DVec2, velocity: DVec2, params: &ForceParams) -> DVec2 {
    (desired - velocity) / params.tau
}

/// Force on body `i` from body `j`, in newtons.
pub fn pair_repulsion(pos_i: DVec2, r_i: f64, pos_j: DVec2, r_j: f64, params: &ForceParams) -> DVec2 {
    let diff = pos_i - pos_j;
    let d = diff.length();
    if d <= 0.0 || d - (r_i + r_j) > params.cutoff {
        return DVec2::ZERO;
    }
    let n = diff / d;
    params.a * ((r_i + r_j - d) / params.b).exp() * n
}

/// Closest point of a wall cell's square to `pos`.
fn closest_point_on_cell(map: &GridMap, c: Cell, pos: DVec2) -> DVec2 {
    let lo = DVec2::new(c.x as f64, c.y as f64) * map.cell_size;
    let hi = lo + DVec2::splat(map.cell_size);
    pos.clamp(lo, hi)
}

/// True if `p`, the closest point of wall cell `c` to `pos`, lies on an edge
/// shared with another wall cell. Such points are inside the wall mass and
/// the neighbouring cell already accounts for that face.
fn on_internal_edge(map: &GridMap, c: Cell, pos: DVec2, p: DVec2) -> bool {
    (pos.x < p.x && !map.is_walkable(c.offset(-1, 0)))
        || (pos.x > p.x && !map.is_walkable(c.offset(1, 0)))
        || (pos.y < p.y && !map.is_walkable(c.offset(0, -1)))
        || (pos.y > p.y && !map.is_walkable(c.offset(0, 1)))
}

/// Sum of repulsions from wall faces near `pos`, in newtons. Cells outside
/// the map count as walls.
pub fn wall_repulsion(map: &GridMap, pos: DVec2, radius: f64, params: &ForceParams) -> DVec2 {
    let reach = ((radius + params.cutoff) / map.cell_size).ceil() as i32;
    let here = map.cell_of(pos);
    let mut total = DVec2::ZERO;
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let c = here.offset(dx, dy);
            if map.is_walkable(c) {
                continue;
            }
            let p = closest_point_on_cell(map, c, pos);
            if on_internal_edge(map, c, pos, p) {
                continue;
            }
            let diff = pos - p;
            let d = diff.length();
            if d <= 0.0 || d - radius > params.cutoff {
                continue;
            }
            total += params.a * ((radius - d) / params.b).exp() * (diff / d);
        }
    }
    total
}

/// Total acceleration on `agent`.
pub fn acceleration(
    agent: &AgentState,
    neighbors: &[AgentState],
    map: &GridMap,
    params: &ForceParams,
    desired: DVec2,
) -> DVec2 {
    let r = agent.profile.body_radius;
    let mut force = DVec2::ZERO;
    for n in neighbors {
        if n.id == agent.id || n.phase == Phase::Escaped {
            continue;
        }
        force += pair_repulsion(agent.position, r, n.position, n.profile.body_radius, params);
    }
    force += wall_repulsion(map, agent.position, r, params);
    driving_acceleration(desired, agent.velocity, params) + force / agent.profile.mass
}

fn passable(map: &GridMap, from: Cell, to: Cell) -> bool {
    if !map.is_walkable(to) {
        return false;
    }
    if from.x != to.x && from.y != to.y {
        return map.is_walkable(Cell::new(to.x, from.y)) && map.is_walkable(Cell::new(from.x, to.y));
    }
    true
}

/// One explicit Euler step. `direction` is the unit heading the agent wants
/// to walk (zero to stand still) and `max_speed` its current speed cap.
///
/// A move that would put the centre inside a wall is retried along each
/// axis alone; the blocked velocity component is dropped.
pub fn step_social_force(
    agent: &AgentState,
    neighbors: &[AgentState],
    map: &GridMap,
    params: &ForceParams,
    dt: f64,
    direction: DVec2,
    max_speed: f64,
) -> AgentState {
    let mut next = agent.clone();
    let cap = max_speed * agent.mobility;
    if cap <= 0.0 {
        next.velocity = DVec2::ZERO;
        return next;
    }
    let desired = direction.normalize_or_zero() * cap;
    let acc = acceleration(agent, neighbors, map, params, desired);
    let mut v = agent.velocity + acc * dt;
    let speed = v.length();
    if speed > cap {
        v *= cap / speed;
    }
    let from = map.cell_of(agent.position);
    let target = agent.position + v * dt;
    if passable(map, from, map.cell_of(target)) {
        next.position = target;
        next.velocity = v;
        return next;
    }
    let along_x = DVec2::new(target.x, agent.position.y);
    let along_y = DVec2::new(agent.position.x, target.y);
    if v.x != 0.0 && passable(map, from, map.cell_of(along_x)) {
        next.position = along_x;
        next.velocity = DVec2::new(v.x, 0.0);
    } else if v.y != 0.0 && passable(map, from, map.cell_of(along_y)) {
        next.position = along_y;
        next.velocity = DVec2::new(0.0, v.y);
    } else {
        next.velocity = DVec2::ZERO;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentProfile;
    use crate::scenario::parse_blueprint;

    fn open_hall() -> GridMap {
        let row = format!("#{}#\n", ".".repeat(30));
        let mut text = format!("{}\n", "#".repeat(32));
        for _ in 0..14 {
            text.push_str(&row);
        }
        text.push_str(&format!("#{}P{}E\n", ".".repeat(14), ".".repeat(15)));
        text.push_str(&"#".repeat(32));
        parse_blueprint(&text).unwrap()
    }

    #[test]
    fn no_driving_at_desired_velocity() {
        let params = ForceParams::default();
        let v = DVec2::new(0.8, -0.6);
        assert_eq!(driving_acceleration(v, v, &params), DVec2::ZERO);

        let map = open_hall();
        let mut a = AgentState::new(0, AgentProfile::default(), DVec2::new(7.5, 4.0));
        a.velocity = DVec2::new(1.3, 0.0);
        let acc = acceleration(&a, &[], &map, &params, DVec2::new(1.3, 0.0));
        assert!(acc.length() < 1e-12, "{acc}");
    }

    #[test]
    fn contact_repulsion_is_a() {
        let p = ForceParams::default();
        let f = pair_repulsion(DVec2::new(1.0, 1.0), 0.25, DVec2::new(0.5, 1.0), 0.25, &p);
        assert_eq!(f, DVec2::new(p.a, 0.0));
    }

    #[test]
    fn gap_of_b_scales_by_inverse_e() {
        let p = ForceParams::default();
        let near = pair_repulsion(DVec2::new(1.0, 0.0), 0.25, DVec2::ZERO, 0.25, &p).length();
        let far = pair_repulsion(DVec2::new(1.0 + p.b, 0.0), 0.25, DVec2::ZERO, 0.25, &p).length();
        assert!((far / near - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn repulsion_is_antisymmetric() {
        let p = ForceParams::default();
        let (a, b) = (DVec2::new(0.3, 0.7), DVec2::new(0.9, 0.2));
        let fab = pair_repulsion(a, 0.25, b, 0.3, &p);
        let fba = pair_repulsion(b, 0.3, a, 0.25, &p);
        assert!((fab + fba).length() < 1e-9);
    }

    #[test]
    fn walls_push_inward() {
        let map = open_hall();
        let p = ForceParams::default();
        // 0.3 m from the west wall (x = 0.5), mid-height.
        let f = wall_repulsion(&map, DVec2::new(0.8, 4.0), 0.25, &p);
        assert!(f.x > 0.0 && f.y.abs() < 1e-9 * f.x.abs().max(1.0), "{f}");
    }

    #[test]
    fn flat_wall_has_no_tangential_push() {
        let map = open_hall();
        let p = ForceParams::default();
        for x in [5.05, 5.2, 5.35, 5.49] {
            let f = wall_repulsion(&map, DVec2::new(x, 0.8), 0.25, &p);
            assert!(f.y > 0.0 && f.x.abs() < 1e-9, "{f}");
        }
    }

    #[test]
    fn speed_is_capped() {
        let map = open_hall();
        let a = AgentState::new(0, AgentProfile::default(), DVec2::new(7.5, 4.0));
        let mut s = a;
        for _ in 0..200 {
            s = step_social_force(&s, &[], &map, &ForceParams::default(), 0.05, DVec2::X, 1.0);
            assert!(s.velocity.length() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn never_enters_walls() {
        let map = open_hall();
        let mut a = AgentState::new(0, AgentProfile::default(), DVec2::new(1.0, 4.0));
        a.velocity = DVec2::new(-1.5, 0.0);
        for _ in 0..100 {
            a = step_social_force(&a, &[], &map, &ForceParams::default(), 0.05, DVec2::NEG_X, 1.5);
            assert!(map.is_walkable(map.cell_of(a.position)));
        }
    }

    #[test]
    fn incapacitated_agents_do_not_move() {
        let map = open_hall();
        let mut a = AgentState::new(0, AgentProfile::default(), DVec2::new(5.0, 4.0));
        a.incapacitate();
        let b = step_social_force(&a, &[], &map, &ForceParams::default(), 0.05, DVec2::X, 1.3);
        assert_eq!(b.position, a.position);
    }
}
