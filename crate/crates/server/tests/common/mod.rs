#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use evacsim_core::agents::AgentProfile;
use evacsim_core::hazard::HazardParams;
use evacsim_core::navigation::{compute_floor_field, FloorField};
use evacsim_core::{parse_blueprint, GridMap, SimConfig};
use evacsim_server::{RecordLog, SessionManager, SessionSettings};
use glam::DVec2;

/// A start room opening onto a hall with a two-cell exit on the east wall.
pub const OFFICE: &str = "\
############
#....#.....#
#....D.....#
#.P..D..P..E
#....#.....E
############
---
cell_size = 0.5
start_room = \"start\"

[[rooms]]
name = \"start\"
min = [1, 1]
max = [4, 4]
spawn = true

[[rooms]]
name = \"hall\"
min = [6, 1]
max = [10, 4]
";

pub fn office() -> Arc<GridMap> {
    Arc::new(parse_blueprint(OFFICE).unwrap())
}

pub fn settings(map: Arc<GridMap>) -> SessionSettings {
    SessionSettings {
        map,
        config: SimConfig {
            seed: 3,
            npc_count: 1,
            hazard: HazardParams {
                p_spread: 0.0,
                smoke_emission: 0.0,
                ..Default::default()
            },
            ..Default::default()
        },
        player_profile: AgentProfile::default(),
    }
}

pub fn manager(log: Option<RecordLog>) -> SessionManager {
    SessionManager::new(settings(office()), log)
}

/// Unit heading from `pos` towards the next cell down the exit field.
pub struct Pilot {
    map: Arc<GridMap>,
    field: FloorField,
}

impl Pilot {
    pub fn new(map: Arc<GridMap>) -> Self {
        let exits: BTreeSet<u32> = map.exit_ids();
        let field = compute_floor_field(&map, &exits).unwrap();
        Self { map, field }
    }

    pub fn heading(&self, pos: DVec2) -> DVec2 {
        let here = self.map.cell_of(pos);
        match self.field.descent(&self.map, here) {
            Some(next) => (self.map.cell_center(next) - pos).normalize_or_zero(),
            None => DVec2::ZERO,
        }
    }
}
