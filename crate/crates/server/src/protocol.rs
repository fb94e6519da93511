//! Wire messages. Every message is one JSON text frame tagged by `type`.

use evacsim_core::agents::Phase;
use evacsim_core::experiment::{GroupLabel, Outcome};
use evacsim_core::scenario::{CellKind, Compass, GridMap};
use evacsim_core::Cell;
use glam::DVec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub frequent_gamer: bool,
    pub building_knowledge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        questionnaire: Questionnaire,
        /// Stable participant identifier, used to flag repeat plays.
        #[serde(default)]
        player_id: Option<String>,
    },
    Start,
    Input(InputMessage),
    Bye,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputMessage {
    pub seq: u64,
    #[serde(rename = "move")]
    pub direction: [f64; 2],
    #[serde(default)]
    pub timestamp: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionPhase {
    Questionnaire,
    Practice,
    Live,
    Finished,
}

/// Static map layer. `cells` is the row-major grid from y = 0 upwards,
/// run-length encoded as `[symbol, count]` pairs. Signs are not part of
/// the static layer; they arrive in state messages once seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMessage {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub cells: Vec<(char, usize)>,
}

impl MapMessage {
    pub fn encode(map: &GridMap) -> Self {
        let mut cells: Vec<(char, usize)> = Vec::new();
        for kind in &map.cells {
            let sym = match kind {
                CellKind::Wall => '#',
                CellKind::Floor => '.',
                CellKind::Door => 'D',
                CellKind::Exit => 'E',
            };
            match cells.last_mut() {
                Some((s, n)) if *s == sym => *n += 1,
                _ => cells.push((sym, 1)),
            }
        }
        Self {
            width: map.width,
            height: map.height,
            cell_size: map.cell_size,
            cells,
        }
    }

    /// Expands the run-length encoding back to one symbol per cell.
    pub fn decode(&self) -> Vec<char> {
        self.cells
            .iter()
            .flat_map(|&(s, n)| std::iter::repeat_n(s, n))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerView {
    pub position: DVec2,
    pub velocity: DVec2,
    pub health: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub id: u32,
    pub position: DVec2,
    pub velocity: DVec2,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeView {
    pub cell: Cell,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignView {
    pub cell: Cell,
    pub direction: Compass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub tick: u64,
    pub phase: SessionPhase,
    pub player: PlayerView,
    pub visible_agents: Vec<AgentView>,
    pub visible_fire_cells: Vec<Cell>,
    pub visible_smoke: Vec<SmokeView>,
    pub visible_signs: Vec<SignView>,
    pub alarm_active: bool,
    pub elapsed_since_alarm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        session_id: String,
        group: GroupLabel,
        map: MapMessage,
    },
    State(StateMessage),
    End {
        outcome: Outcome,
        egress_time: Option<f64>,
        group: GroupLabel,
    },
    Error {
        message: String,
    },
}
