//! Interactive sessions: questionnaire, confined practice, the timed live
//! run, and the frozen record at the end.

use std::collections::{HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use evacsim_core::agents::{AgentProfile, AgentState, Phase};
use evacsim_core::engine::{EngineError, PlayerConfig, PlayerControl, StepInputs};
use evacsim_core::experiment::{classify_group, records_to_csv, GroupLabel, Outcome, SessionRecord};
use evacsim_core::hazard::HazardField;
use evacsim_core::{Cell, GridMap, SimConfig, Simulation};
use glam::DVec2;
use thiserror::Error;

use crate::protocol::{
    AgentView, InputMessage, PlayerView, Questionnaire, SessionPhase, SignView, SmokeView, StateMessage,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session is in phase {actual:?}, expected {expected}")]
    WrongPhase { actual: SessionPhase, expected: &'static str },
    #[error("stale input seq {seq} (last {last})")]
    StaleInput { seq: u64, last: u64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("session log {path}: {message}")]
    Log { path: String, message: String },
}

/// Whether `viewer` at `from` can see `target`: within `vision` meters
/// (centre to centre) and with a clear line of sight.
pub fn is_visible(map: &GridMap, hazard: &HazardField, from: DVec2, vision: f64, opacity: f64, target: Cell) -> bool {
    let here = map.cell_of(from);
    if here == target {
        return true;
    }
    if from.distance(map.cell_center(target)) > vision {
        return false;
    }
    map.line_of_sight(here, target, hazard, opacity).unwrap_or(false)
}

/// Everything the player can currently perceive.
pub fn build_state(sim: &Simulation, phase: SessionPhase) -> Option<StateMessage> {
    let snap = sim.snapshot();
    let map = sim.map();
    let player = snap.player()?;
    let vision = player.profile.vision_range;
    let opacity = sim.config().opacity_coeff;
    let sees = |c: Cell| is_visible(map, &snap.hazard, player.position, vision, opacity, c);

    let visible_agents = snap
        .agents
        .iter()
        .filter(|a| !a.is_player && a.phase != Phase::Escaped && sees(a.cell(map)))
        .map(|a| AgentView {
            id: a.id,
            position: a.position,
            velocity: a.velocity,
            phase: a.phase,
        })
        .collect();
    let visible_fire_cells = snap.hazard.burning_cells(map).filter(|c| sees(*c)).collect();
    let visible_smoke = map
        .all_cells()
        .filter(|c| snap.hazard.smoke_at(map, *c) > 0.0 && sees(*c))
        .map(|cell| SmokeView {
            cell,
            density: snap.hazard.smoke_at(map, cell),
        })
        .collect();
    let visible_signs = map
        .signs
        .iter()
        .filter(|s| {
            player.position.distance(map.cell_center(s.cell)) <= s.visibility_range && sees(s.cell)
        })
        .map(|s| SignView {
            cell: s.cell,
            direction: s.pointed_direction,
        })
        .collect();
    Some(StateMessage {
        tick: snap.tick,
        phase,
        player: PlayerView {
            position: player.position,
            velocity: player.velocity,
            health: player.health,
            phase: player.phase,
        },
        visible_agents,
        visible_fire_cells,
        visible_smoke,
        visible_signs,
        alarm_active: snap.alarm_active,
        elapsed_since_alarm: snap.elapsed_since_alarm,
    })
}

/// Number of fog-of-war violations in `msg` against the simulation state it
/// was built from.
pub fn count_violations(sim: &Simulation, msg: &StateMessage) -> usize {
    let snap = sim.snapshot();
    let map = sim.map();
    let Some(player) = snap.player() else {
        return usize::MAX;
    };
    let vision = player.profile.vision_range;
    let opacity = sim.config().opacity_coeff;
    let sees = |c: Cell| is_visible(map, &snap.hazard, player.position, vision, opacity, c);
    let agents = msg
        .visible_agents
        .iter()
        .filter(|v| !snap.agent(v.id).is_some_and(|a| a.position == v.position && sees(a.cell(map))))
        .count();
    let fire = msg
        .visible_fire_cells
        .iter()
        .filter(|c| !(snap.hazard.is_burning(map, **c) && sees(**c)))
        .count();
    let smoke = msg.visible_smoke.iter().filter(|s| !sees(s.cell)).count();
    let signs = msg
        .visible_signs
        .iter()
        .filter(|s| {
            !map.signs.iter().any(|d| {
                d.cell == s.cell && player.position.distance(map.cell_center(d.cell)) <= d.visibility_range
            }) || !sees(s.cell)
        })
        .count();
    agents + fire + smoke + signs
}

/// Appends finished records to a CSV log, writing the header once, and
/// stores each full record as JSON beside it.
#[derive(Debug)]
pub struct RecordLog {
    path: PathBuf,
    lock: Mutex<()>,
}

impl RecordLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &std::path::Path {
        &self.path
    }

    pub fn append(&self, record: &SessionRecord) -> Result<(), SessionError> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let err = |e: std::io::Error| SessionError::Log {
            path: self.path.display().to_string(),
            message: e.to_string(),
        };
        let fresh = std::fs::metadata(&self.path).map(|m| m.len() == 0).unwrap_or(true);
        let text = records_to_csv(std::slice::from_ref(record));
        let body = if fresh { text.as_str() } else { text.split_once('\n').map_or("", |(_, rest)| rest) };
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(err)?;
        f.write_all(body.as_bytes()).map_err(err)?;
        let json_path = self.path.with_file_name(format!(
            "{}.{}.json",
            self.path.file_stem().and_then(|s| s.to_str()).unwrap_or("sessions"),
            record.session_id
        ));
        std::fs::write(json_path, serde_json::to_string_pretty(record).expect("record serializes")).map_err(err)?;
        Ok(())
    }
}

/// One participant's session.
#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub group: GroupLabel,
    pub repeat: bool,
    phase: SessionPhase,
    practice: Simulation,
    live: Option<Simulation>,
    live_config: SimConfig,
    map: Arc<GridMap>,
    last_seq: Option<u64>,
    stale_inputs: u64,
    pending_direction: Option<DVec2>,
    record: Option<SessionRecord>,
    logged: bool,
}

impl Session {
    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn stale_inputs(&self) -> u64 {
        self.stale_inputs
    }

    pub fn record(&self) -> Option<&SessionRecord> {
        self.record.as_ref()
    }

    /// The simulation currently driving the session.
    pub fn simulation(&self) -> &Simulation {
        self.live.as_ref().unwrap_or(&self.practice)
    }

    pub fn player(&self) -> Option<&AgentState> {
        self.simulation().snapshot().player()
    }

    fn start_live(&mut self) -> Result<(), SessionError> {
        if self.phase != SessionPhase::Practice {
            return Err(SessionError::WrongPhase {
                actual: self.phase,
                expected: "Practice",
            });
        }
        self.live = Some(Simulation::new(Arc::clone(&self.map), self.live_config.clone())?);
        self.phase = SessionPhase::Live;
        Ok(())
    }

    fn apply_input(&mut self, msg: &InputMessage) -> Result<(), SessionError> {
        if !matches!(self.phase, SessionPhase::Practice | SessionPhase::Live) {
            return Err(SessionError::WrongPhase {
                actual: self.phase,
                expected: "Practice or Live",
            });
        }
        if let Some(last) = self.last_seq {
            if msg.seq <= last {
                self.stale_inputs += 1;
                return Err(SessionError::StaleInput { seq: msg.seq, last });
            }
        }
        self.last_seq = Some(msg.seq);
        let [x, y] = msg.direction;
        let d = DVec2::new(x, y);
        self.pending_direction = Some(if d.is_finite() { d } else { DVec2::ZERO });
        Ok(())
    }

    /// Advance the active simulation by one tick. Returns true when the
    /// live run has just finished.
    fn advance(&mut self) -> Result<bool, SessionError> {
        let inputs = StepInputs {
            player_direction: self.pending_direction.take(),
        };
        match self.phase {
            SessionPhase::Practice => {
                self.practice.step(&inputs)?;
                Ok(false)
            }
            SessionPhase::Live => {
                let sim = self.live.as_mut().expect("live session has a simulation");
                sim.step(&inputs)?;
                let player_done = sim.snapshot().player().is_none_or(|p| p.phase.is_terminal());
                let ended = sim.termination().or(player_done.then_some(Outcome::AllResolved));
                if let Some(outcome) = ended {
                    sim.finish(outcome);
                    self.freeze(None);
                    return Ok(true);
                }
                Ok(false)
            }
            _ => Ok(false),
        }
    }

    fn freeze(&mut self, forced: Option<Outcome>) {
        if self.record.is_some() {
            return;
        }
        let mut record = match (&self.live, forced) {
            (Some(sim), None) => sim.to_record(self.id.clone(), Some(self.group)),
            (Some(sim), Some(outcome)) => {
                let mut sim = sim.clone();
                sim.finish(outcome);
                let mut r = sim.to_record(self.id.clone(), Some(self.group));
                r.player_egress_time = None;
                r
            }
            (None, _) => {
                let mut sim = self.practice.clone();
                sim.finish(Outcome::Aborted);
                sim.to_record(self.id.clone(), Some(self.group))
            }
        };
        record.repeat = self.repeat;
        self.record = Some(record);
        self.phase = SessionPhase::Finished;
    }

    pub fn state_message(&self) -> Option<StateMessage> {
        build_state(self.simulation(), self.phase)
    }
}

/// Settings shared by every session a server hosts.
#[derive(Debug, Clone)]
pub struct SessionSettings {
    pub map: Arc<GridMap>,
    /// Base live configuration; the player entry is filled in per session.
    pub config: SimConfig,
    pub player_profile: AgentProfile,
}

/// All sessions of one server.
#[derive(Debug)]
pub struct SessionManager {
    settings: SessionSettings,
    practice_map: Arc<GridMap>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    players_seen: Mutex<HashSet<String>>,
    next_id: Mutex<u64>,
    log: Option<RecordLog>,
}

impl SessionManager {
    pub fn new(settings: SessionSettings, log: Option<RecordLog>) -> Self {
        let practice_map = Arc::new(settings.map.with_start_room_sealed());
        Self {
            settings,
            practice_map,
            sessions: Mutex::new(HashMap::new()),
            players_seen: Mutex::new(HashSet::new()),
            next_id: Mutex::new(1),
            log,
        }
    }

    pub fn map(&self) -> &Arc<GridMap> {
        &self.settings.map
    }

    pub fn dt(&self) -> f64 {
        self.settings.config.dt
    }

    pub fn log(&self) -> Option<&RecordLog> {
        self.log.as_ref()
    }

    /// Opens a session in Practice, with the player alone in the sealed
    /// start room.
    pub fn create_session(&self, answers: Questionnaire, player_id: Option<&str>) -> Result<String, SessionError> {
        let group = classify_group(answers.frequent_gamer, answers.building_knowledge);
        let repeat = match player_id {
            Some(p) => !self.players_seen.lock().unwrap().insert(p.to_string()),
            None => false,
        };
        let id = {
            let mut n = self.next_id.lock().unwrap();
            let id = format!("s{:04}", *n);
            *n += 1;
            id
        };
        let player = PlayerConfig {
            profile: self.settings.player_profile,
            control: PlayerControl::External,
        };
        let live_config = SimConfig {
            player: Some(player),
            ..self.settings.config.clone()
        };
        let practice_config = SimConfig {
            npc_count: 0,
            ..live_config.clone()
        };
        let practice = Simulation::new_quiet(Arc::clone(&self.practice_map), practice_config)?;
        let session = Session {
            id: id.clone(),
            group,
            repeat,
            phase: SessionPhase::Practice,
            practice,
            live: None,
            live_config,
            map: Arc::clone(&self.settings.map),
            last_seq: None,
            stale_inputs: 0,
            pending_direction: None,
            record: None,
            logged: false,
        };
        self.sessions
            .lock()
            .unwrap()
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> T) -> Result<T, SessionError> {
        let s = self.session(id)?;
        let mut guard = s.lock().unwrap_or_else(|e| e.into_inner());
        Ok(f(&mut guard))
    }

    pub fn start_live(&self, id: &str) -> Result<(), SessionError> {
        self.with_session(id, |s| s.start_live())?
    }

    pub fn apply_input(&self, id: &str, msg: &InputMessage) -> Result<(), SessionError> {
        self.with_session(id, |s| s.apply_input(msg))?
    }

    /// One tick. Returns the state after it and whether the live run just
    /// finished.
    pub fn advance(&self, id: &str) -> Result<(Option<StateMessage>, bool), SessionError> {
        let (state, done) = self.with_session(id, |s| -> Result<_, SessionError> {
            let done = s.advance()?;
            Ok((s.state_message(), done))
        })??;
        if done {
            self.finalize_session(id)?;
        }
        Ok((state, done))
    }

    pub fn state(&self, id: &str) -> Result<Option<StateMessage>, SessionError> {
        self.with_session(id, |s| s.state_message())
    }

    pub fn phase(&self, id: &str) -> Result<SessionPhase, SessionError> {
        self.with_session(id, |s| s.phase())
    }

    /// Closes the session. A live run still going is recorded as Aborted
    /// with no egress time. The record is frozen at the first call, written
    /// to the log once, and returned unchanged by later calls.
    pub fn finalize_session(&self, id: &str) -> Result<SessionRecord, SessionError> {
        let (record, needs_log) = self.with_session(id, |s| {
            s.freeze(Some(Outcome::Aborted));
            let needs_log = !s.logged;
            s.logged = true;
            (s.record.clone().expect("frozen"), needs_log)
        })?;
        if needs_log {
            if let Some(log) = &self.log {
                log.append(&record)?;
            }
        }
        Ok(record)
    }
}
