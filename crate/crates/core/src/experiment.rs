//! Participant groups, session records, cohort batches and egress-time
//! analytics.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::agents::AgentProfile;
use crate::engine::{EngineError, EventLog, PlayerConfig, PlayerControl, SimConfig, Simulation, StepInputs};
use crate::scenario::GridMap;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("record {0} has no group")]
    MissingGroup(String),
    #[error("record {0} has no player egress time")]
    MissingTime(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed log {path}: {message}")]
    Format { path: String, message: String },
    #[error("n_runs must be at least 1")]
    NoRuns,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupLabel {
    A,
    B,
    C,
    D,
}

impl GroupLabel {
    pub const ALL: [GroupLabel; 4] = [GroupLabel::A, GroupLabel::B, GroupLabel::C, GroupLabel::D];

    pub fn frequent_gamer(self) -> bool {
        matches!(self, GroupLabel::A | GroupLabel::C)
    }

    pub fn building_knowledge(self) -> bool {
        matches!(self, GroupLabel::A | GroupLabel::B)
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GroupLabel::A => "A",
            GroupLabel::B => "B",
            GroupLabel::C => "C",
            GroupLabel::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for GroupLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(GroupLabel::A),
            "B" => Ok(GroupLabel::B),
            "C" => Ok(GroupLabel::C),
            "D" => Ok(GroupLabel::D),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

/// Group from the two questionnaire answers.
pub fn classify_group(frequent_gamer: bool, building_knowledge: bool) -> GroupLabel {
    match (frequent_gamer, building_knowledge) {
        (true, true) => GroupLabel::A,
        (false, true) => GroupLabel::B,
        (true, false) => GroupLabel::C,
        (false, false) => GroupLabel::D,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    AllResolved,
    Timeout,
    Aborted,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::AllResolved => "AllResolved",
            Outcome::Timeout => "Timeout",
            Outcome::Aborted => "Aborted",
        };
        f.write_str(s)
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AllResolved" => Ok(Outcome::AllResolved),
            "Timeout" => Ok(Outcome::Timeout),
            "Aborted" => Ok(Outcome::Aborted),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

/// One evacuation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub group: Option<GroupLabel>,
    pub seed: u64,
    pub config_digest: String,
    /// Seconds from the alarm until the player left, if they did.
    pub player_egress_time: Option<f64>,
    pub npc_egress_times: Vec<f64>,
    pub npc_escaped: usize,
    pub npc_total: usize,
    pub events: EventLog,
    pub outcome: Outcome,
    /// The same participant played before.
    #[serde(default)]
    pub repeat: bool,
}

/// Mean player egress time per group, in A..D order. Groups with no
/// records are omitted.
pub fn aggregate_means(records: &[SessionRecord]) -> Result<BTreeMap<GroupLabel, f64>, ExperimentError> {
    let mut sums: BTreeMap<GroupLabel, (f64, usize)> = BTreeMap::new();
    for r in records {
        let group = r.group.ok_or_else(|| ExperimentError::MissingGroup(r.session_id.clone()))?;
        let t = r
            .player_egress_time
            .ok_or_else(|| ExperimentError::MissingTime(r.session_id.clone()))?;
        let e = sums.entry(group).or_default();
        e.0 += t;
        e.1 += 1;
    }
    Ok(sums.into_iter().map(|(g, (s, n))| (g, s / n as f64)).collect())
}

pub const CSV_HEADER: [&str; 7] = [
    "session_id",
    "group",
    "seed",
    "outcome",
    "player_egress_s",
    "npc_escaped",
    "npc_total",
];

fn io_err(path: &Path, e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn format_err(path: &Path, e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// The tabular log as a string.
pub fn records_to_csv(records: &[SessionRecord]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.session_id.clone(),
            r.group.map(|g| g.to_string()).unwrap_or_default(),
            r.seed.to_string(),
            r.outcome.to_string(),
            r.player_egress_time.map(|t| t.to_string()).unwrap_or_default(),
            r.npc_escaped.to_string(),
            r.npc_total.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Writes the tabular log to `destination`, returning the byte count.
pub fn export_records(records: &[SessionRecord], destination: &Path) -> Result<usize, ExperimentError> {
    let text = records_to_csv(records);
    fs::write(destination, &text).map_err(|e| io_err(destination, e))?;
    Ok(text.len())
}

/// Writes one JSON file per record, named `<session_id>.json`, into `dir`.
pub fn export_companions(records: &[SessionRecord], dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for r in records {
        let path = dir.join(format!("{}.json", r.session_id));
        let json = serde_json::to_string_pretty(r).expect("record serializes");
        fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Parses a tabular log. Event timelines and NPC times are not part of the
/// table and come back empty.
pub fn parse_records_csv(text: &str, path: &Path) -> Result<Vec<SessionRecord>, ExperimentError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| format_err(path, e))?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(format_err(path, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let (n, line) = (i + 1, i + 2);
        let row = row.map_err(|e| format_err(path, format!("row {n} (line {line}): {e}")))?;
        let field = |k: usize| row.get(k).unwrap_or("");
        let bad = |what: &str, e: &dyn fmt::Display| format_err(path, format!("row {n} (line {line}): {what}: {e}"));
        let group = match field(1) {
            "" => None,
            s => Some(s.parse::<GroupLabel>().map_err(|e| bad("group", &e))?),
        };
        let player_egress_time = match field(4) {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|e| bad("player_egress_s", &e))?),
        };
        out.push(SessionRecord {
            session_id: field(0).to_string(),
            group,
            seed: field(2).parse().map_err(|e| bad("seed", &e))?,
            config_digest: String::new(),
            player_egress_time,
            npc_egress_times: Vec::new(),
            npc_escaped: field(5).parse().map_err(|e| bad("npc_escaped", &e))?,
            npc_total: field(6).parse().map_err(|e| bad("npc_total", &e))?,
            events: EventLog::default(),
            outcome: field(3).parse().map_err(|e| bad("outcome", &e))?,
            repeat: false,
        });
    }
    Ok(out)
}

pub fn import_records(source: &Path) -> Result<Vec<SessionRecord>, ExperimentError> {
    let text = fs::read_to_string(source).map_err(|e| io_err(source, e))?;
    parse_records_csv(&text, source)
}

/// Player profile for a synthetic participant of `group`, built on `base`.
pub fn group_profile(base: &AgentProfile, group: GroupLabel) -> AgentProfile {
    let mut p = *base;
    p.knowledge = if group.building_knowledge() { 1.0 } else { 0.1 };
    if !group.frequent_gamer() {
        p.max_speed *= 0.45;
        p.reaction_time += 3.0;
    }
    p
}

/// Runs one headless session with an autonomous player standing in for a
/// participant of `group`. The run stops as soon as the player is resolved
/// or the engine terminates.
pub fn run_session(map: Arc<GridMap>, config: SimConfig, group: GroupLabel) -> Result<SessionRecord, ExperimentError> {
    let mut sim = Simulation::new(map, config)?;
    loop {
        let player_done = sim.snapshot().player().is_none_or(|p| p.phase.is_terminal());
        if let Some(outcome) = sim.termination() {
            sim.finish(outcome);
            break;
        }
        if player_done {
            sim.finish(crate::experiment::Outcome::AllResolved);
            break;
        }
        sim.step(&StepInputs::default())?;
    }
    let seed = sim.config().seed;
    Ok(sim.to_record(format!("{group}-{seed}"), Some(group)))
}

/// `n_runs` sessions for `group` with seeds `seed0..seed0 + n_runs`, in seed
/// order.
pub fn run_cohort(
    map: Arc<GridMap>,
    base_config: &SimConfig,
    group: GroupLabel,
    n_runs: usize,
    seed0: u64,
) -> Result<Vec<SessionRecord>, ExperimentError> {
    if n_runs == 0 {
        return Err(ExperimentError::NoRuns);
    }
    let base_profile = base_config.player.map(|p| p.profile).unwrap_or_default();
    let player = PlayerConfig {
        profile: group_profile(&base_profile, group),
        control: PlayerControl::Autonomous,
    };
    (0..n_runs as u64)
        .into_par_iter()
        .map(|k| {
            let config = SimConfig {
                seed: seed0 + k,
                player: Some(player),
                ..base_config.clone()
            };
            run_session(Arc::clone(&map), config, group)
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for mean(a) < mean(b).
    pub p_less: f64,
}

/// Welch's unequal-variance t-test of `a` against `b`. Needs at least two
/// values in each sample.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    let diff = mean(a) - mean(b);
    if se2 == 0.0 {
        let p = if diff < 0.0 { 0.0 } else { 1.0 };
        return Some(WelchTest { t: diff.signum() * f64::INFINITY, df: na + nb - 2.0, p_less: p });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(WelchTest { t, df, p_less: dist.cdf(t) })
}

/// Player egress times of records that have one.
pub fn egress_times(records: &[SessionRecord]) -> Vec<f64> {
    records.iter().filter_map(|r| r.player_egress_time).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, group: Option<GroupLabel>, t: Option<f64>) -> SessionRecord {
        SessionRecord {
            session_id: id.into(),
            group,
            seed: 1,
            config_digest: String::new(),
            player_egress_time: t,
            npc_egress_times: vec![],
            npc_escaped: 0,
            npc_total: 0,
            events: EventLog::default(),
            outcome: Outcome::AllResolved,
            repeat: false,
        }
    }

    #[test]
    fn classify_matches_user_groups() {
        assert_eq!(classify_group(true, true), GroupLabel::A);
        assert_eq!(classify_group(false, true), GroupLabel::B);
        assert_eq!(classify_group(true, false), GroupLabel::C);
        assert_eq!(classify_group(false, false), GroupLabel::D);
        for g in GroupLabel::ALL {
            assert_eq!(classify_group(g.frequent_gamer(), g.building_knowledge()), g);
        }
    }

    #[test]
    fn means_single_and_empty() {
        let m = aggregate_means(&[rec("x", Some(GroupLabel::A), Some(22.0))]).unwrap();
        assert_eq!(m.into_iter().collect::<Vec<_>>(), vec![(GroupLabel::A, 22.0)]);
        assert!(aggregate_means(&[]).unwrap().is_empty());
    }

    #[test]
    fn means_name_the_offender() {
        let err = aggregate_means(&[rec("ok", Some(GroupLabel::A), Some(1.0)), rec("bad", None, Some(1.0))]).unwrap_err();
        assert!(matches!(err, ExperimentError::MissingGroup(id) if id == "bad"));
        let err = aggregate_means(&[rec("late", Some(GroupLabel::B), None)]).unwrap_err();
        assert!(matches!(err, ExperimentError::MissingTime(id) if id == "late"));
    }

    #[test]
    fn csv_header_only_for_empty() {
        assert_eq!(
            records_to_csv(&[]),
            "session_id,group,seed,outcome,player_egress_s,npc_escaped,npc_total\n"
        );
    }

    #[test]
    fn csv_round_trip() {
        let mut r = rec("s-1", Some(GroupLabel::C), Some(58.05));
        r.npc_escaped = 3;
        r.npc_total = 4;
        let other = rec("s-2", None, None);
        let text = records_to_csv(&[r.clone(), other]);
        assert_eq!(text.lines().nth(1), Some("s-1,C,1,AllResolved,58.05,3,4"));
        let back = parse_records_csv(&text, Path::new("mem")).unwrap();
        assert_eq!(back[0].player_egress_time, Some(58.05));
        assert_eq!(back[1].group, None);
        assert_eq!(records_to_csv(&back), text);
    }

    #[test]
    fn welch_against_reference() {
        // Reference values computed with scipy.stats.ttest_ind(equal_var=False).
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
        let w = welch_t_test(&a, &b).unwrap();
        assert!((w.t - -2.3763541031440183).abs() < 1e-9, "{}", w.t);
        assert!((w.df - 6.972255729794934).abs() < 1e-9, "{}", w.df);
        assert!((w.p_less - 0.024642169103365245).abs() < 1e-6, "{}", w.p_less);
    }

    #[test]
    fn group_profiles() {
        let base = AgentProfile::default();
        let d = group_profile(&base, GroupLabel::D);
        assert_eq!(d.knowledge, 0.1);
        assert!((d.max_speed - base.max_speed * 0.45).abs() < 1e-12);
        assert_eq!(d.reaction_time, base.reaction_time + 3.0);
        assert_eq!(group_profile(&base, GroupLabel::A), AgentProfile { knowledge: 1.0, ..base });
    }
}
