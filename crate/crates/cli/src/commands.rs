use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use evacsim_core::agents::AgentProfile;
use evacsim_core::engine::{run_observed, EngineError};
use evacsim_core::experiment::{
    aggregate_means, egress_times, export_records, import_records, mean, run_cohort, welch_t_test,
    ExperimentError, GroupLabel, SessionRecord,
};
use evacsim_core::scenario::{load_blueprint, GridMap, ScenarioError};
use evacsim_core::SimConfig;
use evacsim_server::{ws, RecordLog, SessionManager, SessionSettings};
use serde_json::json;
use thiserror::Error;
use tracing::info;

use crate::{Command, SimArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid configuration: {0}")]
    Config(#[from] EngineError),
    #[error("cannot read {path}: {message}")]
    MissingInput { path: PathBuf, message: String },
    #[error("{0}")]
    Malformed(String),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error(transparent)]
    Experiment(ExperimentError),
    #[error("server: {0}")]
    Server(std::io::Error),
}

impl CliError {
    /// 1 for bad arguments and malformed input rows, 2 for unusable files.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Malformed(_) | CliError::Experiment(_) => 1,
            CliError::Scenario(_) | CliError::MissingInput { .. } | CliError::Output { .. } | CliError::Server(_) => 2,
        }
    }
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { scenario, sim, out } => cmd_run(&scenario, &sim, out.as_deref()),
        Command::Cohort { scenario, group, runs, sim, out } => cmd_cohort(&scenario, group, runs, &sim, out.as_deref()),
        Command::Analyze { log } => cmd_analyze(&log),
        Command::Serve { scenario, sim, host, port, out } => cmd_serve(&scenario, &sim, (host, port).into(), out),
    }
}

fn load(path: &Path) -> Result<Arc<GridMap>, CliError> {
    Ok(Arc::new(load_blueprint(path)?))
}

fn config(sim: &SimArgs) -> Result<SimConfig, CliError> {
    let config = SimConfig {
        seed: sim.seed,
        npc_count: sim.npcs,
        backend: sim.backend.into(),
        dt: sim.dt,
        max_sim_time: sim.max_time,
        ..Default::default()
    };
    config.validate()?;
    Ok(config)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Output { path: path.to_owned(), message: e.to_string() })
}

/// Writes to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json(value: &serde_json::Value) {
    emit(&serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn cmd_run(scenario: &Path, sim: &SimArgs, out: Option<&Path>) -> Result<(), CliError> {
    let map = load(scenario)?;
    let config = config(sim)?;
    let finished = run_observed(map, config, |_| {})?;
    let record = finished.to_record(format!("run-{}", sim.seed), None);
    let snap = finished.snapshot();
    let census = snap.census();
    let times: Vec<f64> = snap.agents.iter().filter_map(|a| a.egress_time).collect();
    let summary = json!({
        "session_id": record.session_id,
        "seed": record.seed,
        "backend": config_name(sim),
        "outcome": record.outcome.to_string(),
        "ticks": snap.tick,
        "population": snap.initial_population,
        "escaped": census.escaped,
        "incapacitated": census.incapacitated,
        "inside": census.inside,
        "mean_egress_s": (!times.is_empty()).then(|| mean(&times)),
        "last_egress_s": times.iter().copied().reduce(f64::max),
        "timeline_length": record.events.len(),
        "event_log_sha256": record.events.digest(),
        "config_digest": record.config_digest,
    });
    if let Some(path) = out {
        write(path, &serde_json::to_string_pretty(&record).expect("record serializes"))?;
    }
    print_json(&summary);
    Ok(())
}

fn config_name(sim: &SimArgs) -> &'static str {
    match sim.backend {
        crate::BackendArg::Ca => "ca",
        crate::BackendArg::Force => "force",
    }
}

fn cmd_cohort(
    scenario: &Path,
    group: Option<GroupLabel>,
    runs: usize,
    sim: &SimArgs,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let map = load(scenario)?;
    let base = config(sim)?;
    let groups: Vec<GroupLabel> = group.map_or(GroupLabel::ALL.to_vec(), |g| vec![g]);
    let mut all: Vec<SessionRecord> = Vec::new();
    let mut cohorts = Vec::new();
    let mut times = std::collections::BTreeMap::new();
    for g in groups {
        let records = run_cohort(Arc::clone(&map), &base, g, runs, sim.seed).map_err(CliError::Experiment)?;
        let escaped = egress_times(&records);
        let missing: Vec<&str> = records
            .iter()
            .filter(|r| r.player_egress_time.is_none())
            .map(|r| r.session_id.as_str())
            .collect();
        info!(group = %g, escaped = escaped.len(), "cohort finished");
        cohorts.push(json!({
            "group": g.to_string(),
            "runs": records.len(),
            "escaped": escaped.len(),
            "mean_egress_s": (!escaped.is_empty()).then(|| mean(&escaped)),
            "missing": missing,
        }));
        times.insert(g, escaped);
        all.extend(records);
    }
    let mut comparisons = Vec::new();
    for (lo, hi) in [
        (GroupLabel::A, GroupLabel::B),
        (GroupLabel::A, GroupLabel::C),
        (GroupLabel::B, GroupLabel::D),
        (GroupLabel::C, GroupLabel::D),
    ] {
        if let (Some(a), Some(b)) = (times.get(&lo), times.get(&hi)) {
            if let Some(w) = welch_t_test(a, b) {
                comparisons.push(json!({ "less": lo.to_string(), "greater": hi.to_string(), "t": w.t, "df": w.df, "p": w.p_less }));
            }
        }
    }
    if let Some(path) = out {
        export_records(&all, path).map_err(|e| CliError::Output { path: path.to_owned(), message: e.to_string() })?;
    }
    print_json(&json!({ "seed": sim.seed, "cohorts": cohorts, "welch": comparisons }));
    Ok(())
}

fn cmd_analyze(log: &Path) -> Result<(), CliError> {
    let records = import_records(log).map_err(|e| match e {
        ExperimentError::Io { message, .. } => CliError::MissingInput { path: log.to_owned(), message },
        ExperimentError::Format { path, message } => CliError::Malformed(format!("{path}: {message}")),
        other => CliError::Experiment(other),
    })?;
    let (timed, untimed): (Vec<SessionRecord>, Vec<SessionRecord>) = records
        .into_iter()
        .partition(|r| r.group.is_some() && r.player_egress_time.is_some());
    for r in &untimed {
        eprintln!("skipping {}: no group or no player egress time ({})", r.session_id, r.outcome);
    }
    let means = aggregate_means(&timed).map_err(CliError::Experiment)?;
    let mut table = format!("{:<6} {:>8} {:>14}", "group", "sessions", "mean_egress_s");
    for (group, m) in &means {
        let n = timed.iter().filter(|r| r.group == Some(*group)).count();
        table.push_str(&format!("\n{:<6} {:>8} {:>14.1}", group, n, m));
    }
    emit(&table);
    Ok(())
}

fn cmd_serve(scenario: &Path, sim: &SimArgs, addr: std::net::SocketAddr, out: PathBuf) -> Result<(), CliError> {
    let map = load(scenario)?;
    let settings = SessionSettings { map, config: config(sim)?, player_profile: AgentProfile::default() };
    let manager = Arc::new(SessionManager::new(settings, Some(RecordLog::new(out))));
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::Server)?;
    runtime.block_on(async move {
        let (local, serve) = ws::bind(manager, addr).await.map_err(CliError::Server)?;
        emit(&json!({ "listening": local.to_string() }).to_string());
        serve.await.map_err(CliError::Server)
    })
}
