//! `evacsim` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evacsim_core::experiment::GroupLabel;
use evacsim_core::Backend;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "evacsim", version, about = "Fire evacuation simulator and drill server")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one headless simulation and print a JSON summary
    Run {
        /// Scenario blueprint file
        scenario: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Write the full session record (JSON) here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded synthetic sessions per participant group
    Cohort {
        /// Scenario blueprint file
        scenario: PathBuf,
        /// Group to simulate; all four when omitted
        #[arg(long)]
        group: Option<GroupLabel>,
        /// Sessions per group
        #[arg(long, default_value_t = 30)]
        runs: usize,
        #[command(flatten)]
        sim: SimArgs,
        /// Write the session log (CSV) here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print mean player egress time per group from a session log
    Analyze {
        /// Session log (CSV)
        log: PathBuf,
    },
    /// Host interactive drill sessions over WebSocket
    Serve {
        /// Scenario blueprint file
        scenario: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Address to listen on
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Port to listen on
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Session log (CSV) that finished sessions are appended to
        #[arg(long, default_value = "sessions.csv")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    /// Cellular automaton
    Ca,
    /// Social force
    Force,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Ca => Backend::CellularAutomaton,
            BackendArg::Force => Backend::SocialForce,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Random seed (first seed for cohorts)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of non-player agents
    #[arg(long, default_value_t = 30)]
    pub npcs: usize,
    /// Movement model
    #[arg(long, value_enum, default_value_t = BackendArg::Force)]
    pub backend: BackendArg,
    /// Seconds per tick
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    /// Seconds after the alarm before a run times out
    #[arg(long, default_value_t = 600.0)]
    pub max_time: f64,
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("EVACSIM_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
