//! Command-line surface: config parsing, batch runs, and artifact output.
//!
//! Exit codes: 0 ok, 2 config parse error, 3 validation failure, 4 runtime error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{execute, Outcome};
pub use config::{ExperimentConfig, JudgeConfig, JudgeKind, Stage, SweepConfig, CONFIG_SCHEMA};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config schema `{found}` is not supported; expected `{expected}`")]
    Schema { found: String, expected: &'static str },
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Schema { .. } => 2,
            CliError::Invalid(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

pub(crate) fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "magrisk", version, about = "Risk analysis for multi-agent systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command that executes an ensemble.
#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `seed_base` from the config.
    #[arg(long)]
    pub seed_base: Option<u64>,
    /// Overrides `runs` from the config.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Overrides `out` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for ensemble runs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured ensemble and write traces, report and plot table.
    Run(RunFlags),
    /// Vary one injection parameter and write one plot-table row per value.
    Sweep {
        #[command(flatten)]
        flags: RunFlags,
        /// drop_channel_duration, corrupt_probability or deadline.
        #[arg(long, requires_all = ["label", "values"])]
        axis: Option<String>,
        #[arg(long)]
        label: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Score the judge against a human-annotated message set.
    CalibrateJudge {
        /// CSV with traceFile,eventIndex,goldLabel,annotatorId columns.
        #[arg(long)]
        annotations: PathBuf,
        /// Directory the annotation trace paths are relative to.
        #[arg(long, default_value = ".")]
        traces: PathBuf,
        /// Experiment config whose judge settings to use.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild the metric report from recorded traces without re-running.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Trace files or directories of `.jsonl` traces.
        #[arg(long, required = true, num_args = 1..)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute a trace and demand an identical event sequence.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Ask an agent a question at a given step of a seeded run.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        step: u32,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        question: String,
    },
    /// Built-in scenario packages.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    List,
    /// Print a runnable config with the scenario inlined, for forking.
    Emit { name: String },
    /// Check packages against their oracles and golden digests.
    Verify { name: Option<String> },
}

/// Parses `args`, runs the command, prints its output and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            print!("{}", out.stdout);
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
