//! `smp-passage` command-line tool.
//!
//! Every subcommand writes one JSON report to stdout and, unless
//! `--json-only` is given, a short human summary to stderr. Exit codes:
//! 0 success, 1 invalid input or usage, 2 target not universally accessible,
//! 3 internal inconsistency.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand};

pub mod commands;
pub mod report;

use report::{to_json, Timing, EXIT_INVALID, EXIT_OK};

#[derive(Debug, Parser)]
#[command(
    name = "smp-passage",
    version,
    about = "First-passage moments of semi-Markov processes"
)]
pub struct Cli {
    /// Suppress the human-readable summary on stderr.
    #[arg(long, global = true)]
    pub json_only: bool,

    /// Record wall-clock time in the report (makes reports run-dependent).
    #[arg(long, global = true)]
    pub timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a model file.
    Check { model: PathBuf },
    /// Communicating classes, canonical form and universally accessible states.
    Analyze { model: PathBuf },
    /// Exact first-passage moments to a target state.
    Moments(MomentsArgs),
    /// Monte Carlo passage moments and transition traces.
    Simulate(SimulateArgs),
    /// Plug-in estimates from a transition trace.
    Estimate(EstimateArgs),
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    pub model: PathBuf,

    /// Target state: name or one-based index.
    #[arg(long)]
    pub target: String,

    /// Highest moment order.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=20))]
    pub order: u32,

    /// Report infinite moments for sources that cannot reach the target
    /// instead of failing.
    #[arg(long)]
    pub allow_unreachable: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("output").required(true).multiple(true).args(["target", "emit_trace"])))]
pub struct SimulateArgs {
    pub model: PathBuf,

    /// Target state for empirical passage moments.
    #[arg(long)]
    pub target: Option<String>,

    /// Replications per source state.
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,

    /// Random seed; drawn from OS entropy and echoed in the report if omitted.
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=20))]
    pub order: u32,

    /// Transition cap per replication; longer runs are censored.
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_transitions: u64,

    /// Write a transition trace CSV.
    #[arg(long)]
    pub emit_trace: Option<PathBuf>,

    /// Trace replications.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub trace_reps: u64,

    /// Transitions per trace replication.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trace_length: u64,

    /// Initial state of every trace replication.
    #[arg(long, default_value = "1")]
    pub trace_start: String,

    /// End a trace replication on entering an absorbing state.
    #[arg(long)]
    pub stop_at_absorbing: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Transition trace CSV with header `rep,from,to,sojourn`.
    pub trace: PathBuf,

    /// Number of states.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub states: u64,

    /// Target state: `s<k>` or one-based index.
    #[arg(long)]
    pub target: String,

    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=20))]
    pub order: u32,

    /// Write the estimated model as JSON.
    #[arg(long)]
    pub emit_model: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_INVALID
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let argv = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();

    let start = Instant::now();
    let mut outcome = commands::execute(&cli.command, argv);
    if cli.timing {
        outcome.report.timing = Some(Timing {
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }

    let _ = writeln!(stdout, "{}", to_json(&outcome.report));
    if !cli.json_only {
        for line in &outcome.summary {
            let _ = writeln!(stderr, "{line}");
        }
        if let Some(err) = &outcome.report.error {
            let _ = writeln!(stderr, "error: {}", err.message);
        }
    }
    outcome.report.exit_code
}
