//! `stylus-teleport`: simulate study runs, replay traces, aggregate results
//! and serve the kernel over NDJSON.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on domain errors (bad
//! files, invalid values, incomplete trials).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod replay;
mod serve;
mod simulate;
mod stats;

#[derive(Parser)]
#[command(
    name = "stylus-teleport",
    version,
    about = "Stylus teleport kernel and trial harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic participants, replay every trial and write results.
    Simulate(SimulateArgs),
    /// Replay one trace and print its trial metrics as JSON.
    Replay(ReplayArgs),
    /// Filter and summarize a results file per condition.
    Stats(StatsArgs),
    /// Serve one live session over NDJSON on a local TCP port.
    Serve(ServeArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 18, value_parser = clap::value_parser!(u64).range(1..))]
    pub participants: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory for results.jsonl and results.csv.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Kernel config JSON (methods are set per trial).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Synthetic user parameters JSON.
    #[arg(long)]
    pub user: Option<PathBuf>,
    /// Zero aim and gaze noise.
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long)]
    pub aim_noise_deg: Option<f64>,
    #[arg(long)]
    pub gaze_noise_deg: Option<f64>,
    #[arg(long)]
    pub roll_gain: Option<f64>,
    #[arg(long)]
    pub hold_threshold_ms: Option<u64>,
    /// Do not print the summary table.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Scene JSON; defaults to the scene named in the trace header.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Kernel config JSON; defaults to the trace header's config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also print the event log.
    #[arg(long)]
    pub events: bool,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "switch,orient")]
    pub group_by: Vec<stats::GroupKey>,
    /// Write the summary table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 7878)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Session reset after this long without a client message.
    #[arg(long, default_value_t = 5000, hide = true)]
    pub heartbeat_ms: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Replay(a) => replay::run(&a),
        Command::Stats(a) => stats::run(&a),
        Command::Serve(a) => serve::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Reads a JSON file into `T`, naming the file on failure.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> anyhow::Result<T> {
    use anyhow::Context;
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
