//! `sounder`: generate → simulate → calibrate → process → report.
//!
//! Exit status is 0 on success, 1 when a scenario's expected metrics are
//! violated and 2 for invalid input (parse or validation failures, missing
//! sidecars, grid mismatches).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "sounder", version, about = "Correlation channel-sounder simulation and processing")]
struct Cli {
    /// Worker threads for simulation and processing (default: all cores).
    #[arg(long, global = true, env = "SOUNDER_THREADS")]
    threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one period of the multitone sounding waveform.
    Gen(GenArgs),
    /// Simulate a snapshot capture through a channel.
    Sim(SimArgs),
    /// Build a calibration profile from a back-to-back capture.
    Cal(CalArgs),
    /// Correlate, calibrate, phase-track and average a capture.
    Proc(ProcArgs),
    /// Impulse-response metrics as JSON plus a CSV power-delay profile.
    Report(ReportArgs),
    /// Run a scenario file end to end.
    Run(RunArgs),
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 2000)]
    pub tones: usize,
    #[arg(long, default_value_t = 2.4e9)]
    pub rate: f64,
    #[arg(long, default_value_t = 2e9)]
    pub bw: f64,
    /// Re-phase the tones for a low crest factor.
    #[arg(long)]
    pub optimize_cf: bool,
    #[arg(long, default_value_t = 1)]
    pub root: u64,
    /// Accepted for interface uniformity; generation is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long, default_value = "waveform.bin")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimArgs {
    #[arg(long)]
    pub waveform: PathBuf,
    /// Channel, impairments and spurs from a scenario file.
    #[arg(long, conflicts_with = "tap")]
    pub scenario: Option<PathBuf>,
    /// Path as DELAY_S:GAIN_DB[:PHASE_RAD]; repeatable.
    #[arg(long, value_parser = commands::parse_tap)]
    pub tap: Vec<sounder_core::ChannelTap>,
    /// Per-snapshot SNR of a 0 dB path (without a scenario).
    #[arg(long)]
    pub snr: Option<f64>,
    /// Simulate the scenario's back-to-back calibration capture instead.
    #[arg(long, requires = "scenario")]
    pub calibration: bool,
    #[arg(short, long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long, default_value = "snapshots.bin")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrackArgs {
    /// Reference-tap phase tracking before averaging.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub track_phase: bool,
    /// Snapshots averaged per phase estimate.
    #[arg(long, default_value_t = 1)]
    pub pre_average: usize,
    /// Snapshots to use (default: all).
    #[arg(long)]
    pub avg: Option<usize>,
}

#[derive(Args)]
pub struct CalArgs {
    #[arg(long)]
    pub waveform: PathBuf,
    #[arg(long)]
    pub snapshots: PathBuf,
    /// Loss of the back-to-back attenuator, dB.
    #[arg(long, default_value_t = 54.0)]
    pub attenuation: f64,
    #[command(flatten)]
    pub track: TrackArgs,
    #[arg(short, long, default_value = "calibration.bin")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ProcArgs {
    #[arg(long)]
    pub waveform: PathBuf,
    #[arg(long)]
    pub snapshots: PathBuf,
    /// Calibration profile; without it the output stays uncalibrated.
    #[arg(long)]
    pub cal: Option<PathBuf>,
    #[arg(long, default_value = "chebyshev:80")]
    pub window: sounder_core::dsp::WindowSpec,
    #[command(flatten)]
    pub track: TrackArgs,
    /// Averaged impulse response; the single-snapshot response goes next to
    /// it with a `.single` stem suffix.
    #[arg(short, long, default_value = "ir.bin")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub ir: PathBuf,
    /// Scenario whose taps are the known propagation paths.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = sounder_core::metrics::DEFAULT_GUARD_BINS)]
    pub guard: usize,
    #[arg(long, default_value_t = sounder_core::metrics::DEFAULT_MIN_PROMINENCE_DB)]
    pub prominence: f64,
    #[arg(short, long, default_value = "metrics.json")]
    pub out: PathBuf,
    #[arg(long, default_value = "cir.csv")]
    pub csv: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    #[arg(short, long, default_value = "out")]
    pub out: PathBuf,
    /// Full-scale averaging count (50,000 by default) instead of the desk-scale one.
    #[arg(long)]
    pub full: bool,
    /// Override the averaging count.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the measurement snapshots.
    #[arg(long)]
    pub keep_snapshots: bool,
}

/// Failure classes mapped onto exit codes.
pub enum Failure {
    Input(anyhow::Error),
    Expectation(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Sim(a) => commands::sim(a),
        Command::Cal(a) => commands::cal(a),
        Command::Proc(a) => commands::proc(a),
        Command::Report(a) => commands::report(a),
        Command::Run(a) => commands::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Expectation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
