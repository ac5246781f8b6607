use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stut::cli::{self, Overrides};
use stut::config::RunConfig;
use stut::Error;

#[derive(Parser)]
#[command(
    name = "stut",
    version,
    about = "Phase-drive synthesis and fidelity sweeps for cascaded phase/dispersion modulators"
)]
struct Args {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: out/<command>)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Data seeds, e.g. "0-9" or "0,3,5"
    #[arg(long, global = true)]
    seed_list: Option<String>,
    /// Worker threads for sweeps
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Solver iteration cap
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Stage counts, e.g. "1-6" or "4"
    #[arg(long, global = true)]
    stages: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve one block and dump phases, drive spectra and constellation
    Solve,
    /// SDR versus dispersion per stage
    SweepDispersion,
    /// SDR versus phase-modulator bandwidth
    SweepBandwidth,
    /// SINAD versus DAC resolution
    SweepDac,
    /// SINAD versus laser power, with the IQ transmitter baseline
    SweepLaser,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::SweepDispersion => "sweep-dispersion",
            Command::SweepBandwidth => "sweep-bandwidth",
            Command::SweepDac => "sweep-dac",
            Command::SweepLaser => "sweep-laser",
        }
    }
}

fn parse_stage_counts(text: &str) -> stut::Result<Vec<usize>> {
    cli::parse_seed_list(text)
        .map(|v| v.into_iter().map(|n| n as usize).collect())
        .map_err(|_| Error::Config {
            key: "stages".into(),
            reason: format!("cannot parse `{text}`"),
        })
}

fn run(args: Args) -> stut::Result<i32> {
    let config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seeds: args.seed_list.as_deref().map(cli::parse_seed_list).transpose()?,
        workers: args.workers,
        max_iterations: args.max_iters,
        stage_counts: args.stages.as_deref().map(parse_stage_counts).transpose()?,
    };
    let out_dir = args
        .out_dir
        .unwrap_or_else(|| cli::default_out_dir(args.command.name()));
    match args.command {
        Command::Solve => cli::cmd_solve(&config, &overrides, &out_dir),
        Command::SweepDispersion => cli::cmd_sweep_dispersion(&config, &overrides, &out_dir),
        Command::SweepBandwidth => cli::cmd_sweep_bandwidth(&config, &overrides, &out_dir),
        Command::SweepDac => cli::cmd_sweep_dac(&config, &overrides, &out_dir),
        Command::SweepLaser => cli::cmd_sweep_laser(&config, &overrides, &out_dir),
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. }
                | Error::InvalidParameter(_)
                | Error::UnsupportedConstellation(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
