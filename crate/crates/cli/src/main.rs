//! `roa`: check a model, solve for a certificate, certify it by simulation, compute the
//! grid oracles, and export plot data. Every run writes `manifest.json` to `--out-dir`.
//!
//! Exit codes: 0 success, 1 analytic failure, 2 usage or parse error.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::EXIT_USAGE;
use manifest::Run;

#[derive(Debug, Parser)]
#[command(name = "roa", version, about = "Inner approximations of robust regions of attraction")]
struct Cli {
    /// Directory for every output file and manifest.json.
    #[arg(long, global = true, default_value = "roa-out")]
    out_dir: PathBuf,
    /// Run seed; every random stage derives its own seed from it.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the standing assumptions of a model.
    Check(CheckArgs),
    /// Solve the SOS program and write a certificate.
    Solve(SolveArgs),
    /// Certify a certificate by constraint sampling and trajectory simulation.
    Certify(CertifyArgs),
    /// Value iteration and simulation estimate of the maximal robust region.
    Oracle(OracleArgs),
    /// Membership grids of certificates, optionally overlaid with the oracle mask.
    PlotData(PlotArgs),
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub model: PathBuf,
    /// Disturbance samples per axis for the stability heuristic (default: the model's grid).
    #[arg(long)]
    pub d_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub model: PathBuf,
    /// Degree of u (default: the model's).
    #[arg(long)]
    pub degree: Option<u32>,
    /// Degree of the constraint multipliers (default: the model's table for this degree).
    #[arg(long)]
    pub mult_degree: Option<u32>,
    /// Certificate file, relative to --out-dir unless absolute.
    #[arg(long, default_value = "cert.json")]
    pub out: PathBuf,
    /// Solve even when an assumption check fails.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Also write the compiled SDP (sdp.txt, sdp.json).
    #[arg(long)]
    pub emit_sdp: bool,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    pub cert: PathBuf,
    pub model: PathBuf,
    /// Initial states sampled inside the certified set.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Random policies per state; the constant extreme policies are added.
    #[arg(long)]
    pub policies: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).multiple(true))]
pub struct OracleArgs {
    pub model: PathBuf,
    /// Value iteration.
    #[arg(long, group = "mode")]
    pub vi: bool,
    /// Simulation estimate (runs value iteration for the greedy adversary).
    #[arg(long, group = "mode")]
    pub sim: bool,
    /// State grid nodes per axis (default 101 for n <= 2, 61 otherwise).
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, default_value_t = 11)]
    pub d_points: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 200)]
    pub horizon: usize,
    #[arg(long, default_value_t = 50)]
    pub random_policies: usize,
    /// Pin a coordinate for the simulation mask, e.g. `x1=0`. Repeat for several slices.
    #[arg(long)]
    pub slice: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub cert: PathBuf,
    pub model: PathBuf,
    /// Further certificates of the same model (other degrees).
    #[arg(long)]
    pub compare: Vec<PathBuf>,
    /// Nodes per axis of the sign grids.
    #[arg(long, default_value_t = 401)]
    pub resolution: usize,
    /// Pin a coordinate, e.g. `x1=0`. Repeat for several slices. For n = 3 the default is
    /// the three coordinate planes through the origin.
    #[arg(long)]
    pub slice: Vec<String>,
    /// Export the full grid instead of slices.
    #[arg(long, conflicts_with = "slice")]
    pub full: bool,
    /// Add overlay CSVs with every certificate mask and the simulation mask.
    #[arg(long)]
    pub overlay: bool,
    /// Nodes per axis of the overlay grids.
    #[arg(long, default_value_t = 101)]
    pub overlay_points: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE as u8);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .expect("global thread pool is built once");
    }

    let name = match &cli.command {
        Command::Check(_) => "check",
        Command::Solve(_) => "solve",
        Command::Certify(_) => "certify",
        Command::Oracle(_) => "oracle",
        Command::PlotData(_) => "plot-data",
    };
    let mut run = match Run::new(name, &cli.out_dir, cli.seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    run.config("threads", cli.threads);
    let result = match &cli.command {
        Command::Check(a) => commands::check(&mut run, a),
        Command::Solve(a) => commands::solve(&mut run, a),
        Command::Certify(a) => commands::certify(&mut run, a),
        Command::Oracle(a) => commands::oracle(&mut run, a),
        Command::PlotData(a) => commands::plot_data(&mut run, a),
    };
    let code = result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_USAGE
    });
    if let Err(e) = run.finish(code) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE as u8);
    }
    ExitCode::from(code as u8)
}
