mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigFile;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "kdvbs", version, about = "KdV pseudo-backstepping experiments")]
struct Cli {
    /// Flat key=value file; flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Accepted for compatibility; nothing in this tool draws random numbers.
    #[arg(long, global = true)]
    seed_free: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the pseudo-kernel and report its decay rates.
    Kernel(KernelArgs),
    /// Decay rate alpha for a list of gains.
    Table1(Table1Args),
    /// Run the finite-difference scheme and write the trace.
    Simulate(SimulateArgs),
    /// Eigenvalues of the two-controller closed loop.
    Spectral(SpectralArgs),
    /// Kernel build plus simulation for each gain, in parallel.
    Sweep(SweepArgs),
    /// Round-trip the discrete transform on fixed test functions.
    TransformCheck(TransformArgs),
}

#[derive(Debug, Clone, Args)]
pub struct KernelOpts {
    #[arg(long)]
    pub length: Option<f64>,
    /// Relative stopping tolerance of the series.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SchemeOpts {
    /// Number of cells J.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// controlled2, controlled1, uncontrolled or nonlinear_controlled2.
    #[arg(long)]
    pub mode: Option<String>,
    /// Fixed number of succession iterations (adaptive when absent).
    #[arg(long)]
    pub m_succession: Option<usize>,
    /// one_sided or centered.
    #[arg(long)]
    pub stencil: Option<String>,
    /// one_minus_cos, gaussian or zero.
    #[arg(long)]
    pub u0: Option<String>,
    #[arg(long)]
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub kernel: KernelOpts,
    /// Also estimate the inverse-transform norm at this J and report beta.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct Table1Args {
    /// Comma-separated gains.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[command(flatten)]
    pub kernel: KernelOpts,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub kernel: KernelOpts,
    #[command(flatten)]
    pub scheme: SchemeOpts,
    /// Write a snapshot CSV every this many steps (needs --out).
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    #[arg(long)]
    pub fit_start: Option<f64>,
    #[arg(long)]
    pub fit_end: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SpectralArgs {
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Newton step tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[command(flatten)]
    pub kernel: KernelOpts,
    #[command(flatten)]
    pub scheme: SchemeOpts,
    #[arg(long)]
    pub fit_start: Option<f64>,
    #[arg(long)]
    pub fit_end: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub kernel: KernelOpts,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub m_succession: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Kernel(a) => commands::kernel(&cfg, a),
        Command::Table1(a) => commands::table1(&cfg, a),
        Command::Simulate(a) => commands::simulate(&cfg, a),
        Command::Spectral(a) => commands::spectral(&cfg, a),
        Command::Sweep(a) => commands::sweep(&cfg, a),
        Command::TransformCheck(a) => commands::transform_check(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
