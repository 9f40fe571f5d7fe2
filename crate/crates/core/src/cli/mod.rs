//! Command-line front end: `simul → lhs → ksimplex → kmcmc → pmcmc → diag`,
//! with every stage reading and writing the files in [`crate::io`].
//!
//! Each run prints one JSON line on stdout and exits with 0 on success, 1 on
//! a usage or input error and 2 on a numerical failure.

mod commands;
mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use plot::emit_plot_data;

use crate::parallel::WORKERS_ENV;
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "plugplay", version, about = "Plug-and-play inference for partially observed Markov models")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Model process document (needs --context and --link too)
    #[arg(long, global = true, requires_all = ["context", "link"])]
    pub process: Option<PathBuf>,
    /// Model context document
    #[arg(long, global = true, requires_all = ["process", "link"])]
    pub context: Option<PathBuf>,
    /// Model link document
    #[arg(long, global = true, requires_all = ["process", "context"])]
    pub link: Option<PathBuf>,
    /// Data CSV (`time,stream,value`); defaults to the one named by the context
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Master seed; every stochastic stage derives its streams from it
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads
    #[arg(short = 'P', long = "workers", global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Relative tolerance of the adaptive integrator
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub rtol: f64,
    /// Absolute tolerance of the adaptive integrator
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub atol: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate data from the model at the context's ground truth (or --theta0)
    Simul(SimulArgs),
    /// Latin hypercube over the prior box, ranked by EKF log-likelihood
    Lhs(LhsArgs),
    /// Nelder–Mead on the deterministic (ODE) likelihood
    Simplex(SimplexArgs),
    /// Nelder–Mead on the EKF likelihood
    Ksimplex(SimplexArgs),
    /// Adaptive MCMC with the EKF likelihood
    Kmcmc(ChainArgs),
    /// Adaptive pseudo-marginal MCMC with the particle filter
    Pmcmc(ChainArgs),
    /// One likelihood evaluation with per-frame diagnostics
    Smc(SmcArgs),
    /// ESS, acceptance, quantiles and histograms from a trace
    Diag(DiagArgs),
}

#[derive(Debug, Args)]
pub struct SimulArgs {
    /// Natural-scale parameters (JSON); defaults to the context's truth
    #[arg(long)]
    pub theta0: Option<PathBuf>,
    /// Euler–Maruyama step (default: a tenth of the smallest reporting gap)
    #[arg(long)]
    pub dt: Option<f64>,
    /// Report expected values without observation noise
    #[arg(long)]
    pub no_noise: bool,
}

#[derive(Debug, Args)]
pub struct LhsArgs {
    /// Number of design points
    #[arg(short = 'm', long, default_value_t = 100)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct SimplexArgs {
    /// Starting point: a theta JSON or an `lhs_ranked.csv` (best row is used)
    #[arg(long)]
    pub theta0: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_f: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_x: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_evals: usize,
    /// Maximize the likelihood alone instead of likelihood + log prior
    #[arg(long)]
    pub no_prior: bool,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Iterations
    #[arg(short = 'M', long, default_value_t = 10_000)]
    pub iterations: usize,
    /// Cooling factor of the scale adaptation
    #[arg(short = 'a', long, default_value_t = 0.999)]
    pub cooling: f64,
    /// Accepted proposals before switching to the empirical covariance
    #[arg(short = 'S', long = "switch", default_value_t = 100)]
    pub switch_after: usize,
    /// Particles (pmcmc only)
    #[arg(short = 'J', long, default_value_t = 1000)]
    pub particles: usize,
    /// Euler–Maruyama step for the particle filter
    #[arg(long)]
    pub dt: Option<f64>,
    /// Starting point (theta JSON, e.g. `theta_map.json`)
    #[arg(long)]
    pub theta0: Option<PathBuf>,
    /// Initial proposal covariance (d×d JSON, transformed space)
    #[arg(long)]
    pub cov0: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Ekf,
    Pf,
}

#[derive(Debug, Args)]
pub struct SmcArgs {
    #[arg(long, value_enum, default_value_t = BackendArg::Pf)]
    pub backend: BackendArg,
    #[arg(short = 'J', long, default_value_t = 1000)]
    pub particles: usize,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Parameters to evaluate at (theta JSON); defaults to the guesses
    #[arg(long)]
    pub theta0: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    /// Trace to summarize
    #[arg(long, default_value = "trace.csv")]
    pub trace: PathBuf,
    /// Histogram bins per parameter
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
}

/// Numerical failures exit with 2, everything else with 1.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence(_)
        | Error::StepUnderflow { .. }
        | Error::Budget { .. }
        | Error::SingularInnovation(_)
        | Error::BadWeights(_)
        | Error::NotEnoughSamples { .. }
        | Error::Degenerate(_) => 2,
        _ => 1,
    }
}

/// Parse `argv` and run the chosen stage. Returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("plugplay: {e}");
            exit_code(&e)
        }
    }
}
