//! `maooam`: command-line driver for the coupled ocean-atmosphere model.

mod commands;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maooam_core::experiments::ParamName;
use maooam_core::io::Emit;

#[derive(Parser)]
#[command(name = "maooam", version, about = "Coupled QG ocean-atmosphere model")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Parameter file (TOML); omitted keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub params: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "KxN/MxP")]
    pub resolution: Option<String>,
    /// Series encoding.
    #[arg(long, global = true, default_value = "ndjson")]
    pub emit: Emit,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Run length, with an optional s, h, d or y suffix (default seconds).
    #[arg(long, global = true, value_parser = setup::parse_duration, value_name = "DURATION")]
    pub t_end: Option<f64>,
    /// Override one key, e.g. `--set physical.eps_a=0.8`; repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub sets: Vec<String>,
    /// Disable the data-parallel kernels.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the model and write a diagnostic series.
    Simulate {
        /// Resume from a checkpoint; the series is appended.
        #[arg(long, value_name = "CKPT")]
        restart: Option<PathBuf>,
    },
    /// Uniform radiative equilibrium temperatures.
    Equilibrium {
        /// Scalar atmosphere shortwave, W m^-2 (requires --ro).
        #[arg(long, requires = "ro")]
        ra: Option<f64>,
        /// Scalar ocean shortwave, W m^-2 (requires --ra).
        #[arg(long, requires = "ra")]
        ro: Option<f64>,
        #[arg(long)]
        eps_a: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Derived constants, absorbing-set and determining-modes bounds.
    Constants {
        /// Bound E on the forcing work, J m^-2 s^-1 in weak-norm units.
        #[arg(long, default_value_t = 1e16)]
        e_bound: f64,
        /// C(rho); defaults to the squared absorbing radius.
        #[arg(long)]
        c_rho: Option<f64>,
    },
    /// Lyapunov spectrum by the tangent-linear model.
    Tlm {
        #[arg(long)]
        n_vectors: Option<usize>,
        #[arg(long, value_parser = setup::parse_duration)]
        horizon: Option<f64>,
        /// Also average the full Jacobian trace.
        #[arg(long)]
        trace: bool,
    },
    /// Master/slave synchronization by spectral nudging.
    Sync {
        #[arg(long)]
        n_obs: Option<usize>,
        /// Relaxation rate, s^-1.
        #[arg(long)]
        gamma: Option<f64>,
        /// Search the smallest sufficient n_obs first.
        #[arg(long)]
        bisect: bool,
        #[arg(long)]
        no_control: bool,
        #[arg(long, value_parser = setup::parse_duration)]
        horizon: Option<f64>,
    },
    /// Twin runs from nearby initial conditions.
    Continuity {
        #[arg(long)]
        relative_size: Option<f64>,
        #[arg(long, value_parser = setup::parse_duration)]
        horizon: Option<f64>,
    },
    /// Twin runs differing in one parameter.
    ParamSweep {
        #[arg(long)]
        param: Option<ParamName>,
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        #[arg(long, value_parser = setup::parse_duration)]
        horizon: Option<f64>,
    },
    /// Galerkin convergence over a resolution ladder.
    Converge {
        #[arg(long, value_delimiter = ',')]
        ladder: Vec<String>,
        #[arg(long, value_parser = setup::parse_duration)]
        horizon: Option<f64>,
    },
    /// Self-check the kernels against pointwise quadrature.
    Validate {
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(&cli.global, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::from(e.exit_code())
        }
    }
}
