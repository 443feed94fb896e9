//! Command-line frontend: single-point simulation, transient traces,
//! parameter sweeps, and trade-off fits, all emitting data files plus a
//! run manifest.
//!
//! Exit codes: 0 success, 1 usage or malformed input, 2 physically rejected
//! parameter point (reason on standard error).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod manifest;

use qdet_core::Error as CoreError;

#[derive(Parser)]
#[command(
    name = "qdet",
    version,
    about = "Autonomous quantum-detector simulator: metrics, traces, sweeps, and fits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Detector parameters supplied inline; every flag matches a parameter-file
/// key. Flags override values read from --config.
#[derive(Args, Debug, Clone, Default)]
pub struct ParamFlags {
    /// Target-particle energy (the energy unit).
    #[arg(long = "E_S")]
    pub e_s: Option<f64>,
    /// First gain-medium gap.
    #[arg(long = "E_G")]
    pub e_g: Option<f64>,
    /// Cold-qubit gap ratio, E_C = f_EC * E_G.
    #[arg(long = "f_EC")]
    pub f_ec: Option<f64>,
    /// Cold-bath temperature.
    #[arg(long = "T_C")]
    pub t_c: Option<f64>,
    /// Virtual temperature (negative in the engine regime).
    #[arg(long = "T_V", allow_negative_numbers = true)]
    pub t_v: Option<f64>,
    /// Machine-gain coupling.
    #[arg(long = "g_MG")]
    pub g_mg: Option<f64>,
    /// System-gain coupling.
    #[arg(long = "g_SG")]
    pub g_sg: Option<f64>,
    /// Machine-bath dissipation prefactor.
    #[arg(long = "gamma_M")]
    pub gamma_m: Option<f64>,
    /// Gain-medium thermalization prefactor.
    #[arg(long = "gamma_G")]
    pub gamma_g: Option<f64>,
    /// Detection-channel prefactor.
    #[arg(long = "gamma_D")]
    pub gamma_d: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum JitterConvention {
    /// Variance of the normalized excess current (time squared).
    Variance,
    /// Root-mean-square timing spread (time).
    Rms,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FitModelArg {
    Inverse,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the full metrics report for one parameter point.
    Simulate {
        /// Parameter file (flat key = value TOML, keys as in --help flags).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        params: ParamFlags,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also dump the assembled Liouvillian and spectrum (binary with a
        /// textual header) to this path.
        #[arg(long)]
        dump_liouvillian: Option<PathBuf>,
    },
    /// Emit the transient detection-event trace at one parameter point.
    Trace {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Trace window as a multiple of the dead time.
        #[arg(long = "t-max-mult", default_value_t = 30.0)]
        t_max_mult: f64,
        /// Number of grid points.
        #[arg(long, default_value_t = 400)]
        grid: usize,
    },
    /// Run a parameter sweep from a config file or a named preset.
    Sweep {
        /// Sweep configuration file (TOML).
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Named campaign: fig3, fig4, fig5, appD, appE.
        #[arg(long)]
        preset: Option<String>,
        /// Sample count (overrides the preset default of 5000).
        #[arg(long)]
        n: Option<usize>,
        /// RNG seed (overrides config/preset).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit a trade-off law to columns of a records file.
    Fit {
        /// Records file produced by `qdet sweep`.
        #[arg(long)]
        records: PathBuf,
        /// Model: y = a/x or y = a x + b.
        #[arg(long, value_enum)]
        model: FitModelArg,
        /// Column providing x values.
        #[arg(long)]
        x: String,
        /// Column providing y values.
        #[arg(long)]
        y: String,
        /// Numeric range filter, e.g. "0.72<eta_D<0.7358"; repeatable.
        #[arg(long)]
        filter: Vec<String>,
        /// Which column the alias "jitter" resolves to.
        #[arg(long = "jitter-convention", value_enum, default_value_t = JitterConvention::Rms)]
        jitter_convention: JitterConvention,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    // Worker-level parallelism only; keep the BLAS single-threaded.
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            params,
            out,
            dump_liouvillian,
        } => commands::simulate(config, params, out, dump_liouvillian),
        Command::Trace {
            config,
            params,
            out,
            t_max_mult,
            grid,
        } => commands::trace(config, params, out, t_max_mult, grid),
        Command::Sweep {
            config,
            preset,
            n,
            seed,
            jobs,
            out,
        } => commands::sweep(config, preset, n, seed, jobs, out),
        Command::Fit {
            records,
            model,
            x,
            y,
            filter,
            jitter_convention,
            out,
        } => commands::fit(records, model, x, y, filter, jitter_convention, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Physical rejections exit with 2, everything else with 1.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        match core {
            CoreError::OutOfRegime { .. }
            | CoreError::DegenerateSteadyState { .. }
            | CoreError::NoSteadyState { .. }
            | CoreError::IllConditioned { .. }
            | CoreError::DivergentIntegral { .. } => return 2,
            _ => return 1,
        }
    }
    1
}
