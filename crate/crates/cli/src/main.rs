//! Command-line front end: mesh generation, forward solves, synthetic data,
//! gradient verification, and calibration, all driven by JSON experiment
//! configurations.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Workspace;
use epcal_core::optimizer::GradientMethod;
use epcal_core::Error;

#[derive(Parser)]
#[command(
    name = "epcal",
    about = "Calibration of finite-deformation elastoplastic constitutive parameters from full-field surface displacement data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Fd,
    Fs,
    Adjoint,
}

impl From<MethodArg> for GradientMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Fd => GradientMethod::Fd,
            MethodArg::Fs => GradientMethod::Fs,
            MethodArg::Adjoint => GradientMethod::Adjoint,
        }
    }
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for element loops (currently runs serially; accepted
    /// for interface stability).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the mesh and write it with a summary.
    Mesh(CommonArgs),
    /// Solve the forward problem at beta_true and write per-step fields.
    Forward(CommonArgs),
    /// Generate (possibly noisy) synthetic surface displacement data.
    Synth(CommonArgs),
    /// Sweep finite-difference step sizes against both AD gradients.
    Gradcheck(CommonArgs),
    /// Recover material parameters from the data by bound-constrained
    /// minimization.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        /// Gradient engine; overrides the configuration.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
}

fn dispatch(cli: Cli) -> epcal_core::Result<()> {
    match cli.command {
        Command::Mesh(a) => commands::cmd_mesh(&Workspace::new(&a.config, &a.out, None)?),
        Command::Forward(a) => commands::cmd_forward(&Workspace::new(&a.config, &a.out, None)?),
        Command::Synth(a) => commands::cmd_synth(&Workspace::new(&a.config, &a.out, None)?),
        Command::Gradcheck(a) => commands::cmd_gradcheck(&Workspace::new(&a.config, &a.out, None)?),
        Command::Calibrate { common, method } => commands::cmd_calibrate(&Workspace::new(
            &common.config,
            &common.out,
            method.map(GradientMethod::from),
        )?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
