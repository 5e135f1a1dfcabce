//! Experiment driver: parse a JSON config, run the requested stage of the
//! pipeline, and write reports and plot-ready data.
//!
//! Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 tolerance
//! exceeded.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mproj_core::error::CoreError;

#[derive(Parser)]
#[command(
    name = "mproj",
    version,
    about = "Markovian projection toolkit: simulate, project, solve the forward equation, verify marginals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = "mproj_out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores). Outputs do not
    /// depend on this.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the source model: ensemble dump plus per-checkpoint moments.
    Simulate(CommonArgs),
    /// Estimate projected coefficients from an ensemble (or fresh paths).
    Project {
        #[command(flatten)]
        common: CommonArgs,
        /// Re-use a previously written ensemble dump instead of simulating.
        #[arg(long, value_name = "PATH")]
        ensemble: Option<PathBuf>,
    },
    /// Evolve the forward equation from gridded coefficients.
    Pide {
        #[command(flatten)]
        common: CommonArgs,
        /// Coefficient CSV (computed from the config when absent).
        #[arg(long, value_name = "PATH")]
        coefficients: Option<PathBuf>,
        /// Jump kernel CSV accompanying --coefficients.
        #[arg(long, value_name = "PATH")]
        kernel: Option<PathBuf>,
    },
    /// Full pipeline: simulate, project, verify, report.
    Mimic(CommonArgs),
    /// Audit the standing assumptions on the configured model.
    Audit(CommonArgs),
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::Config(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&CommonArgs, Box<dyn FnOnce(&commands::Ctx) -> commands::CmdResult>) =
        match &cli.command {
            Command::Simulate(c) => (c, Box::new(commands::run_simulate)),
            Command::Project { common, ensemble } => {
                let ens = ensemble.clone();
                (common, Box::new(move |ctx| commands::run_project(ctx, ens)))
            }
            Command::Pide {
                common,
                coefficients,
                kernel,
            } => {
                let c = coefficients.clone();
                let k = kernel.clone();
                (common, Box::new(move |ctx| commands::run_pide(ctx, c, k)))
            }
            Command::Mimic(c) => (c, Box::new(commands::run_mimic_cmd)),
            Command::Audit(c) => (c, Box::new(commands::run_audit)),
        };

    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    let ctx = match commands::Ctx::load(&common.config, &common.out, common.seed) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e));
        }
    };

    match run(&ctx) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            if let Err(e) = manifest::write_manifest(&ctx, &outcome) {
                eprintln!("error: manifest: {e}");
                return ExitCode::from(3);
            }
            if outcome.tolerance_exceeded {
                eprintln!("tolerance exceeded; see report");
                return ExitCode::from(4);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
