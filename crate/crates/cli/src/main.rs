//! `asymflow`: runs minimizing-movement experiments described by a TOML
//! configuration.

mod commands;
mod config;
mod output;

use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Experiment;

#[derive(Parser)]
#[command(name = "asymflow", version, about = "Gradient flows on asymmetric metric spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the step-size sweep and the reference integrator; write the
    /// trajectories and a JSON summary.
    Run(Args),
    /// Run the property checks and print a pass/fail table.
    Verify(Args),
    /// Tabulate the error against the reference for every step size.
    Sweep(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<NonZeroUsize>,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory of the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ASYMFLOW_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (Command::Run(args) | Command::Verify(args) | Command::Sweep(args)) = &cli.command;
    if let Some(jobs) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.get()).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = Experiment::load(&args.config, args.seed, args.out.clone()).and_then(|exp| match cli.command {
        Command::Run(_) => commands::run(&exp),
        Command::Verify(_) => commands::verify(&exp),
        Command::Sweep(_) => commands::sweep(&exp),
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
