//! `tooldag`: oracles, edge probes and the control battery over agent
//! trajectory corpora.

mod commands;
mod config;
mod corpus;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::Overrides;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "tooldag", version, about = "Tool-call dependency oracles and edge probes")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON file with configuration values; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomised step (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Parent directory of run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build dependency graphs from a trajectory log.
    Oracle(commands::oracle::OracleArgs),
    /// LOGO edge probe with intervals, baseline gap, layers and strata.
    Probe(commands::probe::ProbeArgs),
    /// Permutation control, baselines and random-init comparison.
    Controls(commands::controls::ControlsArgs),
    /// Threshold out-of-fold scores into DAGs and audit them.
    Decode(commands::decode::DecodeArgs),
    /// Build counterfactual logs, or compare a clean and counterpart corpus.
    Counterfactual(commands::counterfactual::CounterfactualArgs),
    /// Feature-level patching over minimal pairs.
    Patch(commands::patch::PatchArgs),
    /// Direct, transitive and gap rows across several corpora.
    Sweep(commands::sweep::SweepArgs),
    /// Write a synthetic corpus with known structure.
    Synth(commands::synth::SynthArgs),
}

/// Resolve the config, create the run directory and run the command in it.
fn execute<C, R>(name: &str, global: &Global, flags: Overrides, run: R) -> CliResult<PathBuf>
where
    C: Serialize + DeserializeOwned + Default,
    R: FnOnce(&C, &Path) -> CliResult<()>,
{
    let cfg: C = config::resolve(global.config.as_deref(), &flags.into_value())?;
    let dir = config::run_dir(&global.out, name, &cfg)?;
    log::info!("{name}: writing to {}", dir.display());
    run(&cfg, &dir)?;
    Ok(dir)
}

fn dispatch(cli: &Cli) -> CliResult<PathBuf> {
    use commands::*;
    let g = &cli.global;
    let seed = g.seed;
    match &cli.command {
        Command::Oracle(a) => execute(oracle::NAME, g, a.overrides(), oracle::run),
        Command::Probe(a) => execute(probe::NAME, g, a.overrides(seed), probe::run),
        Command::Controls(a) => execute(controls::NAME, g, a.overrides(seed), controls::run),
        Command::Decode(a) => execute(decode::NAME, g, a.overrides(seed), decode::run),
        Command::Counterfactual(a) => execute(counterfactual::NAME, g, a.overrides(seed), counterfactual::run),
        Command::Patch(a) => execute(patch::NAME, g, a.overrides(seed), patch::run),
        Command::Sweep(a) => execute(sweep::NAME, g, a.overrides(seed)?, sweep::run),
        Command::Synth(a) => execute(synth::NAME, g, a.overrides(seed)?, synth::run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            eprintln!("{}", CliError::Usage("--jobs must be at least 1".into()));
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("{}", CliError::Internal(format!("thread pool: {e}")));
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("tooldag: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
