use std::path::PathBuf;
use std::process::ExitCode;

use bioprofile_cli::{cmd_generate, cmd_interpret, cmd_study, CliError, ExperimentConfig, Overrides};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bioprofile", version, about = "Passenger non-compliance risk profiling study")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Master seed: the generator seed for `generate`, the study seed otherwise.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic passenger dataset and its generating probabilities.
    Generate(Common),
    /// Run the cross-validated model comparison.
    Study {
        #[command(flatten)]
        common: Common,
        /// Reuse fold outcomes checkpointed by an earlier run.
        #[arg(long)]
        resume: bool,
    },
    /// Influence and partial-dependence tables for a fitted boosting model.
    Interpret {
        #[command(flatten)]
        common: Common,
        /// Model artifact; defaults to `gbm_full.json` in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Print the default configuration.
    ShowDefaults,
}

fn load(c: &Common) -> Result<ExperimentConfig, CliError> {
    match &c.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn overrides(c: &Common, resume: bool) -> Overrides {
    Overrides { out: c.out.clone(), jobs: c.jobs, seed: c.seed, resume }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(c) => cmd_generate(load(&c)?, &overrides(&c, false)).map(|_| ()),
        Command::Study { common, resume } => cmd_study(load(&common)?, &overrides(&common, resume)).map(|_| ()),
        Command::Interpret { common, model } => cmd_interpret(load(&common)?, &overrides(&common, false), model).map(|_| ()),
        Command::ShowDefaults => {
            print!("{}", ExperimentConfig::default().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
