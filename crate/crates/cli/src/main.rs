use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};
use collapse_cli::commands::{cmd_ensemble, cmd_oracle, cmd_report, cmd_run, cmd_verify, ConfigArgs};
use collapse_cli::suites::{Fixture, SUITES};
use collapse_cli::{exit, CliError};

#[derive(Parser)]
#[command(name = "collapse", version, about = "Simulate and verify recursive resampling chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigFlags {
    /// Experiment config (flat TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replaces master_seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides one config key; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigFlags {
    fn into_args(self) -> ConfigArgs {
        ConfigArgs {
            config: self.config,
            seed: self.seed,
            overrides: self.overrides,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write per-generation records for individual trajectories.
    Run {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Worker threads; 0 uses one per core.
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
    },
    /// Aggregate many trajectories into summary statistics.
    Ensemble {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
    },
    /// Exact chain quantities for small pure-resampling configs.
    Oracle {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite.
    Verify {
        #[arg(long, default_value = "all", value_parser = PossibleValuesParser::new(SUITES))]
        suite: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
        /// Sensitivity fixture: bias the resampling step.
        #[arg(long, hide = true)]
        inject_bias: bool,
    },
    /// Print a text report for an ensemble or verify output directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { cfg, out, runs, parallelism } => {
            let m = cmd_run(&cfg.into_args(), &out, runs, parallelism)?;
            println!("wrote {} files to {}", m.outputs.len(), out.display());
        }
        Command::Ensemble { cfg, out, runs, parallelism } => {
            let m = cmd_ensemble(&cfg.into_args(), &out, runs, parallelism)?;
            println!("wrote {} files to {}", m.outputs.len(), out.display());
        }
        Command::Oracle { cfg, out } => {
            let m = cmd_oracle(&cfg.into_args(), &out)?;
            println!("wrote {} files to {}", m.outputs.len(), out.display());
        }
        Command::Verify { suite, out, parallelism, inject_bias } => {
            let fixture = if inject_bias {
                Fixture::BiasedResampling
            } else {
                Fixture::Exact
            };
            let report = cmd_verify(&suite, &out, fixture, parallelism);
            let text = out.join(collapse_cli::commands::VERIFY_TEXT);
            if let Ok(t) = std::fs::read_to_string(text) {
                print!("{t}");
            }
            report?;
        }
        Command::Report { out } => print!("{}", cmd_report(&out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit::VALIDATION as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
