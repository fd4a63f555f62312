use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pmelab::cli::{cmd_check, cmd_oracle, cmd_simulate, cmd_sweep, CliError, Overrides};

#[derive(Parser)]
#[command(name = "pmelab", version, about = "Porous medium equation with reaction: runs, sweeps and limit oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment file (`key = value` lines).
    config: PathBuf,
    /// Output directory (overrides `outdir`).
    #[arg(long)]
    outdir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural assumptions and print a pass/fail table.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Run one stiffness exponent.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Exponent (default: first of `m_list`).
        #[arg(long)]
        m: Option<f64>,
        /// Run even if the assumption check fails.
        #[arg(long)]
        force: bool,
    },
    /// Run every exponent of `m_list` and compare them.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Concurrent runs (default: number of exponents).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Limit-problem reference profile and front.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Sweep directory to compare fronts against.
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    let result: Result<bool, CliError> = match cli.command {
        Command::Check { common } => {
            let ov = Overrides { outdir: common.outdir, ..Default::default() };
            cmd_check(&common.config, &ov, &mut stdout).map(|r| r.all_passed())
        }
        Command::Simulate { common, m, force } => {
            let ov = Overrides { outdir: common.outdir, m, force, ..Default::default() };
            cmd_simulate(&common.config, &ov, &mut stdout).map(|_| true)
        }
        Command::Sweep { common, jobs, force } => {
            let ov = Overrides { outdir: common.outdir, jobs, force, ..Default::default() };
            cmd_sweep(&common.config, &ov, &mut stdout).map(|_| true)
        }
        Command::Oracle { common, sweep } => {
            let ov = Overrides { outdir: common.outdir, sweep, ..Default::default() };
            cmd_oracle(&common.config, &ov, &mut stdout).map(|_| true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
