//! `dirmech` command-line front end.
//!
//! Exit status: 0 success, 1 invalid input or I/O failure, 2 a checked
//! property failed (the artifact is still written), 64 bad flags.

mod artifact;
mod commands;

use artifact::Format;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "dirmech", version, about = "Dirichlet-copula dependent rounding, online matching, scheduling and certification")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Root seed; every random stream derives from it
    #[arg(long, global = true, env = "DIRMECH_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo trials (each subcommand has its own default)
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Output format (csv for tables, json for structured reports)
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file; stdout when absent or "-"
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Uniformity and negative-covariance checks of the Dirichlet copula
    CopulaTest(commands::CopulaTestArgs),
    /// Dependent rounding of a bipartite instance, with moment statistics
    Round(commands::RoundArgs),
    /// Series bounds and a Monte Carlo estimate of the correlation function
    Psi(commands::PsiArgs),
    /// Online matching: a traced run or match-frequency statistics
    Odrs(commands::OdrsArgs),
    /// Clustering-and-rounding scheduler with the Z versus LB report
    Schedule(commands::ScheduleArgs),
    /// Box-partition certificate for the online correlation factor
    Certify(commands::CertifyArgs),
    /// Numerical checks of the scheduling analysis constants
    Constants(commands::ConstantsArgs),
    /// Instance generators
    #[command(subcommand)]
    Gen(commands::GenCommand),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(64),
            };
        }
    };
    let threads = cli.common.threads;
    match dirmech::exec::with_threads(threads, || commands::dispatch(&cli)) {
        Ok(commands::Status::Pass) => ExitCode::SUCCESS,
        Ok(commands::Status::Fail(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
