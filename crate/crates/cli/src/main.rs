use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod input;
mod output;
mod verify;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CFKIT_OUT_DIR";

#[derive(Parser)]
#[command(name = "cfkit", version, about = "Compute-and-forward rate regions, integer search and lattice simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegionMode {
    Para,
    Succ,
    Asc,
    Mac,
    Sic,
    Compound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Identities,
    Lattice,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Rate region boxes (JSON) and two-user boundary (CSV).
    Region {
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: RegionMode,
        /// Output directory; defaults to $CFKIT_OUT_DIR or the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Entry bound for the assignment search in compound mode.
        #[arg(long)]
        bound: Option<i64>,
    },
    /// Dominant integer coefficient matrix with per-row noise variances.
    Search {
        input: PathBuf,
        /// `auto` for the provable entry bound, or a box radius.
        #[arg(long, default_value = "auto")]
        bound: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parallel and successive multiple-access rate assignments with capacity gaps.
    Mac {
        input: PathBuf,
        /// Entry bound for the unimodular search; chosen automatically when absent.
        #[arg(long)]
        bound: Option<i64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo campaign from a JSON configuration.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized identity checks and exhaustive lattice checks.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random instances in the identities suite.
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Blocklength for the lattice suite.
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Prime for the lattice suite.
        #[arg(long, default_value_t = 3)]
        p: u64,
        /// Channel, coefficient matrix and mapping to check for admissibility.
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// Simulation CSV whose error rates must grow with the noise level.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Region { input, mode, out, bound } => commands::region(&input, mode, &out_dir(out), bound),
        Command::Search { input, bound, out } => commands::search(&input, &bound, &out_dir(out)),
        Command::Mac { input, bound, out } => commands::mac(&input, bound, &out_dir(out)),
        Command::Simulate { config, out } => commands::simulate(&config, &out_dir(out)),
        Command::Verify { suite, seed, instances, n, p, fixture, report, out } => {
            let opts = verify::Options { suite, seed, instances, n, p, fixture, report };
            verify::run(&opts, &out_dir(out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
