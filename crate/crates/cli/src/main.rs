//! `nsum`: generate SBM populations, ingest attributed networks, run
//! replicate-survey simulations, build winner grids and validate the
//! closed-form moments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Failure;

#[derive(Debug, Parser)]
#[command(name = "nsum", version, about = "Network scale-up estimator toolkit")]
struct Cli {
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// JSON config or a previous run's manifest.json. Its values take
    /// precedence over command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a two-block SBM network and write its edge list and labels.
    Generate(commands::GenerateArgs),
    /// Derive candidate probe groups and cases from an attributed network.
    Ingest(commands::IngestArgs),
    /// Run replicate surveys over synthetic or ingested cases.
    Simulate(commands::SimulateArgs),
    /// Evaluate dRpR vs dRpA winner grids from the closed forms.
    Grid(commands::GridArgs),
    /// Check the closed forms and distributional claims by simulation.
    Validate(commands::ValidateArgs),
    /// Summarise a results.csv by degree-ratio band.
    Report(commands::ReportArgs),
}

fn run(cli: Cli) -> Result<(), Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Failure::Param(e.to_string()))?;
    let ctx = config::Context::new(cli.out, cli.threads, cli.config)?;
    pool.install(|| match cli.command {
        Command::Generate(args) => commands::generate(&ctx, args),
        Command::Ingest(args) => commands::ingest(&ctx, args),
        Command::Simulate(args) => commands::simulate(&ctx, args),
        Command::Grid(args) => commands::grid(&ctx, args),
        Command::Validate(args) => commands::validate(&ctx, args),
        Command::Report(args) => commands::report(&ctx, args),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
