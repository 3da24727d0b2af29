mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Ctx;
use config::Knobs;

#[derive(Parser)]
#[command(name = "sna", version, about = "Strange non-chaotic attractors of pinched skew products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hypothesis ledger for the given parameters
    Check(Knobs),
    /// Iterated upper bounding lines φ_n on a grid
    Graph(Knobs),
    /// Dimension, cover-cost and variation estimates
    Dims(Knobs),
    /// Lyapunov exponents of φ_n, the zero line or an orbit
    Lyapunov(Knobs),
    /// Ω-partition census or classification of one point
    Partition(Knobs),
    /// Lower bounds for φ⁺ away from the peak balls
    Pinched(Knobs),
    /// Empirical checks of the approximation bounds
    Verify(Knobs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] sna_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 2,
            _ => 1,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SNA_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("SNA_THREADS = `{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("SNA_THREADS: {e}")))
}

type Handler = fn(&mut Ctx) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (name, flags, f): (&'static str, Knobs, Handler) = match cli.command {
        Command::Check(k) => ("check", k, commands::check),
        Command::Graph(k) => ("graph", k, commands::graph),
        Command::Dims(k) => ("dims", k, commands::dims),
        Command::Lyapunov(k) => ("lyapunov", k, commands::lyapunov),
        Command::Partition(k) => ("partition", k, commands::partition),
        Command::Pinched(k) => ("pinched", k, commands::pinched),
        Command::Verify(k) => ("verify", k, commands::verify),
    };
    let knobs = config::merge(name, &flags)?;
    let mut ctx = Ctx::new(name, knobs);
    f(&mut ctx)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = e.print();
                return ExitCode::from(1);
            }
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("sna: {}", line.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sna: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
