mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Failure;

#[derive(Debug, Parser)]
#[command(name = "krein-forge", version, about = "Kreĭn resolvent identity checks and renormalization experiments")]
pub struct Cli {
    /// JSON configuration for the command
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// seed for random instances
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// directory for CSV and JSON reports
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// overrides the pass/fail tolerance of the command
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// worker threads
    #[arg(long, global = true, env = "KREIN_FORGE_JOBS")]
    pub jobs: Option<usize>,
    /// corrupts the check instances (negative control)
    #[arg(long, global = true, hide = true)]
    pub inject_fault: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// run the identity battery on seeded random instances
    Check,
    /// regular-approximation scan (exact, grisem, shrinking or hz schedule)
    Scan,
    /// point interaction on a periodic box: bound state against −α²/4
    Delta1d,
    /// truncated Nelson model: cutoff, counterterm and ablation
    Nelson,
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Config("jobs: must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Run(e.to_string()))?;
    }
    if let Some(t) = cli.tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::Config(format!("tolerance: must be positive, got {t}")));
        }
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| Failure::Run(format!("{}: {e}", cli.out.display())))?;
    match cli.command {
        Command::Check => commands::check(cli),
        Command::Scan => commands::scan(cli),
        Command::Delta1d => commands::delta1d(cli),
        Command::Nelson => commands::nelson(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("krein-forge: {}", f.message());
            ExitCode::from(f.code() as u8)
        }
    }
}
