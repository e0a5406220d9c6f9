mod config;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "contact-tebd", version, about = "Contact-process TEBD runs, fits and plot data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the engine described by a TOML config for every bond dimension.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit exponents from a finished run directory.
    Analyze {
        #[arg(long)]
        run_dir: PathBuf,
        /// Fit window `lo,hi` in units of 1/gamma (defaults to the run's config).
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
        /// Bootstrap resamples for trajectory runs.
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
    },
    /// Write plot-ready CSVs for one figure.
    Plotdata {
        #[arg(long)]
        run_dir: PathBuf,
        /// observables, entropy_barrier, ent_hist or hpic.
        #[arg(long)]
        figure: String,
        /// Second run directory for paired figures (Heisenberg vs Schrödinger).
        #[arg(long)]
        pair: Option<PathBuf>,
        /// Snapshot times for ent_hist.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 5.0, 10.0])]
        times: Vec<f64>,
    },
    /// Check (or with --write regenerate) the dense-oracle fixture file.
    Fixtures {
        #[arg(long)]
        write: bool,
        #[arg(long, default_value = "crates/core/tests/fixtures/oracle.json")]
        path: PathBuf,
    },
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo > 0.0 && hi > lo) {
        return Err("need 0 < lo < hi".into());
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => commands::run(&config),
        Command::Analyze { run_dir, window, resamples } => {
            commands::analyze(&run_dir, window, resamples)
        }
        Command::Plotdata { run_dir, figure, pair, times } => {
            commands::plotdata(&run_dir, &figure, pair.as_deref(), &times)
        }
        Command::Fixtures { write, path } => commands::fixtures(&path, write),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
