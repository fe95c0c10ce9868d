use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levyscale::error::Error;
use levyscale_cli::commands;
use levyscale_cli::config::{AnalysisConfig, Overrides};

/// Return-distribution analysis pipeline: ingest minute prices (or draw
/// synthetic samples) and emit plot-ready tables for scaling, tail, and
/// convergence studies.
#[derive(Parser, Debug)]
#[command(name = "levyscale", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; flags below override its settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Delimited price file (overrides input.file).
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Session file, one hh:mm-hh:mm per line (overrides calendar.sessions_file).
    #[arg(long, global = true)]
    calendar: Option<PathBuf>,

    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Generator seed (overrides seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Comma-separated horizons in minutes (overrides analysis.dt_ladder).
    #[arg(long, global = true, value_delimiter = ',')]
    dt_ladder: Option<Vec<u32>>,

    /// Drop return windows crossing a lunch/overnight stitch.
    #[arg(long, global = true)]
    exclude_stitch_spanning: bool,

    /// Worker threads (0 = rayon default).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, stitch, and persist a price series with an ingestion report.
    Ingest,
    /// P(0) scaling, regime fits, crossover report, collapsed densities.
    Analyze,
    /// Tail PDFs/CCDFs with power-law and exponential fits.
    Tails,
    /// Moment distance to the standard normal and its convergence speed.
    Converge,
    /// Draw and persist a reproducible synthetic sample.
    Synth,
}

/// 0 success, 1 usage error, 2 data error, 3 numeric/convergence error.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 1,
        Error::Ingestion(_) | Error::DegenerateInput(_) | Error::Io(_) => 2,
        Error::InvalidScaling(_) | Error::NonConvergence { .. } | Error::Overflow(_) => 3,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(path) => AnalysisConfig::load(path)?,
        None => AnalysisConfig::default(),
    };
    let overrides = Overrides {
        input: cli.input.clone(),
        calendar: cli.calendar.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
        dt_ladder: cli.dt_ladder.clone(),
        exclude_stitch_spanning: cli.exclude_stitch_spanning,
        threads: cli.threads,
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;

    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .ok();
    }

    match cli.command {
        Command::Ingest => commands::run_ingest(&cfg),
        Command::Analyze => commands::run_analyze(&cfg),
        Command::Tails => commands::run_tails(&cfg),
        Command::Converge => commands::run_converge(&cfg),
        Command::Synth => commands::run_synth(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too; only true usage errors exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
