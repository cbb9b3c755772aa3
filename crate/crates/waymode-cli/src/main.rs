//! `waymode` command-line driver.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! data or artifact problems, 3 when training diverges.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use waymode::{Error, Result};

use config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "waymode",
    version,
    about = "Transportation mode inference over GPS trajectories",
    long_about = "Breaks raw GPS streams into trips, builds five-channel fixed-length \
                  segments, trains a library of 1-D convolutional networks, combines them \
                  with voting, fitted weights, or a stacked random forest, and reports \
                  per-class metrics. Outputs are deterministic for fixed seeds."
)]
struct Cli {
    /// TOML pipeline configuration; built-in defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override every seed in the configuration (library master seed and
    /// evaluation split seed).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads; 1 forces fully sequential execution.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Break GPS streams into trips and build the segment dataset.
    Preprocess,
    /// Generate a seeded synthetic labeled GPS CSV.
    Synth {
        /// Trips generated per transportation mode.
        #[arg(long, default_value_t = 50, value_name = "N")]
        trips_per_mode: usize,
        /// Output CSV path; defaults to <output_dir>/synthetic.csv.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Train the base network library on the segment dataset.
    Train,
    /// Fit the configured combination method.
    Ensemble,
    /// Score the held-out test split and write metric reports.
    Evaluate,
    /// Label a GPS CSV with the fitted ensemble.
    Predict {
        /// GPS CSV to label; the mode column is optional and ignored.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Output CSV path; defaults to <output_dir>/predictions.csv.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.library.master_seed = seed;
        cfg.eval.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn setup_jobs(jobs: Option<usize>) -> Result<()> {
    match jobs {
        None => Ok(()),
        Some(0) => Err(Error::config("--jobs must be at least 1")),
        Some(1) => {
            waymode::par::force_sequential(true);
            Ok(())
        }
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("cannot size worker pool: {e}"))),
    }
}

fn run(cli: Cli) -> Result<()> {
    setup_jobs(cli.jobs)?;
    let cfg = effective_config(&cli)?;
    match cli.command {
        Command::Preprocess => commands::cmd_preprocess(&cfg),
        Command::Synth {
            trips_per_mode,
            out,
        } => commands::cmd_synth(&cfg, trips_per_mode, out),
        Command::Train => commands::cmd_train(&cfg),
        Command::Ensemble => commands::cmd_ensemble(&cfg),
        Command::Evaluate => commands::cmd_evaluate(&cfg),
        Command::Predict { input, out } => commands::cmd_predict(&cfg, &input, out),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Divergence(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
