use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use highway_lstm::config::RunConfig;
use highway_lstm::pipeline::{self, PipelineError};

#[derive(Parser)]
#[command(name = "highway-lstm", version, about = "Highway trajectory prediction pipeline")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides `paths.data_root`.
    #[arg(long, global = true, env = "HIGHWAY_LSTM_DATA_ROOT")]
    data_root: Option<PathBuf>,
    /// Overrides `model.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `model.variant`.
    #[arg(long, global = true)]
    variant: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trajectory file.
    Synth,
    /// Parse the raw trajectory file into SI tracks.
    Ingest,
    /// Segment, smooth and extract neighbor features.
    Featurize,
    /// Split vehicles and cut training windows.
    Window,
    /// Train the configured model.
    Train,
    /// Evaluate a checkpoint on the test vehicles.
    Evaluate {
        /// Checkpoint stem; the configured model when omitted.
        #[arg(long)]
        model: Option<String>,
    },
    /// Write per-frame predictions for chosen vehicles.
    Predict {
        #[arg(long)]
        model: Option<String>,
        #[arg(long = "vehicle")]
        vehicles: Vec<u32>,
    },
    /// Select the best models on validation and evaluate their average.
    Bag,
    /// Collect RMSE reports into a summary table.
    Report,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(root) = cli.data_root {
        config.paths.data_root = root;
    }
    if let Some(seed) = cli.seed {
        config.model.seed = seed;
    }
    if let Some(variant) = cli.variant {
        config.model.variant = variant;
    }
    config.validate()?;
    match cli.command {
        Command::Synth => println!("wrote {} records", pipeline::synth(&config)?),
        Command::Ingest => println!("ingested {} records", pipeline::ingest(&config)?),
        Command::Featurize => println!("featurized {} segments", pipeline::featurize(&config)?),
        Command::Window => println!("wrote {} windows", pipeline::window(&config)?),
        Command::Train => println!("saved {}", pipeline::train_stage(&config)?.display()),
        Command::Evaluate { model } => {
            let report = pipeline::evaluate(&config, model.as_deref())?;
            for (i, k) in report.mean.horizons_s.iter().enumerate() {
                println!("{k:>3} s  lateral {:.4} m  speed {:.4} m/s", report.mean.lateral_rmse[i], report.mean.long_speed_rmse[i]);
            }
        }
        Command::Predict { model, vehicles } => {
            println!("wrote {}", pipeline::predict(&config, model.as_deref(), &vehicles)?.display())
        }
        Command::Bag => {
            let outcome = pipeline::bag(&config)?;
            println!("members: {}", outcome.members.join(", "));
        }
        Command::Report => println!("wrote {}", pipeline::report(&config)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code() as u8;
            eprintln!("error: {:#}", anyhow::Error::new(e));
            ExitCode::from(code)
        }
    }
}
