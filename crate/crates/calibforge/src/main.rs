use std::path::PathBuf;
use std::process::ExitCode;

use calibforge::commands::{self, TrainRequest};
use calibforge::config::{ChannelsArg, LabelKind, PipelineConfig};
use calibforge::error::{CliError, EXIT_INTERNAL, EXIT_USER};
use calibforge_core::labeling::CropMargin;
use clap::{Parser, Subcommand};
use serde::Serialize;

/// Robot-driven automatic label generation for RGBD keypoint datasets.
///
/// Results are printed to stdout as JSON; progress goes to stderr.
/// Set CALIBFORGE_LOG (error, warn, info, debug) to change the verbosity.
#[derive(Parser)]
#[command(name = "calibforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render an acquisition with ground truth, calibration pose pairs and a reference annotation.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configuration's root seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve AX = YB on a seeded subset of pose pairs and evaluate on the rest.
    Calibrate {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 40)]
        n_cal: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        translation_weight: f64,
        /// Where to write the solved transforms.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Propagate the reference annotation to every frame and export a cropped dataset.
    Label {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        annotation: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = CropMargin::default().u)]
        margin_u: usize,
        #[arg(long, default_value_t = CropMargin::default().v)]
        margin_v: usize,
    },
    /// Train the regressor on a labeled dataset.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "rgb")]
        channels: ChannelsArg,
        #[arg(long, value_enum, default_value = "2d")]
        labels: LabelKind,
        #[arg(long)]
        out: PathBuf,
        /// Training hyperparameters are read from this file when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Predict labels for every frame of a manifest.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predictions with targets (MAE, rMAE, aCC).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value = "2d")]
        labels: LabelKind,
        /// Absolute error per coordinate instead of per-point distance.
        #[arg(long)]
        per_coordinate: bool,
    },
    /// Run simulate, calibrate, label, train, predict and eval in one output directory.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> Result<PipelineConfig, CliError> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, seed, out } => emit(&commands::simulate(&load_config(config.as_ref(), seed)?, &out)?),
        Command::Calibrate { pairs, n_cal, seed, translation_weight, out } => {
            emit(&commands::calibrate(&pairs, n_cal, seed, translation_weight, out.as_deref())?)
        }
        Command::Label { frames, annotation, calibration, out, margin_u, margin_v } => {
            emit(&commands::label(&frames, &annotation, &calibration, &out, CropMargin { u: margin_u, v: margin_v })?)
        }
        Command::Train { manifest, channels, labels, out, config, seed, epochs } => {
            let mut cfg = load_config(config.as_ref(), seed)?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            cfg.validate()?;
            emit(&commands::train(&TrainRequest {
                manifest: &manifest,
                out: &out,
                channels: channels.into(),
                labels,
                input_size: cfg.input_size,
                val_fraction: cfg.val_fraction,
                seed: cfg.seed,
                train: cfg.train_config(),
            })?)
        }
        Command::Predict { model, manifest, out } => emit(&commands::predict(&model, &manifest, &out)?),
        Command::Eval { pred, target, labels, per_coordinate } => emit(&commands::eval(&pred, &target, labels, per_coordinate)?),
        Command::Pipeline { config, seed, out } => emit(&commands::pipeline(&load_config(config.as_ref(), seed)?, &out)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CALIBFORGE_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            debug_assert!(code == EXIT_USER || code == EXIT_INTERNAL);
            ExitCode::from(code as u8)
        }
    }
}
