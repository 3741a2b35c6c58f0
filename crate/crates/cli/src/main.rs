use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use neuroprep_cli::bench::ModelKind;
use neuroprep_cli::commands;
use neuroprep_cli::config::load_pipeline_config;

/// Slice-level brain-scan preprocessing and classifier benchmark.
#[derive(Parser)]
#[command(name = "neuroprep", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic two-class NIfTI volumes.
    GenPhantom {
        #[arg(long, default_value_t = 50)]
        n_per_class: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory; volumes land in <out>/AD and <out>/NL.
        #[arg(long)]
        out: PathBuf,
    },
    /// Slice volumes to quantized PGM images, no preprocessing.
    Convert {
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slice volumes and run the preprocessing pipeline.
    Preprocess {
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pipeline config TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one model on a directory of PGM slices.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        /// Where to write the model file.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-epoch history CSV (cnn only).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Evaluate a saved model on a directory of PGM slices.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Metrics CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train each model on raw and preprocessed slices and compare.
    Bench {
        /// Directory of NIfTI volumes in the AD/NL layout.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "rf,gbt,cnn")]
        models: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        /// Output directory for bench.csv and friends.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a training-history CSV as an SVG accuracy/loss chart.
    Plot {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenPhantom { n_per_class, seed, out } => {
            commands::gen_phantom(n_per_class, seed, &out)
        }
        Command::Convert { in_dir, out } => commands::convert(&in_dir, &out),
        Command::Preprocess { in_dir, out, config } => {
            load_pipeline_config(config.as_deref())
                .and_then(|cfg| commands::preprocess(&in_dir, &out, &cfg))
        }
        Command::Train { model, data, seed, epochs, out, history } => {
            commands::train(model, &data, seed, epochs, &out, history.as_deref())
        }
        Command::Eval { model, data, out } => commands::eval(&model, &data, out.as_deref()),
        Command::Bench { data, models, seed, config, epochs, out } => {
            commands::parse_models(&models).and_then(|models| {
                load_pipeline_config(config.as_deref())
                    .and_then(|cfg| commands::bench(&data, &models, seed, &cfg, epochs, &out))
            })
        }
        Command::Plot { history, out } => commands::plot(&history, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
