//! `hivesig` — beehive audio classification pipeline.
//!
//! Exit codes: 0 success, 2 usage/input error, 3 data/shape error,
//! 4 pipeline-order error.

mod cmd_compress;
mod cmd_data;
mod cmd_report;
mod cmd_train;
mod config;
mod error;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::cmd_train::Arch;
use crate::config::PipelineConfig;
use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "hivesig", version, about = "Beehive audio classification: features, training, compression")]
struct Cli {
    /// TOML pipeline configuration; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). `--threads 1` is bitwise reproducible.
    #[arg(long, global = true, env = "HIVESIG_THREADS")]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic four-class tone dataset as WAV files.
    Synth {
        /// Destination root (default: `dataset_root`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a class-per-directory WAV dataset into TFR1 images and a manifest.
    Featurize {
        /// Dataset root (default: `dataset_root`).
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Feature directory (default: `<output_dir>/features`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the teacher or student network on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "teacher")]
        arch: Arch,
        /// Artifact base name (default: the architecture name).
        #[arg(long)]
        name: Option<String>,
    },
    /// Apply compression steps in sequence, writing one checkpoint per step.
    Compress {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Needed for fine-tuning, distillation, calibration and stage metrics.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "prune_neurons,prune_layers,distill,quantize")]
        steps: String,
        /// Artifact base name (default: the model file stem).
        #[arg(long)]
        name: Option<String>,
    },
    /// Classification report and confusion matrix for a model on a manifest.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Median forward-pass latency over a manifest.
    Benchmark {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// At least 3 (default: `benchmark.runs`).
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        name: Option<String>,
    },
    /// Classify one WAV file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        /// Print a JSON document instead of plain lines.
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Synth { out } => cmd_data::synth(&cfg, out).map(drop),
        Command::Featurize { input, out } => cmd_data::featurize(&cfg, input, out).map(drop),
        Command::Train { manifest, arch, name } => cmd_train::train_cmd(&cfg, &manifest, arch, name).map(drop),
        Command::Compress { model, manifest, steps, name } => {
            cmd_compress::compress_cmd(&cfg, model.as_deref(), manifest.as_deref(), &steps, name).map(drop)
        }
        Command::Evaluate { model, manifest, name } => {
            cmd_report::evaluate_cmd(&cfg, &model, &manifest, name).map(drop)
        }
        Command::Benchmark { model, manifest, runs, name } => {
            cmd_report::benchmark_cmd(&cfg, &model, &manifest, runs, name).map(drop)
        }
        Command::Predict { model, wav, json } => cmd_report::predict_cmd(&cfg, &model, &wav, json).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global() {
        log::warn!("thread pool already initialized: {e}");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
