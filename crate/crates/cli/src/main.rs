mod ops;
mod runconfig;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scd2te::Error;

#[derive(Parser)]
#[command(
    name = "scd2te",
    about = "Layered sparse-coding + boosted-tree segmentation of nuclei in microscopy images",
    version
)]
struct Cli {
    /// Master random seed; overrides any seed in the config file (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap; defaults to all available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the manifest's train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// key=value run configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model file to write (default: <output_dir>/model.scd2te).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Training log CSV (default: <out>.train.csv).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score one image with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Min-max normalized 8-bit score map.
        #[arg(long, default_value = "score.pgm")]
        out_score: PathBuf,
        /// Thresholded binary mask.
        #[arg(long, default_value = "mask.pgm")]
        out_mask: PathBuf,
        /// Optional raw f64 score sidecar (width u32, height u32, values).
        #[arg(long)]
        out_raw: Option<PathBuf>,
    },
    /// Score every test entry of a manifest and write the metrics report.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
    /// Train every feature-reuse mode and report per-layer held-out F1.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trace CSV to write (default: <output_dir>/trace.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export per-layer dictionary montages and a text summary.
    Inspect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a synthetic labeled corpus and its manifest.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        train: usize,
        #[arg(long, default_value_t = 4)]
        test: usize,
        #[arg(long, default_value_t = 200)]
        width: usize,
        #[arg(long, default_value_t = 200)]
        height: usize,
        #[arg(long, default_value_t = 34)]
        nuclei: usize,
        #[arg(long, default_value_t = 26)]
        clutter: usize,
        #[arg(long, default_value_t = 0.06)]
        noise: f64,
    },
}

fn run(cli: Cli) -> scd2te::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::invalid_argument(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Train {
            manifest,
            config,
            out,
            log,
        } => ops::cmd_train(&manifest, config.as_deref(), out, log, cli.seed),
        Command::Predict {
            model,
            image,
            out_score,
            out_mask,
            out_raw,
        } => ops::cmd_predict(&model, &image, &out_score, &out_mask, out_raw.as_deref()),
        Command::Evaluate {
            model,
            manifest,
            out,
        } => ops::cmd_evaluate(&model, &manifest, &out),
        Command::Ablate {
            manifest,
            config,
            out,
        } => ops::cmd_ablate(&manifest, config.as_deref(), out, cli.seed),
        Command::Inspect { model, out_dir } => ops::cmd_inspect(&model, &out_dir),
        Command::Synth {
            out_dir,
            train,
            test,
            width,
            height,
            nuclei,
            clutter,
            noise,
        } => ops::cmd_synth(
            &out_dir, train, test, width, height, nuclei, clutter, noise, cli.seed,
        ),
    }
}

/// 0 on success, 2 for configuration and usage mistakes, 1 for everything
/// that failed at runtime.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::Manifest { .. } => 2,
        Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
