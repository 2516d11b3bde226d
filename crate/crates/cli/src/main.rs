//! `fovex`: train the toy classifier, explain its predictions, evaluate
//! attribution methods, and render heatmaps.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid
//! files and configuration), 3 numerical failure (divergence, non-finite
//! gradients).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fovex", version, about = "Foveated-attention visual explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the toy predictor on the synthetic blob-quadrant dataset and
    /// export the held-out split for evaluation.
    Train {
        /// Run configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for weights, log, and the exported dataset.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Overrides the configuration seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a scanpath and attribution map for one image.
    Explain {
        #[arg(long)]
        weights: PathBuf,
        /// Input image (portable graymap or pixmap).
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate an attribution method over a dataset manifest.
    Evaluate {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Attribution method: `fovex` or `random_cam`.
        #[arg(long)]
        method: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-render a stored attribution map, optionally over an image.
    Render {
        /// Attribution map written by `explain` (portable graymap).
        #[arg(long)]
        map: PathBuf,
        /// Base image for the overlay pixmap.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Usage problems (including --help/--version) exit with 1/0.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train { config, out_dir, seed } => commands::train(config, out_dir, seed),
        Command::Explain { weights, image, config, out_dir, seed } => {
            commands::explain(weights, image, config, out_dir, seed)
        }
        Command::Evaluate { weights, manifest, method, config, out_dir, seed } => {
            commands::evaluate(weights, manifest, &method, config, out_dir, seed)
        }
        Command::Render { map, image, out_dir } => commands::render(map, image, out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
