//! `gdca` — train, run and evaluate the ×4 super-resolution model.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gdca_cli::commands;

#[derive(Parser)]
#[command(name = "gdca", about = "GAN-based ×4 single-image super resolution")]
struct Cli {
    /// Override the seed from the config file
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print the fully resolved configuration and exit
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the two-phase training loop described by a config file
    Train {
        /// Path to a `key = value` config file
        #[arg(long)]
        config: PathBuf,
    },
    /// Upscale one PPM image ×4 with a trained checkpoint
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input image (binary PPM)
        #[arg(long = "in")]
        input: PathBuf,
        /// Output image path
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Compare super-resolved images against ground truth (RMSE / PSNR)
    Eval {
        /// Directory of super-resolved images
        #[arg(long)]
        sr: PathBuf,
        /// Directory of ground-truth images with matching filenames
        #[arg(long)]
        hr: PathBuf,
        /// Also write the report as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { config } => commands::cmd_train(config, cli.seed, cli.print_config),
        Command::Infer { checkpoint, input, output } => {
            commands::cmd_infer(checkpoint, input, output)
        }
        Command::Eval { sr, hr, csv } => commands::cmd_eval(sr, hr, csv.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
