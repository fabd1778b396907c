//! Binary entry point: argument parsing and dispatch to the command layer.

use clap::{Parser, Subcommand};
use ctxpretrain::cli;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "ctxpretrain",
    about = "Masked-image pretraining with a context-consistency objective: \
             train, visualize reconstructions, probe encoders, and analyze \
             object-occlusion probabilities."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain an encoder and write checkpoint, metrics, and config.
    Pretrain {
        /// JSON run configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoint.bin, metrics.jsonl, config.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render masked-input | reconstruction | ground-truth triptychs.
    Reconstruct {
        /// Checkpoint produced by `pretrain`.
        #[arg(long)]
        ckpt: PathBuf,
        /// Source PNG; it is fitted to the checkpoint's geometry.
        #[arg(long)]
        image: PathBuf,
        /// Comma-separated masking ratios in [0, 1].
        #[arg(long, value_delimiter = ',', default_value = "0.70,0.75,0.80,0.85")]
        ratios: Vec<f64>,
        /// Mask-draw seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a linear classifier on frozen encoder features.
    Probe {
        #[arg(long)]
        ckpt: PathBuf,
        /// Class-folder root, or the literal `synth` for generated data.
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON run configuration (probe and dataset sections).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Probability that a k-patch object is fully hidden by a random mask.
    Coverage {
        /// Total patch count N.
        #[arg(long)]
        n: usize,
        /// Patches occupied by the object.
        #[arg(long)]
        k: usize,
        /// Masked patch count; exclusive with --ratio.
        #[arg(long)]
        m: Option<usize>,
        /// Masking ratio; maps to m = round-half-up(ratio * N).
        #[arg(long)]
        ratio: Option<f64>,
        /// Monte Carlo trial count.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Monte Carlo seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Pretrain { config, out } => cli::cmd_pretrain(config.as_deref(), &out),
        Command::Reconstruct { ckpt, image, ratios, seed, out } => {
            cli::cmd_reconstruct(&ckpt, &image, &ratios, seed, &out)
        }
        Command::Probe { ckpt, data, out, config } => {
            cli::cmd_probe(&ckpt, &data, &out, config.as_deref())
        }
        Command::Coverage { n, k, m, ratio, trials, seed } => {
            cli::cmd_coverage(n, k, m, ratio, trials, seed)
        }
    };
    std::process::exit(code);
}
