//! `bandgauge`: banding detection and banding quality scores from the
//! command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonArgs, RunConfig};

/// No-reference banding detection and quality scoring.
///
/// Exit status is 0 on success, 1 for input errors and 2 for numerical
/// failures.
#[derive(Parser, Debug)]
#[command(name = "bandgauge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score images (files or directories) and write one CSV row per image
    Score {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Write the banding map of one image
    Detect {
        image: PathBuf,
        /// Also dump the map as raw little-endian f32
        #[arg(long)]
        raw: Option<PathBuf>,
        /// Write whole-image HFM and LFM as PGM into this directory
        #[arg(long)]
        dump_maps: Option<PathBuf>,
    },
    /// Train the patch classifier on a manifest or on a toy set
    Train {
        #[arg(long, conflicts_with = "toy")]
        manifest: Option<PathBuf>,
        /// Train on a separable toy set of this many samples
        #[arg(long)]
        toy: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Generate a synthetic labelled dataset with its manifest
    Gen {
        /// Number of images
        #[arg(short, long)]
        n: Option<usize>,
        #[arg(long)]
        image_size: Option<usize>,
        /// Quantize tinted YCbCr 4:2:0 planes instead of gray levels
        #[arg(long)]
        chroma: bool,
    },
    /// Correlation or classification report for paired scores
    Eval {
        /// CSV with a predicted (or q, score) column and a mos or label column
        #[arg(conflicts_with_all = ["scores", "mos"])]
        pairs: Option<PathBuf>,
        /// Output of `score`, joined with --mos on the image path
        #[arg(long, requires = "mos")]
        scores: Option<PathBuf>,
        /// Output of `mos`
        #[arg(long, requires = "scores")]
        mos: Option<PathBuf>,
    },
    /// Mean opinion scores from raw ratings, with outlier removal
    Mos { ratings: PathBuf },
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let mut cfg = RunConfig::resolve(&cli.common)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Score { images } => commands::score(&cfg, &images),
        Command::Detect { image, raw, dump_maps } => commands::detect(&cfg, &image, raw.as_deref(), dump_maps.as_deref()),
        Command::Train { manifest, toy, epochs, lr, batch_size } => {
            if let Some(v) = epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = lr {
                cfg.train.learning_rate = v;
            }
            if let Some(v) = batch_size {
                cfg.train.batch_size = v;
            }
            commands::train(&cfg, manifest.as_deref(), toy)
        }
        Command::Gen { n, image_size, chroma } => commands::gen(&cfg, n, image_size, chroma),
        Command::Eval { pairs, scores, mos } => commands::eval(&cfg, pairs.as_deref(), scores.as_deref(), mos.as_deref()),
        Command::Mos { ratings } => commands::mos(&cfg, &ratings),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are input errors; help and version are not errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
