use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use unist_core::config::RunConfig;
use unist_core::gradcheck_suite::DEFAULT_TOLERANCE;
use unist_core::harness;
use unist_core::{Error, Result};

/// UniST video saliency: train, evaluate, predict and gradient-check.
///
/// Exit codes: 0 success, 1 other failure, 2 config or shape error,
/// 3 data or checkpoint error, 4 numeric failure (degenerate input,
/// undefined metric, gradcheck over tolerance).
#[derive(Parser, Debug)]
#[command(name = "unist", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file; built-in desk defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Checkpoint to read (eval, predict); defaults to model.ustc under the config's run.out.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output directory, overrides run.out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, overrides run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on run.dataset and write loss.csv and checkpoints.
    Train,
    /// Score a checkpoint on run.dataset and write metrics.csv and metrics.json.
    Eval,
    /// Write saliency maps or masks and attention dumps.
    Predict {
        /// A single clip directory instead of the whole dataset.
        #[arg(long)]
        clip: Option<PathBuf>,
    },
    /// Finite-difference check of every block in f64.
    Gradcheck {
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
    },
    /// Write data.synthetic_clips synthetic clips into run.dataset.
    Generate,
}

fn thread_pool() -> Result<()> {
    let Ok(v) = std::env::var("UNIST_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::config(
            "UNIST_THREADS",
            format!("expected a positive integer, got {v:?}"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config("UNIST_THREADS", e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    thread_pool()?;
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("")?,
    };
    let checkpoint = cli
        .common
        .checkpoint
        .unwrap_or_else(|| cfg.out.join("model.ustc"));
    if let Some(out) = cli.common.out {
        cfg.out = out;
    }
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    match cli.cmd {
        Command::Train => {
            let s = harness::train(&cfg)?;
            if let Some(last) = s.losses.last() {
                println!("step {} loss {}", last.step, last.total);
            }
            println!("checkpoint {}", s.checkpoint.display());
        }
        Command::Eval => {
            let report = harness::evaluate(&cfg, &checkpoint)?;
            for (m, v) in report.metrics.iter().zip(report.means()) {
                println!("{m} {v}");
            }
        }
        Command::Predict { clip } => {
            let files = harness::predict(&cfg, &checkpoint, clip.as_deref())?;
            info!("wrote {} files", files.len());
            println!("wrote {} files under {}", files.len(), cfg.out.display());
        }
        Command::Gradcheck { tol } => {
            harness::gradcheck(&cfg, tol)?;
        }
        Command::Generate => {
            let ids = harness::generate(&cfg)?;
            println!("wrote {} clips under {}", ids.len(), cfg.dataset.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
