//! Pipeline driver: generate -> train -> explain -> aggregate -> prune ->
//! refine -> retrain -> evaluate -> fidelity -> report, as subcommands over
//! one config file. All outputs land under `out_dir/<stage>/`; reruns with
//! the same config are byte-identical.

mod config;
mod lock;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::PipelineConfig;
use lock::OutDirLock;
use prth_core::data::FoldId;
use stages::Ctx;

#[derive(Parser)]
#[command(name = "prth", version, about = "Explainable radio-link failure prediction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides PRTH_OUT and the config's out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Global seed override: stage seeds become seed, seed+1, seed+2.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic CSV bundle and ground truth.
    GenData,
    /// Train the configured model on one fold.
    Train {
        #[arg(long)]
        fold: String,
        /// Train the refined spec produced by `refine` instead.
        #[arg(long)]
        refined: bool,
    },
    /// Explain the fold's true-positive test predictions.
    Explain {
        #[arg(long)]
        fold: String,
    },
    /// Aggregate saliency maps into global channel importance.
    Aggregate {
        #[arg(long)]
        fold: String,
    },
    /// Prune channels by cumulative importance coverage.
    Prune {
        #[arg(long)]
        fold: String,
    },
    /// Derive the refined model spec from the pruned feature set.
    Refine {
        #[arg(long)]
        fold: String,
    },
    /// Test-split metrics for the trained (and retrained) model.
    Evaluate {
        #[arg(long)]
        fold: String,
    },
    /// Insertion/deletion fidelity curves against a random baseline.
    Fidelity {
        #[arg(long)]
        fold: String,
    },
    /// Collect per-fold results into the report bundle.
    Report,
    /// Run every stage for one fold.
    Pipeline {
        #[arg(long)]
        fold: String,
    },
    /// Check a config file, listing every violated constraint.
    ValidateConfig,
}

fn parse_fold(s: &str) -> Result<FoldId> {
    FoldId::from_str(s).map_err(|e| anyhow::anyhow!(e))
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("cannot size the worker pool")?;
    }

    let config_path = cli.config.clone().context("--config <path> is required")?;
    let raw = std::fs::read_to_string(&config_path)
        .with_context(|| format!("cannot read config {}", config_path.display()))?;
    let mut config = PipelineConfig::load(&config_path)?;

    if let Command::ValidateConfig = cli.command {
        let violations = config.violations();
        for v in &violations {
            println!("violation: {v}");
        }
        if violations.is_empty() {
            if !cli.quiet {
                println!("config ok");
            }
            return Ok(());
        }
        anyhow::bail!("{} violation(s) in {}", violations.len(), config_path.display());
    }

    let violations = config.violations();
    if !violations.is_empty() {
        anyhow::bail!(
            "invalid config {}: {}",
            config_path.display(),
            violations.join("; ")
        );
    }
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }

    let out_dir = cli
        .out
        .or_else(|| std::env::var_os("PRTH_OUT").map(PathBuf::from))
        .or_else(|| config.out_dir.clone())
        .context("no output directory: set out_dir in the config, PRTH_OUT, or --out")?;

    let ctx = Ctx {
        config,
        out_dir: out_dir.clone(),
        config_sha256: manifest::hex_digest(raw.as_bytes()),
        quiet: cli.quiet,
    };
    let _lock = OutDirLock::acquire(&out_dir)?;

    match cli.command {
        Command::GenData => stages::gen_data(&ctx),
        Command::Train { fold, refined } => stages::train_stage(&ctx, parse_fold(&fold)?, refined),
        Command::Explain { fold } => stages::explain(&ctx, parse_fold(&fold)?),
        Command::Aggregate { fold } => stages::aggregate(&ctx, parse_fold(&fold)?),
        Command::Prune { fold } => stages::prune_stage(&ctx, parse_fold(&fold)?),
        Command::Refine { fold } => stages::refine(&ctx, parse_fold(&fold)?),
        Command::Evaluate { fold } => stages::evaluate(&ctx, parse_fold(&fold)?),
        Command::Fidelity { fold } => stages::fidelity(&ctx, parse_fold(&fold)?),
        Command::Report => stages::report_stage(&ctx),
        Command::Pipeline { fold } => stages::pipeline(&ctx, parse_fold(&fold)?),
        Command::ValidateConfig => unreachable!("handled above"),
    }
}
