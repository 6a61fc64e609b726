use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use balshap::pipeline::{
    run_balance, run_evaluate, run_explain, run_pipeline, run_split, run_synth, run_train, PipelineConfig, RunOptions,
};
use balshap::{Error, Result};

/// Balanced-background SHAP pipeline. Log verbosity follows RUST_LOG.
#[derive(Parser)]
#[command(name = "balshap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CellArg {
    /// Restrict to one grid cell, e.g. `0.5_under_deep`.
    #[arg(long)]
    cell: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus to data.csv.
    Synth(Common),
    /// Stratified split and standardization.
    Split(Common),
    /// Train the classifier on the split outputs.
    Train(Common),
    /// Compose background and explanation sets.
    Balance(Common),
    /// Explain every grid cell.
    Explain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cell: CellArg,
    },
    /// Rankings, beeswarms, abnormal points and top-k tables.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cell: CellArg,
    },
    /// All stages, then the manifest.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cell: CellArg,
        /// Skip top-k retraining.
        #[arg(long)]
        skip_topk: bool,
    },
}

fn load(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(c) => {
            let path = run_synth(&load(&c)?)?;
            println!("{}", path.display());
        }
        Command::Split(c) => run_split(&load(&c)?)?,
        Command::Train(c) => {
            let model = run_train(&load(&c)?)?;
            let t = model.training();
            println!("best epoch {} val loss {:.6}", t.best_epoch, t.best_val_loss);
        }
        Command::Balance(c) => {
            let b = run_balance(&load(&c)?)?;
            for e in &b.explanations {
                println!("{} {}: {} rows", e.rate, e.variant.short(), e.set.len());
            }
        }
        Command::Explain { common, cell } => {
            run_explain(&load(&common)?, cell.cell.as_deref())?;
        }
        Command::Evaluate { common, cell } => {
            run_evaluate(&load(&common)?, cell.cell.as_deref())?;
        }
        Command::Run {
            common,
            cell,
            skip_topk,
        } => {
            let cfg = load(&common)?;
            let report = run_pipeline(
                &cfg,
                &RunOptions {
                    cell: cell.cell,
                    skip_topk,
                },
            )?;
            if let Some(m) = &report.manifest.model {
                println!("test AUC {:.4} ({:.4}-{:.4})", m.test_auc.auc, m.test_auc.ci_low, m.test_auc.ci_high);
            }
            println!("{} cells written to {}", report.manifest.cells.len(), cfg.output_dir.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
