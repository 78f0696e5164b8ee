use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use progspace::config::{parse_k_range, PipelineConfig};
use progspace::dimred::Method;
use progspace::pipeline;
use progspace::{Error, Result};

/// Longitudinal progression-subtype pipeline.
#[derive(Parser)]
#[command(name = "progspace", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `section.key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Factorization: nmf, pca or ica.
    #[arg(long)]
    method: Option<Method>,
    /// Mixture orders to compare, e.g. `1..6`.
    #[arg(long = "k-range")]
    k_range: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (visits.csv and truth.csv).
    Synth(Common),
    /// Run the full analysis on a visits CSV.
    Run {
        #[command(flatten)]
        common: Common,
        /// Visits CSV; overrides `paths.input`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Replay trained models on an external cohort.
    Replicate {
        #[command(flatten)]
        common: Common,
        /// Output directory of an earlier `run`; overrides `paths.artifacts`.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// External visits CSV; overrides `paths.external`.
        #[arg(long)]
        external: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(method) = common.method {
        cfg.dimred.method = method;
    }
    if let Some(range) = &common.k_range {
        (cfg.k_min, cfg.k_max) = parse_k_range(range)?;
    }
    if let Some(out) = &common.out {
        cfg.paths.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(common) => {
            let cfg = load(&common)?;
            for (group, n) in pipeline::cmd_synth(&cfg)? {
                println!("{group}\t{n}");
            }
            println!("wrote {}", cfg.paths.output.display());
        }
        Command::Run { common, input } => {
            let mut cfg = load(&common)?;
            if input.is_some() {
                cfg.paths.input = input;
            }
            let a = pipeline::cmd_run(&cfg)?;
            println!("chosen k = {}", a.selection.chosen_k);
            for w in &a.windows {
                println!("window {}m: macro AUC {:.3}", w.horizon, w.report.macro_auc());
            }
            println!("wrote {}", cfg.paths.output.display());
        }
        Command::Replicate {
            common,
            artifacts,
            external,
        } => {
            let mut cfg = load(&common)?;
            if artifacts.is_some() {
                cfg.paths.artifacts = artifacts;
            }
            if external.is_some() {
                cfg.paths.external = external;
            }
            let artifacts = cfg
                .paths
                .artifacts
                .clone()
                .ok_or_else(|| Error::Config("no artifacts directory (set --artifacts)".into()))?;
            let external = cfg
                .paths
                .external
                .clone()
                .ok_or_else(|| Error::Config("no external cohort (set --external)".into()))?;
            let report = pipeline::cmd_replicate(&cfg, &artifacts, &external)?;
            match report.macro_auc {
                Some(auc) => println!("replication macro AUC {auc:.3} on {} patients", report.n_patients),
                None => println!("replication AUC undefined on {} patients", report.n_patients),
            }
            if report.imbalanced {
                println!("warning: class imbalance {:?}", report.class_counts);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
