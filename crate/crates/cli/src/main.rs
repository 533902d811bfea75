//! `lobspoof`: run the spoofing-detection pipeline stage by stage or as a
//! whole experiment plan.
//!
//! Every command reads one config document, writes its artifacts under
//! `<out>/<config hash>/` and prints a JSON summary on stdout.

mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lobspoof_core::config::RunConfig;
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "lobspoof", version, about = "Spoofing detection on limit order book data")]
struct Cli {
    /// Run config (TOML, or JSON by extension). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root of the run directories.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Recompute completed experiment cells.
    #[arg(long, global = true)]
    force: bool,
    /// Size of the worker pool. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the clean synthetic series.
    Synth,
    /// Inject spoofing episodes into the synthesized series.
    Inject,
    /// Build and normalize the feature frame.
    Features,
    /// Pretrain and freeze the LOB embedder.
    PretrainLob,
    /// Train the representation model of the configured cell.
    Train,
    /// Fit the detector and score the validation and test ranges.
    Detect,
    /// Compute test metrics from the detection scores.
    Evaluate,
    /// Run an experiment plan end to end.
    Experiment {
        /// Preset name; defaults to `experiment.plan` of the config.
        #[arg(long)]
        plan: Option<String>,
    },
    /// Check the config and print its hash.
    Validate,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Value> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("configuring the thread pool")?;
    }
    let cfg = load_config(cli)?;
    if let Command::Validate = cli.command {
        return Ok(serde_json::json!({ "command": "validate", "valid": true, "hash": cfg.hash(), "run_dir": cli.out.join(cfg.short_hash()) }));
    }
    let run = stages::RunDir::create(&cli.out, &cfg)?;
    match &cli.command {
        Command::Synth => stages::synth(&run, &cfg),
        Command::Inject => stages::inject(&run, &cfg),
        Command::Features => stages::features(&run, &cfg),
        Command::PretrainLob => stages::pretrain_lob(&run, &cfg),
        Command::Train => stages::train(&run, &cfg),
        Command::Detect => stages::detect(&run, &cfg),
        Command::Evaluate => stages::evaluate(&run, &cfg),
        Command::Experiment { plan } => stages::experiment(&run, &cfg, plan.as_deref(), cli.force),
        Command::Validate => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
