use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flippoint::pipeline::{error_record, run, ExperimentConfig, Stage};
use flippoint::{Error, Result};

/// Flip points, decision boundaries and adversarial comparisons for erf networks.
#[derive(Parser)]
#[command(name = "flippoint", version)]
struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override one config key, e.g. `--set epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Read CIFAR-10 batches, select wavelet coefficients, write feature tables.
    Prepare,
    /// Train the network on the prepared features.
    Train,
    /// Reconstruct a test image from growing coefficient subsets.
    Recon,
    /// Closest flip points for test inputs, with Taylor and directional baselines.
    Flip,
    /// Softmax profile along a segment between two test inputs.
    Path,
    /// Straight-line connectivity of one class's training points.
    Regions,
    /// Targeted attacks inside an l2 ball, compared with flip distances.
    Attack,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Prepare => Stage::Prepare,
            Command::Train => Stage::Train,
            Command::Recon => Stage::Recon,
            Command::Flip => Stage::Flip,
            Command::Path => Stage::Path,
            Command::Regions => Stage::Regions,
            Command::Attack => Stage::Attack,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.stage();
    let result = load_config(&cli).and_then(|cfg| {
        if cfg.threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        }
        run(stage, &cfg)
    });
    match result {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("manifest: {}", flippoint::pipeline::Manifest::file_name(stage.name()));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(Some(stage), &e));
            ExitCode::FAILURE
        }
    }
}
