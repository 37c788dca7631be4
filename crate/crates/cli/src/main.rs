//! `phasezoo`: plan, train and analyze load × temperature model zoos.
//!
//! Every command prints human-readable lines followed by one JSON summary
//! line. Exit codes: 0 success, 1 runtime error, 2 invalid config or usage,
//! 3 incomplete zoo.

mod commands;
mod config;
mod failure;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "phasezoo", version, about = "Load × temperature model zoos and their loss-landscape phases")]
pub struct Cli {
    /// Pipeline config (JSON, or TOML with a `.toml` extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Zoo root directory; overrides the config.
    #[arg(long, global = true)]
    pub zoo: Option<PathBuf>,
    /// Seed for metrics, phase-aware search and probe splits.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create or train the zoo.
    #[command(subcommand)]
    Zoo(ZooCmd),
    /// Curvature and pairwise landscape metrics.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Fit thresholds or label the grid.
    #[command(subcommand)]
    Phase(PhaseCmd),
    /// One-step hyperparameter search.
    #[command(subcommand)]
    Hpo(HpoCmd),
    /// Apply a downstream method to every cell.
    #[command(subcommand)]
    Downstream(DownstreamCmd),
    /// Linear probes from weight statistics.
    #[command(subcommand)]
    Probe(ProbeCmd),
    /// Export seed-mean grid tables as CSV.
    #[command(subcommand)]
    Export(ExportCmd),
}

#[derive(Subcommand, Debug)]
pub enum ZooCmd {
    /// Write the manifest with every cell pending.
    Plan,
    /// Train pending cells; finished cells are skipped.
    Run {
        #[arg(long)]
        max_cells: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
pub enum MetricsCmd {
    Compute {
        /// Deterministic train-split subsample for the metrics.
        #[arg(long)]
        samples: Option<usize>,
        /// Hutchinson probes per trace estimate.
        #[arg(long)]
        probes: Option<usize>,
        /// Curvature at every checkpoint, not just the final one.
        #[arg(long)]
        all_checkpoints: bool,
        /// Pick t* by smallest deviation, the literal printed formula.
        #[arg(long)]
        mc_argmin: bool,
    },
}

#[derive(Subcommand, Debug)]
pub enum PhaseCmd {
    /// Fit thresholds to reference labels (or bootstrapped ones).
    Fit {
        /// Grid CSV of reference labels.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Label every (width, batch size) group.
    Classify {
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum HpoCmd {
    Run {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        exhaustive: bool,
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum DownstreamCmd {
    Prune {
        #[arg(long)]
        sparsity: Option<f64>,
    },
    Ensemble,
    AvgNaive,
    AvgAligned,
    AvgEpochs {
        #[arg(long)]
        last_k: Option<usize>,
    },
    Interpolate {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        epoch: Option<usize>,
    },
    /// Uses the `downstream.finetune` section of the config.
    Finetune,
}

#[derive(Subcommand, Debug)]
pub enum ProbeCmd {
    Run {
        /// Repeatable; defaults to the config's targets.
        #[arg(long)]
        target: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum ExportCmd {
    Grid(ExportGrid),
}

#[derive(Args, Debug)]
pub struct ExportGrid {
    /// Field name, or `all` for the seven landscape panels.
    #[arg(long)]
    pub field: String,
    /// Output directory; defaults to `<zoo>/grids`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Zoo(ZooCmd::Plan) => "zoo plan".into(),
            Command::Zoo(ZooCmd::Run { .. }) => "zoo run".into(),
            Command::Metrics(_) => "metrics compute".into(),
            Command::Phase(PhaseCmd::Fit { .. }) => "phase fit".into(),
            Command::Phase(PhaseCmd::Classify { .. }) => "phase classify".into(),
            Command::Hpo(_) => "hpo run".into(),
            Command::Downstream(d) => format!("downstream {}", commands::downstream_name(d)),
            Command::Probe(_) => "probe run".into(),
            Command::Export(_) => "export grid".into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match commands::run(&cli) {
        Ok(mut summary) => {
            summary["command"] = json!(name);
            summary["status"] = json!("ok");
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => report(&name, f),
    }
}

fn report(name: &str, f: Failure) -> ExitCode {
    eprintln!("error: {f}");
    let summary = json!({
        "command": name,
        "status": "error",
        "exit_code": f.code,
        "error": f.message,
        "incomplete_cells": f.cells,
    });
    println!("{summary}");
    ExitCode::from(f.code as u8)
}
