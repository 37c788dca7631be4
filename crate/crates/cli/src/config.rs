use std::path::{Path, PathBuf};

use phasezoo::downstream::DownstreamMethod;
use phasezoo::hpo::HpoOptions;
use phasezoo::landscape::MetricOptions;
use phasezoo::nn::DataSource;
use phasezoo::phase::ThresholdBounds;
use phasezoo::probe::{ProbeOptions, ProbeTarget};
use phasezoo::train::TrainConfig;
use phasezoo::zoo::GridSpec;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Everything a pipeline needs, read from one JSON or TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Zoo root; `--zoo` takes precedence.
    #[serde(default)]
    pub zoo: Option<PathBuf>,
    pub grid: GridSpec,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default)]
    pub phase: PhaseConfig,
    #[serde(default)]
    pub hpo: HpoOptions,
    #[serde(default)]
    pub downstream: DownstreamConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseConfig {
    pub bounds: ThresholdBounds,
    /// Grid CSV of reference phase labels (`NA` for unlabeled cells). Without
    /// it, thresholds are bootstrapped from metric quantiles.
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DownstreamConfig {
    pub sparsity: f64,
    pub last_k: usize,
    pub alpha: f64,
    pub epoch: Option<usize>,
    pub finetune: Option<FinetuneConfig>,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        DownstreamConfig {
            sparsity: 0.5,
            last_k: 3,
            alpha: 0.5,
            epoch: None,
            finetune: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub target: DataSource,
    pub train: TrainConfig,
    #[serde(default = "yes")]
    pub reinit_head: bool,
}

fn yes() -> bool {
    true
}

impl FinetuneConfig {
    pub fn method(&self) -> DownstreamMethod {
        DownstreamMethod::Finetune {
            target: self.target.clone(),
            config: self.train.clone(),
            reinit_head: self.reinit_head,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub targets: Vec<ProbeTarget>,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub lambda_grid: Vec<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let o = ProbeOptions::default();
        ProbeConfig {
            targets: vec![ProbeTarget::TestAcc],
            split_seed: o.split_seed,
            train_fraction: o.train_fraction,
            lambda_grid: o.lambda_grid,
        }
    }
}

impl ProbeConfig {
    pub fn options(&self) -> ProbeOptions {
        ProbeOptions {
            split_seed: self.split_seed,
            train_fraction: self.train_fraction,
            lambda_grid: self.lambda_grid.clone(),
        }
    }
}

/// Option sections that apply without a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Options {
    pub metrics: MetricOptions,
    pub phase: PhaseConfig,
    pub hpo: HpoOptions,
    pub downstream: DownstreamConfig,
    pub probe: ProbeConfig,
}

impl From<&PipelineConfig> for Options {
    fn from(c: &PipelineConfig) -> Self {
        Options {
            metrics: c.metrics,
            phase: c.phase.clone(),
            hpo: c.hpo,
            downstream: c.downstream.clone(),
            probe: c.probe.clone(),
        }
    }
}

impl Options {
    /// `--seed` drives every stochastic stage after training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.metrics.seed = seed;
        self.hpo.seed = seed;
        self.probe.split_seed = seed;
        self
    }
}

/// Parses a config file, as TOML when the extension is `.toml` and as JSON
/// otherwise. Errors name the offending key path.
pub fn load_config(path: &Path) -> Result<PipelineConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let toml = path.extension().is_some_and(|e| e == "toml");
    let cfg: PipelineConfig = if toml {
        let de = toml::Deserializer::parse(&text)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        serde_path_to_error::deserialize(de).map_err(|e| key_error(path, e))?
    } else {
        let mut de = serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| key_error(path, e))?
    };
    cfg.grid
        .validate()
        .map_err(|e| Failure::config(format!("{}: grid: {e}", path.display())))?;
    Ok(cfg)
}

fn key_error<E: std::fmt::Display>(path: &Path, e: serde_path_to_error::Error<E>) -> Failure {
    let key = e.path().to_string();
    Failure::config(format!("{}: at key `{key}`: {}", path.display(), e.inner()))
}
