use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnosis::SpanStatistic;
use crate::error::{Error, Result};
use crate::ingest::{LoadOptions, SyntheticSpec, WindowSpec};
use crate::metrics::MetricReport;
use crate::models::ModelConfig;
use crate::scoring::{DynamicWindow, KernelSpec};
use crate::thresholding::FScore;

pub const ENV_OUTPUT_DIR: &str = "TSAD_OUTPUT_DIR";
pub const ENV_WORKERS: &str = "TSAD_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic { entities: Vec<SyntheticSpec> },
    Csv { entities: Vec<CsvEntity> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvEntity {
    #[serde(flatten)]
    pub options: LoadOptions,
    pub train: PathBuf,
    pub test: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause_map: Option<PathBuf>,
}

impl DatasetConfig {
    pub fn entity_ids(&self) -> Vec<String> {
        match self {
            DatasetConfig::Synthetic { entities } => entities.iter().map(|e| e.id.clone()).collect(),
            DatasetConfig::Csv { entities } => entities.iter().map(|e| e.options.id.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringKind {
    Error,
    GaussS,
    GaussD,
    #[serde(rename = "gauss_d_k")]
    GaussDK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    pub kind: ScoringKind,
    /// Gauss-D rolling window `W`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<DynamicWindow>,
    /// Gauss-D-K kernel sigma in time-points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_sigma: Option<KernelSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdConfig {
    /// `k` = number of true anomalous points per entity.
    TopK,
    BestF { metric: FScore },
    /// Fixed `-log10(eps)`; when absent, 1..=5 is swept and one value is
    /// chosen for all entities by the mean of `select_metric`.
    TailP {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        neg_log_eps: Option<u32>,
        #[serde(default = "default_select")]
        select_metric: FScore,
    },
}

fn default_select() -> FScore {
    FScore::Fc1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosisConfig {
    #[serde(default)]
    pub statistic: SpanStatistic,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_percent")]
    pub hitrate_percent: u32,
}

fn default_top_k() -> usize {
    3
}

fn default_percent() -> u32 {
    150
}

impl Default for DiagnosisConfig {
    fn default() -> Self {
        Self {
            statistic: SpanStatistic::Mean,
            top_k: default_top_k(),
            hitrate_percent: default_percent(),
        }
    }
}

fn default_window() -> WindowSpec {
    WindowSpec { l_w: 100, l_s: 1 }
}

fn default_metrics() -> Vec<String> {
    MetricReport::NAMES.iter().map(|s| (*s).to_owned()).collect()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    /// Training `l_w`, `l_s`; inference always uses stride 1.
    #[serde(default = "default_window")]
    pub window: WindowSpec,
    pub scoring: ScoringConfig,
    pub threshold: ThresholdConfig,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    /// Channel-ranking diagnosis over labelled events; off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<DiagnosisConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Save a checkpoint per (entity, seed) under `models/`.
    #[serde(default)]
    pub save_models: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative CSV paths resolve against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let (Some(base), DatasetConfig::Csv { entities }) = (path.parent(), &mut cfg.dataset) {
            for e in entities {
                for p in [&mut e.train, &mut e.test] {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
                if let Some(c) = e.cause_map.as_mut().filter(|c| c.is_relative()) {
                    *c = base.join(&*c);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies `TSAD_OUTPUT_DIR` and `TSAD_WORKERS`.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
            self.output_dir = Some(PathBuf::from(dir));
        }
        if let Ok(w) = std::env::var(ENV_WORKERS) {
            let n = w
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{ENV_WORKERS}='{w}' is not a count")))?;
            self.workers = Some(n);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        let ids = self.dataset.entity_ids();
        if ids.is_empty() {
            return Err(Error::Config("dataset has no entities".into()));
        }
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return Err(Error::Config("entity ids must be unique".into()));
        }
        if let DatasetConfig::Synthetic { entities } = &self.dataset {
            for e in entities {
                e.validate().map_err(|err| Error::Config(format!("entity '{}': {err}", e.id)))?;
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        match self.scoring.kind {
            ScoringKind::GaussD if self.scoring.window.is_none() => {
                return Err(Error::Config("gauss_d scoring needs `window` (W >= 2)".into()))
            }
            ScoringKind::GaussDK if self.scoring.window.is_none() || self.scoring.kernel_sigma.is_none() => {
                return Err(Error::Config("gauss_d_k scoring needs `window` and `kernel_sigma`".into()))
            }
            _ => {}
        }
        if let ThresholdConfig::TailP { neg_log_eps, .. } = self.threshold {
            if self.scoring.kind == ScoringKind::Error {
                return Err(Error::Config("tail_p threshold needs a Gauss-family scoring function".into()));
            }
            if neg_log_eps == Some(0) {
                return Err(Error::Config("neg_log_eps must be >= 1".into()));
            }
        }
        if let Some(name) = self.metrics.iter().find(|m| !MetricReport::NAMES.contains(&m.as_str())) {
            return Err(Error::Config(format!("unknown metric '{name}'")));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything that affects results;
    /// output location and worker count are excluded.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.workers = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
