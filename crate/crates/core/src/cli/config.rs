use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{
    gen_keyword_lookup, gen_leakage_probe, gen_paired_lookup, load_dataset, KeywordParams, LeakageParams,
    PairedParams, TokenDataset,
};
use crate::grad::AdamConfig;
use crate::harness::{ExperimentPlan, RoarMode};
use crate::importance::{Measure, IG_STEPS};
use crate::masking::{Ranking, StepSchedule};
use crate::metrics::MetricKind;
use crate::models::{Architecture, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Keyword {
        #[serde(default)]
        params: KeywordParams,
    },
    Paired {
        #[serde(default)]
        params: PairedParams,
    },
    Leakage {
        #[serde(default)]
        params: LeakageParams,
    },
    /// A directory written by `gen`; relative paths resolve against the
    /// config file's directory.
    Path { path: PathBuf },
}

impl DatasetSpec {
    pub fn build(&self, base: &Path) -> Result<TokenDataset, String> {
        let r = match self {
            DatasetSpec::Keyword { params } => gen_keyword_lookup(params),
            DatasetSpec::Paired { params } => gen_paired_lookup(params),
            DatasetSpec::Leakage { params } => gen_leakage_probe(params),
            DatasetSpec::Path { path } => load_dataset(&base.join(path)),
        };
        r.map_err(|e| e.to_string())
    }
}

/// Model settings; vocabulary size and class count come from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: AdamConfig,
}

fn default_dim() -> usize {
    16
}
fn default_epochs() -> usize {
    20
}
fn default_batch() -> usize {
    32
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    #[default]
    Recursive,
    Classic,
    Both,
}

impl ModeSpec {
    pub fn modes(self) -> Vec<RoarMode> {
        match self {
            ModeSpec::Recursive => vec![RoarMode::Recursive],
            ModeSpec::Classic => vec![RoarMode::Classic],
            ModeSpec::Both => vec![RoarMode::Recursive, RoarMode::Classic],
        }
    }
}

fn default_measures() -> Vec<Measure> {
    vec![Measure::Attention, Measure::Gradient, Measure::InputTimesGradient, Measure::IntegratedGradient, Measure::Random]
}
fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}
fn default_metric() -> MetricKind {
    MetricKind::Accuracy
}
fn default_ig_steps() -> usize {
    IG_STEPS
}

/// One JSON document describing a full `roar` pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    #[serde(default = "default_measures")]
    pub measures: Vec<Measure>,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_metric")]
    pub metric: MetricKind,
    #[serde(default)]
    pub ranking: Ranking,
    #[serde(default = "default_ig_steps")]
    pub ig_steps: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err("name must be non-empty and free of path separators".into());
        }
        if self.measures.is_empty() {
            return Err("measures must be non-empty".into());
        }
        if self.jobs == Some(0) {
            return Err("jobs must be at least 1".into());
        }
        self.schedule.validate().map_err(|e| e.to_string())
    }

    pub fn model_config(&self, ds: &TokenDataset) -> ModelConfig {
        let m = &self.model;
        let mut cfg = ModelConfig::new(m.architecture, ds.vocab.len(), ds.num_classes);
        cfg.embedding_dim = m.embedding_dim;
        cfg.hidden_dim = m.hidden_dim;
        cfg.max_epochs = m.max_epochs;
        cfg.batch_size = m.batch_size;
        cfg.optimizer = m.optimizer.clone();
        cfg
    }

    /// One plan per requested mode, each validated.
    pub fn plans(&self, ds: Arc<TokenDataset>) -> Result<Vec<ExperimentPlan>, String> {
        self.mode
            .modes()
            .into_iter()
            .map(|mode| {
                let mut plan = ExperimentPlan::new(self.name.clone(), Arc::clone(&ds), self.model_config(&ds));
                plan.measures = self.measures.clone();
                plan.schedule = self.schedule.clone();
                plan.seeds = self.seeds.clone();
                plan.mode = mode;
                plan.metric = self.metric;
                plan.ranking = self.ranking;
                plan.ig_steps = self.ig_steps;
                plan.validate().map_err(|e| e.to_string())?;
                Ok(plan)
            })
            .collect()
    }
}
