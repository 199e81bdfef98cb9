//! Synthetic datasets with planted ground truth, the closed vocabulary and
//! JSONL persistence.

mod generators;
mod io;
mod tabular;
mod vocab;

pub use generators::{
    gen_keyword_lookup, gen_leakage_probe, gen_paired_lookup, KeywordParams, LeakageParams, PairedParams,
    SplitSizes, LEAKAGE_PROBE_TOKEN,
};
pub use io::{load_dataset, load_tabular, save_dataset, save_tabular, DatasetMetadata, JsonlRecord};
pub use tabular::{gen_tabular, sample_rows, TabularDataset, TabularParams, TabularRow, TABULAR_FEATURES, TABULAR_INFORMATIVE};
pub use vocab::{is_attendable, is_maskable, is_special, Vocabulary, BOS, EOS, MASK, PAD, SEP, SPECIAL_TOKENS};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}:{line}: unknown token `{token}`")]
    UnknownToken { path: String, line: usize, token: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One sequence-classification example. Token ids index the dataset's
/// [`Vocabulary`]; `tokens` always starts with `[BOS]` and ends with `[EOS]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub tokens: Vec<usize>,
    pub aux_tokens: Option<Vec<usize>>,
    pub label: usize,
    pub evidence: Option<Vec<usize>>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn maskable(&self) -> Vec<bool> {
        self.tokens.iter().map(|&t| is_maskable(t)).collect()
    }

    pub fn maskable_count(&self) -> usize {
        self.tokens.iter().filter(|&&t| is_maskable(t)).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Train,
    Validation,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Validation, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Validation => "validation",
            SplitKind::Test => "test",
        }
    }
}

/// Which generator produced a dataset, with its parameters and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub kind: String,
    pub params: serde_json::Value,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenDataset {
    pub vocab: Vocabulary,
    pub num_classes: usize,
    pub train: Vec<Observation>,
    pub validation: Vec<Observation>,
    pub test: Vec<Observation>,
    pub generator: GeneratorInfo,
}

impl TokenDataset {
    pub fn split(&self, kind: SplitKind) -> &[Observation] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Validation => &self.validation,
            SplitKind::Test => &self.test,
        }
    }

    /// Global observation id: train, then validation, then test.
    pub fn obs_id(&self, kind: SplitKind, index: usize) -> u64 {
        let offset = match kind {
            SplitKind::Train => 0,
            SplitKind::Validation => self.train.len(),
            SplitKind::Test => self.train.len() + self.validation.len(),
        };
        (offset + index) as u64
    }

    pub fn is_paired(&self) -> bool {
        self.train.first().is_some_and(|o| o.aux_tokens.is_some())
    }

    /// SHA-256 over the canonical on-disk serialization.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(io::metadata_json(self).as_bytes());
        for kind in SplitKind::ALL {
            h.update(kind.name().as_bytes());
            h.update(io::split_jsonl(self, kind).as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.vocab.token(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obs_ids_are_global() {
        let ds = gen_keyword_lookup(&KeywordParams {
            splits: SplitSizes { train: 3, validation: 2, test: 4 },
            ..KeywordParams::default()
        })
        .unwrap();
        assert_eq!(ds.obs_id(SplitKind::Train, 2), 2);
        assert_eq!(ds.obs_id(SplitKind::Validation, 0), 3);
        assert_eq!(ds.obs_id(SplitKind::Test, 3), 8);
    }
}
