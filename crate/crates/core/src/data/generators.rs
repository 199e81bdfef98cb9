use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, GeneratorInfo, Observation, TokenDataset, Vocabulary, BOS, EOS};

/// Token planted by the leakage-probe generator.
pub const LEAKAGE_PROBE_TOKEN: &str = "and";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self { train: 2000, validation: 500, test: 500 }
    }
}

impl SplitSizes {
    fn check(&self) -> Result<(), DataError> {
        if self.train == 0 || self.validation == 0 || self.test == 0 {
            return Err(DataError::Config("every split needs at least one example".into()));
        }
        Ok(())
    }
}

/// Single-sequence keyword lookup: each sequence holds `redundancy` copies of
/// its class key among label-independent distractors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeywordParams {
    pub splits: SplitSizes,
    pub classes: usize,
    pub distractors: usize,
    pub redundancy: usize,
    /// Full sequence length including `[BOS]` and `[EOS]`.
    pub length: usize,
    pub seed: u64,
}

impl Default for KeywordParams {
    fn default() -> Self {
        Self { splits: SplitSizes::default(), classes: 2, distractors: 20, redundancy: 1, length: 12, seed: 0 }
    }
}

/// Keyword lookup plus a spurious token that appears in class-0 sequences
/// with probability `probe_rate_class0` and in class-1 sequences with
/// probability `probe_rate_class1`, so its class-0 precision is
/// `r0 / (r0 + r1)` (0.6 with the defaults).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeakageParams {
    pub splits: SplitSizes,
    pub distractors: usize,
    pub length: usize,
    pub probe_rate_class0: f64,
    pub probe_rate_class1: f64,
    pub seed: u64,
}

impl Default for LeakageParams {
    fn default() -> Self {
        Self {
            splits: SplitSizes::default(),
            distractors: 20,
            length: 12,
            probe_rate_class0: 0.75,
            probe_rate_class1: 0.5,
            seed: 0,
        }
    }
}

/// Entity/location stories queried by an auxiliary sequence naming one entity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairedParams {
    pub splits: SplitSizes,
    pub entities: usize,
    pub locations: usize,
    pub statements: usize,
    pub seed: u64,
}

impl Default for PairedParams {
    fn default() -> Self {
        Self { splits: SplitSizes::default(), entities: 6, locations: 4, statements: 3, seed: 0 }
    }
}

fn info<P: Serialize>(kind: &str, params: &P, seed: u64) -> GeneratorInfo {
    GeneratorInfo { kind: kind.into(), params: serde_json::to_value(params).expect("params serialize"), seed }
}

fn keyword_vocab(classes: usize, distractors: usize) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for c in 0..classes {
        vocab.add(&format!("key{c}"));
    }
    for d in 0..distractors {
        vocab.add(&format!("tok{d}"));
    }
    vocab
}

fn distractor(rng: &mut ChaCha8Rng, classes: usize, distractors: usize) -> usize {
    super::SPECIAL_TOKENS.len() + classes + rng.random_range(0..distractors)
}

pub fn gen_keyword_lookup(p: &KeywordParams) -> Result<TokenDataset, DataError> {
    p.splits.check()?;
    if p.classes < 2 {
        return Err(DataError::Config("keyword lookup needs at least 2 classes".into()));
    }
    if p.redundancy < 1 {
        return Err(DataError::Config("redundancy must be at least 1".into()));
    }
    if p.length < p.redundancy + 2 {
        return Err(DataError::Config(format!("length {} cannot hold {} evidence copies", p.length, p.redundancy)));
    }
    if p.distractors == 0 && p.length > p.redundancy + 2 {
        return Err(DataError::Config("distractor vocabulary is empty".into()));
    }
    let vocab = keyword_vocab(p.classes, p.distractors);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let content = p.length - 2;
    let make = |rng: &mut ChaCha8Rng| {
        let label = rng.random_range(0..p.classes);
        let key = super::SPECIAL_TOKENS.len() + label;
        let mut positions: Vec<usize> = sample(rng, content, p.redundancy).into_iter().map(|i| i + 1).collect();
        positions.sort_unstable();
        let mut tokens = vec![BOS];
        for pos in 1..=content {
            tokens.push(if positions.binary_search(&pos).is_ok() { key } else { distractor(rng, p.classes, p.distractors) });
        }
        tokens.push(EOS);
        Observation { tokens, aux_tokens: None, label, evidence: Some(positions) }
    };
    let train = (0..p.splits.train).map(|_| make(&mut rng)).collect();
    let validation = (0..p.splits.validation).map(|_| make(&mut rng)).collect();
    let test = (0..p.splits.test).map(|_| make(&mut rng)).collect();
    Ok(TokenDataset { vocab, num_classes: p.classes, train, validation, test, generator: info("keyword", p, p.seed) })
}

pub fn gen_leakage_probe(p: &LeakageParams) -> Result<TokenDataset, DataError> {
    p.splits.check()?;
    if p.length < 4 {
        return Err(DataError::Config("leakage probe needs length >= 4".into()));
    }
    if p.distractors == 0 {
        return Err(DataError::Config("distractor vocabulary is empty".into()));
    }
    for r in [p.probe_rate_class0, p.probe_rate_class1] {
        if !(0.0..=1.0).contains(&r) {
            return Err(DataError::Config(format!("probe rate {r} outside [0, 1]")));
        }
    }
    let classes = 2;
    let mut vocab = keyword_vocab(classes, p.distractors);
    let probe = vocab.add(LEAKAGE_PROBE_TOKEN);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let content = p.length - 2;
    let make = |rng: &mut ChaCha8Rng| {
        let label = rng.random_range(0..classes);
        let rate = if label == 0 { p.probe_rate_class0 } else { p.probe_rate_class1 };
        let has_probe = rng.random::<f64>() < rate;
        let picks = sample(rng, content, 2).into_vec();
        let key_pos = picks[0] + 1;
        let probe_pos = has_probe.then_some(picks[1] + 1);
        let mut tokens = vec![BOS];
        for pos in 1..=content {
            let t = if pos == key_pos {
                super::SPECIAL_TOKENS.len() + label
            } else if Some(pos) == probe_pos {
                probe
            } else {
                distractor(rng, classes, p.distractors)
            };
            tokens.push(t);
        }
        tokens.push(EOS);
        Observation { tokens, aux_tokens: None, label, evidence: Some(vec![key_pos]) }
    };
    let train = (0..p.splits.train).map(|_| make(&mut rng)).collect();
    let validation = (0..p.splits.validation).map(|_| make(&mut rng)).collect();
    let test = (0..p.splits.test).map(|_| make(&mut rng)).collect();
    Ok(TokenDataset { vocab, num_classes: classes, train, validation, test, generator: info("leakage", p, p.seed) })
}

pub fn gen_paired_lookup(p: &PairedParams) -> Result<TokenDataset, DataError> {
    p.splits.check()?;
    if p.entities < 2 || p.locations < 2 {
        return Err(DataError::Config("paired lookup needs at least 2 entities and 2 locations".into()));
    }
    if p.statements == 0 || p.statements > p.entities {
        return Err(DataError::Config(format!(
            "statements must be in 1..={} (one per distinct entity)",
            p.entities
        )));
    }
    let mut vocab = Vocabulary::new();
    let entity_ids: Vec<usize> = (0..p.entities).map(|e| vocab.add(&format!("ent{e}"))).collect();
    let location_ids: Vec<usize> = (0..p.locations).map(|l| vocab.add(&format!("loc{l}"))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let make = |rng: &mut ChaCha8Rng| {
        let ents = sample(rng, p.entities, p.statements).into_vec();
        let locs: Vec<usize> = (0..p.statements).map(|_| rng.random_range(0..p.locations)).collect();
        let q = rng.random_range(0..p.statements);
        let mut tokens = vec![BOS];
        for (e, l) in ents.iter().zip(&locs) {
            tokens.push(entity_ids[*e]);
            tokens.push(location_ids[*l]);
        }
        tokens.push(EOS);
        let aux = vec![BOS, entity_ids[ents[q]], EOS];
        Observation { tokens, aux_tokens: Some(aux), label: locs[q], evidence: Some(vec![2 + 2 * q]) }
    };
    let train = (0..p.splits.train).map(|_| make(&mut rng)).collect();
    let validation = (0..p.splits.validation).map(|_| make(&mut rng)).collect();
    let test = (0..p.splits.test).map(|_| make(&mut rng)).collect();
    Ok(TokenDataset { vocab, num_classes: p.locations, train, validation, test, generator: info("paired", p, p.seed) })
}
