//! Per-token importance for the gold label: attention, gradient L2,
//! input x gradient, integrated gradients, plus random and planted-evidence
//! references.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Observation, MASK};
use crate::grad::{GradError, Tape, Tensor};
use crate::models::{forward, Bound, EncodedBatch, InputMode, TrainedModel};

const BATCH: usize = 128;

/// Default number of path points for integrated gradients.
pub const IG_STEPS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum ImportanceError {
    #[error("measure `{measure}` is not supported by {reason}")]
    Unsupported { measure: Measure, reason: String },
    #[error("observation {0} carries no evidence annotation")]
    MissingEvidence(u64),
    #[error("integrated gradients needs at least one step")]
    ZeroSteps,
    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),
    #[error(transparent)]
    Grad(#[from] GradError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Attention,
    Gradient,
    #[serde(rename = "input_x_gradient")]
    InputTimesGradient,
    IntegratedGradient,
    Random,
    /// Every evidence position scores 1.
    Oracle,
    /// Only the first evidence position that is still unmasked scores 1.
    OracleFirst,
}

impl Measure {
    pub const ALL: [Measure; 7] = [
        Measure::Attention,
        Measure::Gradient,
        Measure::InputTimesGradient,
        Measure::IntegratedGradient,
        Measure::Random,
        Measure::Oracle,
        Measure::OracleFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Attention => "attention",
            Measure::Gradient => "gradient",
            Measure::InputTimesGradient => "input_x_gradient",
            Measure::IntegratedGradient => "integrated_gradient",
            Measure::Random => "random",
            Measure::Oracle => "oracle",
            Measure::OracleFirst => "oracle_first",
        }
    }

    /// Whether the scores depend on the model.
    pub fn uses_model(self) -> bool {
        !matches!(self, Measure::Random | Measure::Oracle | Measure::OracleFirst)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = ImportanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Measure::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| ImportanceError::UnknownMeasure(s.into()))
    }
}

/// Scores for one observation, aligned with its primary tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMap {
    pub obs_id: u64,
    pub measure: Measure,
    pub iteration: usize,
    pub scores: Vec<f64>,
    pub maskable: Vec<bool>,
}

impl ImportanceMap {
    /// Scores restricted to maskable positions.
    pub fn maskable_scores(&self) -> Vec<f64> {
        self.scores.iter().zip(&self.maskable).filter(|(_, &m)| m).map(|(&s, _)| s).collect()
    }
}

/// Everything a measure may depend on besides the observations.
#[derive(Clone, Copy, Debug)]
pub struct Context<'a> {
    pub model: Option<&'a TrainedModel>,
    pub seed: u64,
    pub iteration: usize,
    pub ig_steps: usize,
}

/// Computes maps for `obs` (already carrying the current masks), whose
/// global ids are `ids`.
pub fn compute(
    measure: Measure,
    ctx: &Context<'_>,
    obs: &[Observation],
    ids: &[u64],
) -> Result<Vec<ImportanceMap>, ImportanceError> {
    assert_eq!(obs.len(), ids.len(), "one id per observation");
    let need_model = || {
        ctx.model.ok_or_else(|| ImportanceError::Unsupported { measure, reason: "a missing model".into() })
    };
    let scores: Vec<Vec<f64>> = match measure {
        Measure::Attention => attention_scores(need_model()?, obs)?,
        Measure::Gradient => gradient_scores(need_model()?, obs)?.into_iter().map(|(l2, _)| l2).collect(),
        Measure::InputTimesGradient => gradient_scores(need_model()?, obs)?.into_iter().map(|(_, ixg)| ixg).collect(),
        Measure::IntegratedGradient => integrated_gradient_scores(need_model()?, obs, ctx.ig_steps)?,
        Measure::Random => obs.iter().zip(ids).map(|(o, &id)| random_scores(o, ctx.seed, ctx.iteration, id)).collect(),
        Measure::Oracle => obs.iter().zip(ids).map(|(o, &id)| oracle_scores(o, id)).collect::<Result<_, _>>()?,
        Measure::OracleFirst => {
            obs.iter().zip(ids).map(|(o, &id)| oracle_first_scores(o, id)).collect::<Result<_, _>>()?
        }
    };
    Ok(obs
        .iter()
        .zip(ids)
        .zip(scores)
        .map(|((o, &obs_id), scores)| ImportanceMap {
            obs_id,
            measure,
            iteration: ctx.iteration,
            scores,
            maskable: o.maskable(),
        })
        .collect())
}

pub fn attention_scores(model: &TrainedModel, obs: &[Observation]) -> Result<Vec<Vec<f64>>, ImportanceError> {
    if !model.config.architecture.has_attention() {
        return Err(ImportanceError::Unsupported {
            measure: Measure::Attention,
            reason: "a model without an attention layer".into(),
        });
    }
    let mut out = Vec::with_capacity(obs.len());
    for chunk in obs.chunks(BATCH) {
        let refs: Vec<&Observation> = chunk.iter().collect();
        let mut tape = Tape::new();
        let bound = Bound::new(&mut tape, &model.params, false);
        let enc = EncodedBatch::new(&refs)?;
        let fwd = forward(&mut tape, &bound, &model.config, &enc, InputMode::Ids)?;
        let alpha = tape.value(fwd.attention.expect("attention model"));
        for (b, o) in chunk.iter().enumerate() {
            out.push(alpha.row(b)[..o.tokens.len()].to_vec());
        }
    }
    Ok(out)
}

/// Gradient of the summed gold logits w.r.t. a one-hot input scaled by
/// `scale`; returns the `[steps * batch, V]` gradient and the batch layout.
fn gold_logit_gradient(
    model: &TrainedModel,
    chunk: &[Observation],
    scale: f64,
) -> Result<(Tensor, EncodedBatch), ImportanceError> {
    let refs: Vec<&Observation> = chunk.iter().collect();
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, &model.params, false);
    let enc = EncodedBatch::new(&refs)?;
    let fwd = forward(&mut tape, &bound, &model.config, &enc, InputMode::OneHot { scale })?;
    let c = model.config.num_classes;
    let mut select = vec![0.0; chunk.len() * c];
    for (b, o) in chunk.iter().enumerate() {
        select[b * c + o.label] = 1.0;
    }
    // Batch rows do not interact, so the gradient of the sum holds each
    // example's own gradient in its rows.
    let select = tape.constant(Tensor::new(vec![chunk.len(), c], select)?);
    let gold = tape.mul(fwd.logits, select)?;
    let total = tape.sum(gold)?;
    let mut grads = tape.backward(total)?;
    Ok((grads.take(fwd.onehot.expect("one-hot input")), enc))
}

/// Per observation: (L2 norm over the vocabulary axis, entry at the observed
/// token) of the gold-logit gradient w.r.t. the one-hot input.
pub fn gradient_scores(model: &TrainedModel, obs: &[Observation]) -> Result<Vec<(Vec<f64>, Vec<f64>)>, ImportanceError> {
    let v = model.config.vocab_size;
    let mut out = Vec::with_capacity(obs.len());
    for chunk in obs.chunks(BATCH) {
        let (g, enc) = gold_logit_gradient(model, chunk, 1.0)?;
        for (b, o) in chunk.iter().enumerate() {
            let mut l2 = Vec::with_capacity(o.tokens.len());
            let mut ixg = Vec::with_capacity(o.tokens.len());
            for (t, &id) in o.tokens.iter().enumerate() {
                let row = &g.values()[(t * enc.batch + b) * v..(t * enc.batch + b + 1) * v];
                l2.push(row.iter().map(|x| x * x).sum::<f64>().sqrt());
                ixg.push(row[id]);
            }
            out.push((l2, ixg));
        }
    }
    Ok(out)
}

/// Right Riemann sum over `k` points on the straight path from the all-zero
/// one-hot baseline, reduced to the observed-token coordinate.
pub fn integrated_gradient_scores(
    model: &TrainedModel,
    obs: &[Observation],
    k: usize,
) -> Result<Vec<Vec<f64>>, ImportanceError> {
    if k == 0 {
        return Err(ImportanceError::ZeroSteps);
    }
    let v = model.config.vocab_size;
    let mut out = Vec::with_capacity(obs.len());
    for chunk in obs.chunks(BATCH) {
        // Running mean over path points: a constant gradient is reproduced
        // exactly, so linear models give input x gradient bit for bit.
        // (x - b) is 1 at the observed coordinate.
        let mut acc: Vec<Vec<f64>> = chunk.iter().map(|o| vec![0.0; o.tokens.len()]).collect();
        for i in 1..=k {
            let (g, enc) = gold_logit_gradient(model, chunk, i as f64 / k as f64)?;
            for (b, o) in chunk.iter().enumerate() {
                for (t, &id) in o.tokens.iter().enumerate() {
                    let gi = g.values()[(t * enc.batch + b) * v + id];
                    acc[b][t] += (gi - acc[b][t]) / i as f64;
                }
            }
        }
        out.extend(acc);
    }
    Ok(out)
}

/// Gold logit of each observation with its one-hot input scaled by `scale`
/// (0 gives the baseline).
pub fn gold_logits(model: &TrainedModel, obs: &[Observation], scale: f64) -> Result<Vec<f64>, ImportanceError> {
    let mut out = Vec::with_capacity(obs.len());
    for chunk in obs.chunks(BATCH) {
        let refs: Vec<&Observation> = chunk.iter().collect();
        let mut tape = Tape::new();
        let bound = Bound::new(&mut tape, &model.params, false);
        let enc = EncodedBatch::new(&refs)?;
        let fwd = forward(&mut tape, &bound, &model.config, &enc, InputMode::OneHot { scale })?;
        let logits = tape.value(fwd.logits);
        out.extend(chunk.iter().enumerate().map(|(b, o)| logits.get(b, o.label)));
    }
    Ok(out)
}

/// Stable seed for the (seed, iteration, observation) triple.
pub fn stable_seed(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn random_scores(obs: &Observation, seed: u64, iteration: usize, obs_id: u64) -> Vec<f64> {
    let s = stable_seed(&[b"random", &seed.to_le_bytes(), &(iteration as u64).to_le_bytes(), &obs_id.to_le_bytes()]);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    obs.maskable().iter().map(|&m| if m { rng.random::<f64>() } else { 0.0 }).collect()
}

fn evidence(obs: &Observation, obs_id: u64) -> Result<&[usize], ImportanceError> {
    obs.evidence.as_deref().ok_or(ImportanceError::MissingEvidence(obs_id))
}

/// 1 at evidence positions that still hold their token, 0 elsewhere.
pub fn oracle_scores(obs: &Observation, obs_id: u64) -> Result<Vec<f64>, ImportanceError> {
    let mut s = vec![0.0; obs.tokens.len()];
    for &p in evidence(obs, obs_id)? {
        if obs.tokens[p] != MASK {
            s[p] = 1.0;
        }
    }
    Ok(s)
}

pub fn oracle_first_scores(obs: &Observation, obs_id: u64) -> Result<Vec<f64>, ImportanceError> {
    let mut s = vec![0.0; obs.tokens.len()];
    if let Some(&p) = evidence(obs, obs_id)?.iter().filter(|&&p| obs.tokens[p] != MASK).min() {
        s[p] = 1.0;
    }
    Ok(s)
}

/// JSONL dump, one map per line.
pub fn maps_jsonl(maps: &[ImportanceMap]) -> String {
    let mut s = String::new();
    for m in maps {
        s.push_str(&serde_json::to_string(m).expect("map serializes"));
        s.push('\n');
    }
    s
}
