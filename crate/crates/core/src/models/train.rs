use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{forward, init_params, Bound, EncodedBatch, InputMode};
use super::{ModelConfig, ModelError};
use crate::data::Observation;
use crate::grad::{GradError, OptimizerState, ParamSet, Tape};
use crate::metrics::{classification_metric, MetricKind};

/// Inference batch size; independent of the training batch size.
const EVAL_BATCH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
}

fn diverged(epoch: usize, e: GradError) -> ModelError {
    match e {
        GradError::NonFinite { .. } | GradError::NonFiniteGradient(_) => {
            ModelError::Diverged { epoch, reason: e.to_string() }
        }
        other => ModelError::Grad(other),
    }
}

fn batch_loss(
    config: &ModelConfig,
    params: &ParamSet,
    obs: &[&Observation],
    trainable: bool,
) -> Result<(Tape, Bound, crate::grad::Var), GradError> {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, params, trainable);
    let enc = EncodedBatch::new(obs)?;
    let fwd = forward(&mut tape, &bound, config, &enc, InputMode::Ids)?;
    let labels: Vec<usize> = obs.iter().map(|o| o.label).collect();
    let loss = tape.cross_entropy(fwd.logits, &labels)?;
    Ok((tape, bound, loss))
}

fn mean_loss(config: &ModelConfig, params: &ParamSet, split: &[Observation]) -> Result<f64, GradError> {
    let mut total = 0.0;
    for chunk in split.chunks(EVAL_BATCH) {
        let refs: Vec<&Observation> = chunk.iter().collect();
        let (tape, _, loss) = batch_loss(config, params, &refs, false)?;
        total += tape.value(loss).item() * chunk.len() as f64;
    }
    Ok(total / split.len() as f64)
}

/// Trains from a fresh initialization drawn from `config.seed` and returns
/// the parameters of the epoch with the lowest validation loss.
pub fn train(config: &ModelConfig, train: &[Observation], validation: &[Observation]) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    if validation.is_empty() {
        return Err(ModelError::EmptySplit("validation"));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut params = init_params(config, &mut init_rng);
    let mut opt = OptimizerState::new(config.optimizer.clone(), &params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(f64, usize, ParamSet)> = None;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&Observation> = chunk.iter().map(|&i| &train[i]).collect();
            let (mut tape, bound, loss) = batch_loss(config, &params, &refs, true).map_err(|e| diverged(epoch, e))?;
            total += tape.value(loss).item() * chunk.len() as f64;
            let mut grads = tape.backward(loss)?;
            let g: Vec<_> = bound.vars().iter().map(|&v| grads.take(v)).collect();
            opt.step(&mut params, &g).map_err(|e| diverged(epoch, e))?;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = mean_loss(config, &params, validation).map_err(|e| diverged(epoch, e))?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(ModelError::Diverged { epoch, reason: "non-finite loss".into() });
        }
        history.push(EpochRecord { epoch, train_loss, val_loss });
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainedModel { config: config.clone(), params, history, best_epoch })
}

impl TrainedModel {
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Self {
        Self { config, params, history: Vec::new(), best_epoch: 0 }
    }

    /// Untrained model with the deterministic initialization for `config`.
    pub fn initialized(config: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::from_params(config.clone(), init_params(config, &mut rng))
    }

    fn run<T>(
        &self,
        obs: &[Observation],
        mut each: impl FnMut(&Tape, &super::Forward, usize) -> T,
    ) -> Result<Vec<T>, ModelError> {
        let mut out = Vec::with_capacity(obs.len());
        for chunk in obs.chunks(EVAL_BATCH) {
            let refs: Vec<&Observation> = chunk.iter().collect();
            let mut tape = Tape::new();
            let bound = Bound::new(&mut tape, &self.params, false);
            let enc = EncodedBatch::new(&refs)?;
            let fwd = forward(&mut tape, &bound, &self.config, &enc, InputMode::Ids)?;
            for b in 0..chunk.len() {
                out.push(each(&tape, &fwd, b));
            }
        }
        Ok(out)
    }

    pub fn logits(&self, obs: &[Observation]) -> Result<Vec<Vec<f64>>, ModelError> {
        self.run(obs, |tape, fwd, b| tape.value(fwd.logits).row(b).to_vec())
    }

    pub fn predict(&self, obs: &[Observation]) -> Result<Vec<usize>, ModelError> {
        Ok(self.logits(obs)?.iter().map(|row| argmax(row)).collect())
    }

    /// Attention weights per observation, trimmed to its own length.
    pub fn attention(&self, obs: &[Observation]) -> Result<Vec<Vec<f64>>, ModelError> {
        if !self.config.architecture.has_attention() {
            return Err(ModelError::Unsupported("linear model has no attention layer".into()));
        }
        let mut i = 0;
        self.run(obs, |tape, fwd, b| {
            let row = tape.value(fwd.attention.expect("attention")).row(b)[..obs[i].tokens.len()].to_vec();
            i += 1;
            row
        })
    }

    pub fn loss(&self, obs: &[Observation]) -> Result<f64, ModelError> {
        if obs.is_empty() {
            return Err(ModelError::EmptySplit("evaluation"));
        }
        Ok(mean_loss(&self.config, &self.params, obs)?)
    }

    pub fn evaluate(&self, obs: &[Observation], metric: MetricKind) -> Result<f64, ModelError> {
        if obs.is_empty() {
            return Err(ModelError::EmptySplit("evaluation"));
        }
        let preds = self.predict(obs)?;
        let golds: Vec<usize> = obs.iter().map(|o| o.label).collect();
        classification_metric(&preds, &golds, self.config.num_classes, metric)
            .map_err(|e| ModelError::Config(e.to_string()))
    }

    /// Training history as `epoch,train_loss,val_loss` CSV.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for r in &self.history {
            writeln!(s, "{},{},{}", r.epoch, r.train_loss, r.val_loss).unwrap();
        }
        s
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
