#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roarbench::data::{Observation, BOS, EOS};
use roarbench::grad::{Tape, Tensor};
use roarbench::models::{forward_dense, Architecture, Bound, EncodedBatch, ModelConfig, TrainedModel};

pub mod gradcheck;

pub const V: usize = 9;

/// Random tiny model (d = 2, hidden = 2). Linear models get random weights
/// instead of their all-zero initialization.
pub fn tiny_model(arch: Architecture, seed: u64, classes: usize) -> TrainedModel {
    let mut config = ModelConfig::new(arch, V, classes);
    config.embedding_dim = 2;
    config.hidden_dim = 2;
    config.seed = seed;
    let mut model = TrainedModel::initialized(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for t in model.params.tensors_mut() {
        for v in t.values_mut() {
            // Spread the biases and zero-initialized tensors too.
            *v += rng.random_range(-0.5..0.5);
        }
    }
    model
}

/// `[BOS] t_1..t_len [EOS]` with content ids in 5..V.
pub fn random_obs(rng: &mut ChaCha8Rng, len: usize, paired: bool, classes: usize) -> Observation {
    let mut tokens = vec![BOS];
    tokens.extend((0..len).map(|_| rng.random_range(5..V)));
    tokens.push(EOS);
    let aux_tokens = paired.then(|| vec![BOS, rng.random_range(5..V), EOS]);
    Observation { tokens, aux_tokens, label: rng.random_range(0..classes), evidence: None }
}

pub fn onehot(obs: &Observation) -> Tensor {
    let t = obs.tokens.len();
    let mut x = vec![0.0; t * V];
    for (i, &id) in obs.tokens.iter().enumerate() {
        x[i * V + id] = 1.0;
    }
    Tensor::new(vec![t, V], x).unwrap()
}

/// Gold logit for a single observation with an arbitrary dense input
/// `[T, V]` in place of its one-hot encoding.
pub fn dense_gold(model: &TrainedModel, obs: &Observation, x: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, &model.params, false);
    let enc = EncodedBatch::new(&[obs]).unwrap();
    let xv = tape.constant(x.clone());
    let fwd = forward_dense(&mut tape, &bound, &model.config, &enc, xv).unwrap();
    tape.value(fwd.logits).get(0, obs.label)
}

/// Central-difference gradient of the gold logit w.r.t. the dense input at
/// `x`, as `[T][V]`.
pub fn fd_input_gradient(model: &TrainedModel, obs: &Observation, x: &Tensor, h: f64) -> Vec<Vec<f64>> {
    let t = obs.tokens.len();
    let mut probe = x.clone();
    let mut out = vec![vec![0.0; V]; t];
    for (i, row) in out.iter_mut().enumerate() {
        for (v, g) in row.iter_mut().enumerate() {
            let k = i * V + v;
            let orig = probe.values()[k];
            probe.values_mut()[k] = orig + h;
            let plus = dense_gold(model, obs, &probe);
            probe.values_mut()[k] = orig - h;
            let minus = dense_gold(model, obs, &probe);
            probe.values_mut()[k] = orig;
            *g = (plus - minus) / (2.0 * h);
        }
    }
    out
}
