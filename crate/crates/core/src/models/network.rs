use rand::Rng;
use rand_distr::StandardNormal;

use super::{Architecture, ModelConfig};
use crate::data::{is_attendable, Observation, PAD};
use crate::grad::{GradError, ParamSet, Tape, Tensor, Var};

/// Parameters recorded on a tape, in [`ParamSet`] name order.
pub struct Bound {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bound {
    /// Records every parameter as a differentiable leaf (`trainable`) or as
    /// a constant.
    pub fn new(tape: &mut Tape, params: &ParamSet, trainable: bool) -> Self {
        let mut names = Vec::with_capacity(params.len());
        let mut vars = Vec::with_capacity(params.len());
        for (name, t) in params.iter() {
            names.push(name.to_string());
            vars.push(if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) });
        }
        Self { names, vars }
    }

    pub fn get(&self, name: &str) -> Result<Var, GradError> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .map(|i| self.vars[i])
            .map_err(|_| GradError::InvalidArgument(format!("missing parameter `{name}`")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Sequences padded to a common length and laid out time-major: row
/// `t * batch + b` holds position `t` of example `b`.
#[derive(Clone, Debug)]
pub struct EncodedBatch {
    pub batch: usize,
    pub steps: usize,
    pub ids: Vec<usize>,
    pub valid: Vec<bool>,
    pub aux: Option<Box<EncodedBatch>>,
}

impl EncodedBatch {
    pub fn from_sequences(seqs: &[&[usize]]) -> Result<Self, GradError> {
        let batch = seqs.len();
        let steps = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        if batch == 0 || steps == 0 || seqs.iter().any(|s| s.is_empty()) {
            return Err(GradError::InvalidArgument("empty sequence".into()));
        }
        let mut ids = vec![PAD; steps * batch];
        let mut valid = vec![false; steps * batch];
        for (b, s) in seqs.iter().enumerate() {
            for (t, &id) in s.iter().enumerate() {
                ids[t * batch + b] = id;
                valid[t * batch + b] = true;
            }
        }
        Ok(Self { batch, steps, ids, valid, aux: None })
    }

    pub fn new(obs: &[&Observation]) -> Result<Self, GradError> {
        let seqs: Vec<&[usize]> = obs.iter().map(|o| o.tokens.as_slice()).collect();
        let mut out = Self::from_sequences(&seqs)?;
        if obs.iter().any(|o| o.aux_tokens.is_some()) {
            let aux: Option<Vec<&[usize]>> = obs.iter().map(|o| o.aux_tokens.as_deref()).collect();
            let aux = aux.ok_or_else(|| GradError::InvalidArgument("batch mixes paired and single examples".into()))?;
            out.aux = Some(Box::new(Self::from_sequences(&aux)?));
        }
        Ok(out)
    }

    /// Row-major `[batch, steps]` flags of positions that take part in
    /// attention.
    pub fn attention_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.batch * self.steps];
        for t in 0..self.steps {
            for b in 0..self.batch {
                let r = t * self.batch + b;
                m[b * self.steps + t] = self.valid[r] && is_attendable(self.ids[r]);
            }
        }
        m
    }

    fn step_fully_valid(&self, t: usize) -> bool {
        self.valid[t * self.batch..(t + 1) * self.batch].iter().all(|&v| v)
    }

    fn step_mask(&self, t: usize) -> Tensor {
        let m = self.valid[t * self.batch..(t + 1) * self.batch].iter().map(|&v| f64::from(u8::from(v))).collect();
        Tensor::new(vec![self.batch, 1], m).expect("mask shape")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputMode {
    /// Row gather from the embedding table.
    Ids,
    /// Differentiable one-hot leaf `[steps * batch, V]` scaled by `scale`,
    /// multiplied into the embedding table.
    OneHot { scale: f64 },
}

pub struct Forward {
    /// `[batch, C]`.
    pub logits: Var,
    /// `[batch, steps]`, zero at non-attendable positions.
    pub attention: Option<Var>,
    /// The one-hot input leaf when [`InputMode::OneHot`] was requested.
    pub onehot: Option<Var>,
}

/// Where token representations come from.
#[derive(Clone, Copy)]
enum Input {
    Mode(InputMode),
    /// Caller-supplied `[steps * batch, V]` input multiplied into the table.
    Dense(Var),
}

fn embed(tape: &mut Tape, table: Var, ids: &[usize], vocab: usize, input: Input) -> Result<(Var, Option<Var>), GradError> {
    match input {
        Input::Mode(InputMode::Ids) => Ok((tape.embedding(table, ids)?, None)),
        Input::Mode(InputMode::OneHot { scale }) => {
            let mut x = vec![0.0; ids.len() * vocab];
            for (r, &id) in ids.iter().enumerate() {
                if id >= vocab {
                    return Err(GradError::InvalidArgument(format!("token id {id} outside vocabulary of {vocab}")));
                }
                x[r * vocab + id] = scale;
            }
            let leaf = tape.leaf(Tensor::new(vec![ids.len(), vocab], x)?);
            Ok((tape.matmul(leaf, table)?, Some(leaf)))
        }
        Input::Dense(x) => {
            let shape = tape.value(x).shape();
            if shape != [ids.len(), vocab] {
                return Err(GradError::ShapeMismatch { op: "forward_dense", detail: format!("{shape:?}") });
            }
            Ok((tape.matmul(x, table)?, Some(x)))
        }
    }
}

/// One LSTM direction over time-major inputs `[steps * batch, d]`; returns
/// the hidden state of every step in time order.
fn lstm(
    tape: &mut Tape,
    bound: &Bound,
    prefix: &str,
    xs: Var,
    enc: &EncodedBatch,
    hidden: usize,
    reverse: bool,
) -> Result<Vec<Var>, GradError> {
    let (b, h) = (enc.batch, hidden);
    let w_ih = bound.get(&format!("{prefix}.w_ih"))?;
    let w_hh = bound.get(&format!("{prefix}.w_hh"))?;
    let bias = bound.get(&format!("{prefix}.b"))?;
    let proj = tape.matmul(xs, w_ih)?;
    let proj = tape.add(proj, bias)?;
    let mut hs = tape.constant(Tensor::zeros(&[b, h]));
    let mut cs = tape.constant(Tensor::zeros(&[b, h]));
    let mut out = vec![hs; enc.steps];
    let order: Vec<usize> = if reverse { (0..enc.steps).rev().collect() } else { (0..enc.steps).collect() };
    for t in order {
        let xt = tape.slice(proj, 0, t * b, b)?;
        let rec = tape.matmul(hs, w_hh)?;
        let gates = tape.add(xt, rec)?;
        let i = tape.slice(gates, 1, 0, h)?;
        let i = tape.sigmoid(i)?;
        let f = tape.slice(gates, 1, h, h)?;
        let f = tape.sigmoid(f)?;
        let g = tape.slice(gates, 1, 2 * h, h)?;
        let g = tape.tanh(g)?;
        let o = tape.slice(gates, 1, 3 * h, h)?;
        let o = tape.sigmoid(o)?;
        let keep = tape.mul(f, cs)?;
        let write = tape.mul(i, g)?;
        let c_new = tape.add(keep, write)?;
        let c_act = tape.tanh(c_new)?;
        let h_new = tape.mul(o, c_act)?;
        if enc.step_fully_valid(t) {
            hs = h_new;
            cs = c_new;
        } else {
            // Padded rows carry their previous state through unchanged.
            let m = tape.constant(enc.step_mask(t));
            let dh = tape.sub(h_new, hs)?;
            let dh = tape.mul(dh, m)?;
            hs = tape.add(hs, dh)?;
            let dc = tape.sub(c_new, cs)?;
            let dc = tape.mul(dc, m)?;
            cs = tape.add(cs, dc)?;
        }
        out[t] = hs;
    }
    Ok(out)
}

/// Bidirectional encoder; returns per-step `[batch, 2H]` states and the
/// final state `[batch, 2H]` (forward after the last valid token, backward
/// after the first).
fn bilstm(
    tape: &mut Tape,
    bound: &Bound,
    prefix: &str,
    xs: Var,
    enc: &EncodedBatch,
    hidden: usize,
) -> Result<(Vec<Var>, Var), GradError> {
    let fwd = lstm(tape, bound, &format!("{prefix}fwd"), xs, enc, hidden, false)?;
    let bwd = lstm(tape, bound, &format!("{prefix}bwd"), xs, enc, hidden, true)?;
    let mut steps = Vec::with_capacity(enc.steps);
    for t in 0..enc.steps {
        steps.push(tape.concat(&[fwd[t], bwd[t]], 1)?);
    }
    let last = tape.concat(&[fwd[enc.steps - 1], bwd[0]], 1)?;
    Ok((steps, last))
}

/// Builds the forward graph for `enc` on `tape`.
pub fn forward(
    tape: &mut Tape,
    bound: &Bound,
    config: &ModelConfig,
    enc: &EncodedBatch,
    mode: InputMode,
) -> Result<Forward, GradError> {
    forward_input(tape, bound, config, enc, Input::Mode(mode))
}

/// Like [`forward`] with an arbitrary dense primary input `x`
/// (`[steps * batch, V]`, time-major) in place of the one-hot encoding.
/// `enc` still supplies lengths, attendability and the auxiliary sequence.
pub fn forward_dense(
    tape: &mut Tape,
    bound: &Bound,
    config: &ModelConfig,
    enc: &EncodedBatch,
    x: Var,
) -> Result<Forward, GradError> {
    forward_input(tape, bound, config, enc, Input::Dense(x))
}

fn forward_input(
    tape: &mut Tape,
    bound: &Bound,
    config: &ModelConfig,
    enc: &EncodedBatch,
    mode: Input,
) -> Result<Forward, GradError> {
    let (b, steps) = (enc.batch, enc.steps);
    if config.architecture == Architecture::Linear {
        let table = bound.get("linear.w")?;
        let (per_token, onehot) = embed(tape, table, &enc.ids, config.vocab_size, mode)?;
        let mut pool = vec![0.0; b * steps * b];
        for t in 0..steps {
            for j in 0..b {
                if enc.valid[t * b + j] {
                    pool[j * steps * b + t * b + j] = 1.0;
                }
            }
        }
        let pool = tape.constant(Tensor::new(vec![b, steps * b], pool)?);
        let pooled = tape.matmul(pool, per_token)?;
        let bias = bound.get("linear.b")?;
        let logits = tape.add(pooled, bias)?;
        return Ok(Forward { logits, attention: None, onehot });
    }

    let hidden = config.hidden_dim;
    let table = bound.get("embedding")?;
    let (xs, onehot) = embed(tape, table, &enc.ids, config.vocab_size, mode)?;
    let (states, _) = bilstm(tape, bound, "", xs, enc, hidden)?;
    let stacked = tape.concat(&states, 0)?;

    let pre = match config.architecture {
        Architecture::BilstmAttentionPaired => {
            let aux = enc
                .aux
                .as_deref()
                .ok_or_else(|| GradError::InvalidArgument("paired model needs an auxiliary sequence".into()))?;
            if aux.batch != b {
                return Err(GradError::InvalidArgument("auxiliary batch size differs".into()));
            }
            let ys = tape.embedding(table, &aux.ids)?;
            let (_, y_last) = bilstm(tape, bound, "aux_", ys, aux, hidden)?;
            let wx = bound.get("attn.w_x")?;
            let wy = bound.get("attn.w_y")?;
            let px = tape.matmul(stacked, wx)?;
            let q = tape.matmul(y_last, wy)?;
            let q_rep = tape.concat(&vec![q; steps], 0)?;
            tape.add(px, q_rep)?
        }
        _ => {
            let w = bound.get("attn.w")?;
            let bias = bound.get("attn.b")?;
            let p = tape.matmul(stacked, w)?;
            tape.add(p, bias)?
        }
    };
    let u = tape.tanh(pre)?;
    let v = bound.get("attn.v")?;
    let scores = tape.matmul(u, v)?;
    let scores = tape.reshape(scores, &[steps, b])?;
    let scores = tape.transpose(scores)?;
    let mask = enc.attention_mask();
    let alpha = tape.masked_softmax(scores, Some(&mask))?;

    let mut context: Option<Var> = None;
    for (t, &h_t) in states.iter().enumerate() {
        let a_t = tape.slice(alpha, 1, t, 1)?;
        let term = tape.mul(h_t, a_t)?;
        context = Some(match context {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let context = context.expect("at least one step");
    let w_out = bound.get("out.w")?;
    let b_out = bound.get("out.b")?;
    let logits = tape.matmul(context, w_out)?;
    let logits = tape.add(logits, b_out)?;
    Ok(Forward { logits, attention: Some(alpha), onehot })
}

fn uniform(rng: &mut impl Rng, shape: &[usize], k: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-k..k)).collect()).expect("shape")
}

fn lstm_params(params: &mut ParamSet, rng: &mut impl Rng, prefix: &str, input: usize, hidden: usize) {
    let k = 1.0 / (hidden as f64).sqrt();
    params.insert(format!("{prefix}.w_ih"), uniform(rng, &[input, 4 * hidden], k));
    params.insert(format!("{prefix}.w_hh"), uniform(rng, &[hidden, 4 * hidden], k));
    let mut b = uniform(rng, &[4 * hidden], k);
    b.values_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
    params.insert(format!("{prefix}.b"), b);
}

/// Fresh parameters for `config`, drawn deterministically from `rng`.
pub(crate) fn init_params(config: &ModelConfig, rng: &mut impl Rng) -> ParamSet {
    let mut p = ParamSet::new();
    let (v, d, h, c) = (config.vocab_size, config.embedding_dim, config.hidden_dim, config.num_classes);
    if config.architecture == Architecture::Linear {
        p.insert("linear.w", Tensor::zeros(&[v, c]));
        p.insert("linear.b", Tensor::zeros(&[c]));
        return p;
    }
    let emb = (0..v * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    p.insert("embedding", Tensor::new(vec![v, d], emb).expect("shape"));
    lstm_params(&mut p, rng, "fwd", d, h);
    lstm_params(&mut p, rng, "bwd", d, h);
    let k_att = 1.0 / ((2 * h) as f64).sqrt();
    if config.architecture == Architecture::BilstmAttentionPaired {
        lstm_params(&mut p, rng, "aux_fwd", d, h);
        lstm_params(&mut p, rng, "aux_bwd", d, h);
        p.insert("attn.w_x", uniform(rng, &[2 * h, h], k_att));
        p.insert("attn.w_y", uniform(rng, &[2 * h, h], k_att));
    } else {
        p.insert("attn.w", uniform(rng, &[2 * h, h], k_att));
        p.insert("attn.b", Tensor::zeros(&[h]));
    }
    p.insert("attn.v", uniform(rng, &[h, 1], 1.0 / (h as f64).sqrt()));
    p.insert("out.w", uniform(rng, &[2 * h, c], k_att));
    p.insert("out.b", Tensor::zeros(&[c]));
    p
}
