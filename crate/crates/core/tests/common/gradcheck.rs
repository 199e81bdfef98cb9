//! Central finite-difference checks of every tape primitive and of the
//! full model losses, 20 random instances each.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roarbench::data::{Observation, BOS, EOS, MASK};
use roarbench::grad::check::{check_gradients, relative_error};
use roarbench::grad::{GradError, ParamSet, Tape, Tensor, Var};
use roarbench::models::{forward, Architecture, Bound, EncodedBatch, InputMode, ModelConfig, TrainedModel};

use super::V;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub worst: f64,
}

impl CheckResult {
    pub fn passes(&self) -> bool {
        self.worst < TOL
    }
}

pub const INSTANCES: u64 = 20;
pub const TOL: f64 = 1e-4;
const H: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Reduces any output to a scalar through a fixed random weighting so
/// every output coordinate contributes a distinct gradient.
fn weighted_sum(t: &mut Tape, out: Var, seed: u64) -> Result<Var, GradError> {
    let shape = t.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let w = t.constant(rand_tensor(&mut rng, &shape, -1.0, 1.0));
    let p = t.mul(out, w)?;
    t.sum(p)
}

/// Worst relative error of one primitive over 20 random instances; `gen`
/// returns the inputs and a closure producing the (unreduced) output. A
/// failing evaluation counts as an infinite error.
fn check_op<G>(name: &str, out: &mut Vec<CheckResult>, gen: G)
where
    G: Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, GradError>>),
{
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let seed = 1000 + i;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inputs, f) = gen(&mut rng);
        let rep = check_gradients(
            &inputs,
            |t, v| {
                let out = f(t, v)?;
                weighted_sum(t, out, seed)
            },
            H,
        );
        worst = match rep {
            Ok(r) if r.coordinates > 0 => worst.max(r.max_rel_error),
            _ => f64::INFINITY,
        };
    }
    out.push(CheckResult { name: name.to_string(), instances: INSTANCES as usize, worst });
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5))
}

fn random_masked_obs(rng: &mut ChaCha8Rng, paired: bool, classes: usize) -> Observation {
    let len = rng.random_range(1..5);
    let mut tokens = vec![BOS];
    for _ in 0..len {
        tokens.push(if rng.random_bool(0.15) { MASK } else { rng.random_range(5..V) });
    }
    tokens.push(EOS);
    let aux_tokens = paired.then(|| {
        let mut a = vec![BOS];
        a.extend((0..rng.random_range(1..3)).map(|_| rng.random_range(5..V)));
        a.push(EOS);
        a
    });
    Observation { tokens, aux_tokens, label: rng.random_range(0..classes), evidence: None }
}

fn model_loss(config: &ModelConfig, params: &ParamSet, obs: &[Observation], trainable: bool) -> (Tape, Bound, Var) {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, params, trainable);
    let refs: Vec<&Observation> = obs.iter().collect();
    let enc = EncodedBatch::new(&refs).unwrap();
    let fwd = forward(&mut tape, &bound, config, &enc, InputMode::Ids).unwrap();
    let labels: Vec<usize> = obs.iter().map(|o| o.label).collect();
    let loss = tape.cross_entropy(fwd.logits, &labels).unwrap();
    (tape, bound, loss)
}

/// Max relative error of d loss / d params over every parameter coordinate.
pub fn model_param_check(arch: Architecture, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(2..4);
    let mut config = ModelConfig::new(arch, V, classes);
    config.embedding_dim = 2;
    config.hidden_dim = 2;
    config.seed = seed;
    let mut params = TrainedModel::initialized(&config).params;
    if arch == Architecture::Linear {
        for t in params.tensors_mut() {
            for v in t.values_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
    }
    let obs: Vec<Observation> = (0..3).map(|_| random_masked_obs(&mut rng, arch == Architecture::BilstmAttentionPaired, classes)).collect();

    let (mut tape, bound, loss) = model_loss(&config, &params, &obs, true);
    let mut grads = tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = bound.vars().iter().map(|&v| grads.take(v)).collect();
    let eval = |p: &ParamSet| {
        let (tape, _, loss) = model_loss(&config, p, &obs, false);
        tape.value(loss).item()
    };
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut worst: f64 = 0.0;
    for (k, name) in names.iter().enumerate() {
        for j in 0..params.get(name).unwrap().len() {
            let orig = params.get(name).unwrap().values()[j];
            params.get_mut(name).unwrap().values_mut()[j] = orig + H;
            let plus = eval(&params);
            params.get_mut(name).unwrap().values_mut()[j] = orig - H;
            let minus = eval(&params);
            params.get_mut(name).unwrap().values_mut()[j] = orig;
            let err = relative_error(analytic[k].values()[j], (plus - minus) / (2.0 * H));
            worst = worst.max(err);
        }
    }
    worst
}

/// Every tape primitive, including each broadcast pattern and both axes of
/// the axis-wise ops.
pub fn primitive_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();
    check_op("matmul", &mut out, |rng| {
        let (m, k) = dims(rng);
        let n = rng.random_range(1..5);
        let a = rand_tensor(rng, &[m, k], -2.0, 2.0);
        let b = rand_tensor(rng, &[k, n], -2.0, 2.0);
        (vec![a, b], Box::new(|t, v| t.matmul(v[0], v[1])))
    });
    for (which, op) in [("add", 0), ("sub", 1), ("mul", 2)] {
        for bc in 0..4 {
            check_op(&format!("{which} broadcast {bc}"), &mut out, |rng| {
                let (m, n) = dims(rng);
                let a = rand_tensor(rng, &[m, n], -2.0, 2.0);
                let bshape: Vec<usize> = match bc {
                    0 => vec![m, n],
                    1 => vec![n],
                    2 => vec![m, 1],
                    _ => vec![1],
                };
                let b = rand_tensor(rng, &bshape, -2.0, 2.0);
                (
                    vec![a, b],
                    Box::new(move |t, v| match op {
                        0 => t.add(v[0], v[1]),
                        1 => t.sub(v[0], v[1]),
                        _ => t.mul(v[0], v[1]),
                    }),
                )
            });
        }
    }
    check_op("scale", &mut out, |rng| {
        let (m, n) = dims(rng);
        let c = rng.random_range(-3.0..3.0);
        (vec![rand_tensor(rng, &[m, n], -2.0, 2.0)], Box::new(move |t, v| t.scale(v[0], c)))
    });
    check_op("tanh", &mut out, |rng| {
        let (m, n) = dims(rng);
        (vec![rand_tensor(rng, &[m, n], -3.0, 3.0)], Box::new(|t, v| t.tanh(v[0])))
    });
    check_op("sigmoid", &mut out, |rng| {
        let (m, n) = dims(rng);
        (vec![rand_tensor(rng, &[m, n], -4.0, 4.0)], Box::new(|t, v| t.sigmoid(v[0])))
    });
    check_op("exp", &mut out, |rng| {
        let (m, n) = dims(rng);
        (vec![rand_tensor(rng, &[m, n], -2.0, 2.0)], Box::new(|t, v| t.exp(v[0])))
    });
    check_op("log", &mut out, |rng| {
        let (m, n) = dims(rng);
        (vec![rand_tensor(rng, &[m, n], 0.2, 3.0)], Box::new(|t, v| t.log(v[0])))
    });
    check_op("softmax", &mut out, |rng| {
        let (m, n) = dims(rng);
        (vec![rand_tensor(rng, &[m, n + 1], -3.0, 3.0)], Box::new(|t, v| t.softmax(v[0])))
    });
    check_op("masked_softmax", &mut out, |rng| {
        let (m, n) = dims(rng);
        let n = n + 1;
        let mut mask: Vec<bool> = (0..m * n).map(|_| rng.random_bool(0.6)).collect();
        for r in 0..m {
            mask[r * n] = true;
        }
        let x = rand_tensor(rng, &[m, n], -3.0, 3.0);
        (vec![x], Box::new(move |t, v| t.masked_softmax(v[0], Some(&mask))))
    });
    for axis in 0..2 {
        check_op(&format!("concat axis {axis}"), &mut out, |rng| {
            let (m, n) = dims(rng);
            let k = rng.random_range(1..4);
            let a = rand_tensor(rng, &[m, n], -2.0, 2.0);
            let b = if axis == 0 { rand_tensor(rng, &[k, n], -2.0, 2.0) } else { rand_tensor(rng, &[m, k], -2.0, 2.0) };
            (vec![a, b], Box::new(move |t, v| t.concat(&[v[0], v[1], v[0]], axis)))
        });
        check_op(&format!("slice axis {axis}"), &mut out, |rng| {
            let (m, n) = (rng.random_range(2..6), rng.random_range(2..6));
            let extent = if axis == 0 { m } else { n };
            let start = rng.random_range(0..extent - 1);
            let len = rng.random_range(1..=extent - start);
            (vec![rand_tensor(rng, &[m, n], -2.0, 2.0)], Box::new(move |t, v| t.slice(v[0], axis, start, len)))
        });
    }
    check_op("reshape", &mut out, |rng| {
        let (m, n) = dims(rng);
        (vec![rand_tensor(rng, &[m, n], -2.0, 2.0)], Box::new(move |t, v| t.reshape(v[0], &[n, m])))
    });
    check_op("transpose", &mut out, |rng| {
        let (m, n) = dims(rng);
        (vec![rand_tensor(rng, &[m, n], -2.0, 2.0)], Box::new(|t, v| t.transpose(v[0])))
    });
    check_op("sum", &mut out, |rng| {
        let (m, n) = dims(rng);
        (vec![rand_tensor(rng, &[m, n], -2.0, 2.0)], Box::new(|t, v| t.sum(v[0])))
    });
    check_op("mean", &mut out, |rng| {
        let (m, n) = dims(rng);
        (vec![rand_tensor(rng, &[m, n], -2.0, 2.0)], Box::new(|t, v| t.mean(v[0])))
    });
    for axis in 0..2 {
        check_op(&format!("sum_axis axis {axis}"), &mut out, |rng| {
            let (m, n) = dims(rng);
            (vec![rand_tensor(rng, &[m, n], -2.0, 2.0)], Box::new(move |t, v| t.sum_axis(v[0], axis)))
        });
        check_op(&format!("l2_norm axis {axis}"), &mut out, |rng| {
            let (m, n) = dims(rng);
            // Entries bounded away from zero keep the norm differentiable.
            let mut x = rand_tensor(rng, &[m, n], 0.3, 2.0);
            for v in x.values_mut() {
                if rng.random_bool(0.5) {
                    *v = -*v;
                }
            }
            (vec![x], Box::new(move |t, v| t.l2_norm(v[0], axis)))
        });
    }
    check_op("embedding", &mut out, |rng| {
        let (v, d) = (rng.random_range(2..7), rng.random_range(1..4));
        let ids: Vec<usize> = (0..rng.random_range(1..8)).map(|_| rng.random_range(0..v)).collect();
        (vec![rand_tensor(rng, &[v, d], -2.0, 2.0)], Box::new(move |t, x| t.embedding(x[0], &ids)))
    });
    check_op("cross_entropy", &mut out, |rng| {
        let (b, c) = (rng.random_range(1..5), rng.random_range(2..5));
        let targets: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
        (vec![rand_tensor(rng, &[b, c], -3.0, 3.0)], Box::new(move |t, x| t.cross_entropy(x[0], &targets)))
    });
    out
}

pub fn model_checks() -> Vec<CheckResult> {
    [Architecture::BilstmAttentionSingle, Architecture::BilstmAttentionPaired, Architecture::Linear]
        .into_iter()
        .map(|arch| {
            let worst = (0..INSTANCES).map(|seed| model_param_check(arch, seed)).fold(0.0, f64::max);
            CheckResult { name: format!("{arch:?} parameters"), instances: INSTANCES as usize, worst }
        })
        .collect()
}
