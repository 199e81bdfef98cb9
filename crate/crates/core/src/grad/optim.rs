use serde::{Deserialize, Serialize};

use super::{GradError, ParamSet, Tensor};

/// Adam hyperparameters. Defaults follow the AMSGrad recipe used for the
/// BiLSTM-attention models: lr 1e-3, betas (0.9, 0.999), eps 1e-8 and an L2
/// weight decay of 1e-5 folded into the gradient before the moment updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub amsgrad: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 1e-5, amsgrad: true }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
    max_second: Vec<f64>,
}

/// Per-parameter moment accumulators plus the shared step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    config: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let moments = params
            .iter()
            .map(|(_, t)| Moments { first: vec![0.0; t.len()], second: vec![0.0; t.len()], max_second: vec![0.0; t.len()] })
            .collect();
        Self { config, step: 0, moments }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Running maximum of the second moment for parameter `index`.
    pub fn max_second_moment(&self, index: usize) -> &[f64] {
        &self.moments[index].max_second
    }

    /// Applies one update in place. `grads` must be aligned with `params`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<(), GradError> {
        if grads.len() != params.len() || grads.len() != self.moments.len() {
            return Err(GradError::ShapeMismatch {
                op: "optimizer_step",
                detail: format!("{} grads for {} params", grads.len(), params.len()),
            });
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(GradError::ShapeMismatch {
                    op: "optimizer_step",
                    detail: format!("{name}: param {:?} vs grad {:?}", p.shape(), g.shape()),
                });
            }
            if !g.all_finite() {
                return Err(GradError::NonFiniteGradient(name.to_string()));
            }
        }

        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for ((p, g), mom) in params.tensors_mut().zip(grads).zip(&mut self.moments) {
            let pv = p.values_mut();
            for i in 0..pv.len() {
                let grad = g.values()[i] + c.weight_decay * pv[i];
                mom.first[i] = c.beta1 * mom.first[i] + (1.0 - c.beta1) * grad;
                mom.second[i] = c.beta2 * mom.second[i] + (1.0 - c.beta2) * grad * grad;
                let second = if c.amsgrad {
                    mom.max_second[i] = mom.max_second[i].max(mom.second[i]);
                    mom.max_second[i]
                } else {
                    mom.second[i]
                };
                let denom = (second / bias2).sqrt() + c.epsilon;
                pv[i] -= c.learning_rate * (mom.first[i] / bias1) / denom;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::Tape;

    fn single(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(value));
        p
    }

    #[test]
    fn zero_gradient_without_decay_leaves_params() {
        let mut params = single(1.5);
        let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        let mut opt = OptimizerState::new(cfg, &params);
        for _ in 0..5 {
            opt.step(&mut params, &[Tensor::scalar(0.0)]).unwrap();
        }
        assert_eq!(params.get("w").unwrap().item(), 1.5);
        assert_eq!(opt.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g and v̂ = g² after bias correction, so the step is lr·g/(|g|+eps).
        let mut params = single(0.0);
        let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        let mut opt = OptimizerState::new(cfg, &params);
        opt.step(&mut params, &[Tensor::scalar(1.0)]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((params.get("w").unwrap().item() - expected).abs() < 1e-15);
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        let mut params = single(0.0);
        let cfg = AdamConfig { learning_rate: 0.1, weight_decay: 0.0, ..AdamConfig::default() };
        let mut opt = OptimizerState::new(cfg, &params);
        for _ in 0..100 {
            let mut tape = Tape::new();
            let w = tape.leaf(params.get("w").unwrap().clone());
            let three = tape.constant(Tensor::scalar(3.0));
            let d = tape.sub(w, three).unwrap();
            let sq = tape.mul(d, d).unwrap();
            let grads = tape.backward(sq).unwrap();
            opt.step(&mut params, &[grads.wrt(w)]).unwrap();
        }
        let w = params.get("w").unwrap().item();
        assert!((w - 3.0).abs() < 0.05, "w = {w}");
    }

    #[test]
    fn amsgrad_max_moment_is_monotone() {
        let mut params = single(0.0);
        let mut opt = OptimizerState::new(AdamConfig::default(), &params);
        let mut prev = 0.0;
        for g in [5.0, 0.1, -3.0, 0.0, 0.2, 7.0, 0.0] {
            opt.step(&mut params, &[Tensor::scalar(g)]).unwrap();
            let cur = opt.max_second_moment(0)[0];
            assert!(cur >= prev);
            prev = cur;
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut params = single(0.0);
        let mut opt = OptimizerState::new(AdamConfig::default(), &params);
        let err = opt.step(&mut params, &[Tensor::scalar(f64::NAN)]).unwrap_err();
        assert!(matches!(err, GradError::NonFiniteGradient(_)));
        assert_eq!(opt.step_count(), 0);
    }
}
