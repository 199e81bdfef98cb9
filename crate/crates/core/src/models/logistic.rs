use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;

const MAX_NEWTON_STEPS: usize = 100;

/// Binary logistic regression fitted by Newton's method with a small ridge
/// penalty on the weights (not the intercept).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LogisticRegression {
    pub fn fit(rows: &[&[f64]], labels: &[usize], ridge: f64) -> Result<Self, ModelError> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(ModelError::EmptySplit("train"));
        }
        let p = rows[0].len();
        let n = rows.len();
        let x = DMatrix::from_fn(n, p + 1, |i, j| if j == p { 1.0 } else { rows[i][j] });
        let y = DVector::from_iterator(n, labels.iter().map(|&l| f64::from(u8::from(l == 1))));
        let mut penalty = DVector::from_element(p + 1, ridge);
        penalty[p] = 0.0;
        let mut beta = DVector::zeros(p + 1);
        for _ in 0..MAX_NEWTON_STEPS {
            let eta = &x * &beta;
            let mu = eta.map(sigmoid);
            let w = mu.map(|m| (m * (1.0 - m)).max(1e-12));
            let grad = x.transpose() * (&mu - &y) + penalty.component_mul(&beta);
            let mut xw = x.clone();
            for (i, mut row) in xw.row_iter_mut().enumerate() {
                row *= w[i];
            }
            let mut hess = x.transpose() * xw;
            for j in 0..=p {
                hess[(j, j)] += penalty[j];
            }
            let chol = hess
                .cholesky()
                .ok_or_else(|| ModelError::Diverged { epoch: 0, reason: "singular Hessian".into() })?;
            let step = chol.solve(&grad);
            beta -= &step;
            if !beta.iter().all(|v| v.is_finite()) {
                return Err(ModelError::Diverged { epoch: 0, reason: "non-finite coefficients".into() });
            }
            if step.amax() < 1e-10 {
                break;
            }
        }
        Ok(Self { weights: beta.iter().take(p).copied().collect(), bias: beta[p] })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        usize::from(self.decision(x) > 0.0)
    }

    pub fn accuracy(&self, rows: &[&[f64]], labels: &[usize]) -> f64 {
        let correct = rows.iter().zip(labels).filter(|(x, &l)| self.predict(x) == l).count();
        correct as f64 / rows.len() as f64
    }
}
