use super::{GradError, Tape, Tensor, Var};

/// Gradients with magnitude below this are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// (input index, flat coordinate) where the maximum occurred.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences with step `h`, for every coordinate of every input.
pub fn check_gradients<F>(inputs: &[Tensor], f: F, h: f64) -> Result<GradCheckReport, GradError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, GradError>,
{
    let eval = |xs: &[Tensor]| -> Result<f64, GradError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), coordinates: 0 };
    let mut probe = inputs.to_vec();
    for (i, x) in inputs.iter().enumerate() {
        for j in 0..x.len() {
            let orig = x.values()[j];
            probe[i].values_mut()[j] = orig + h;
            let plus = eval(&probe)?;
            probe[i].values_mut()[j] = orig - h;
            let minus = eval(&probe)?;
            probe[i].values_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[i].values()[j], numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_gradient_agrees() {
        let x = Tensor::vector(vec![0.3, -1.2, 2.0]);
        let rep = check_gradients(&[x], |t, v| {
            let e = t.exp(v[0])?;
            t.sum(e)
        }, 1e-5)
        .unwrap();
        assert!(rep.passes(1e-6), "{rep:?}");
        assert_eq!(rep.coordinates, 3);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 2e-9) - 1e-4).abs() < 1e-12);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-12);
    }
}
