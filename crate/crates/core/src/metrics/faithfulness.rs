use serde::{Deserialize, Serialize};

use super::MetricError;

/// Performance `p` of one measure and `b` of the random baseline on a shared
/// masking-ratio grid running from 0 to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoarCurve {
    pub ratios: Vec<f64>,
    pub performance: Vec<f64>,
    pub baseline: Vec<f64>,
}

impl RoarCurve {
    pub fn new(ratios: Vec<f64>, performance: Vec<f64>, baseline: Vec<f64>) -> Result<Self, MetricError> {
        let c = Self { ratios, performance, baseline };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let n = self.ratios.len();
        if n < 2 {
            return Err(MetricError::InvalidCurve(format!("need at least 2 points, got {n}")));
        }
        if self.performance.len() != n || self.baseline.len() != n {
            return Err(MetricError::InvalidCurve("performance, baseline and ratios differ in length".into()));
        }
        if self.ratios[0] != 0.0 || self.ratios[n - 1] != 1.0 {
            return Err(MetricError::InvalidCurve("ratios must start at 0 and end at 1".into()));
        }
        if self.ratios.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MetricError::InvalidCurve("ratios must be strictly increasing".into()));
        }
        if self.performance.iter().chain(&self.baseline).any(|v| !v.is_finite()) {
            return Err(MetricError::InvalidCurve("non-finite performance value".into()));
        }
        Ok(())
    }
}

/// Trapezoid area between the baseline and the measure, normalized by the
/// area between the baseline and its own final value. The trapezoid
/// halves cancel in the ratio and are left out.
pub fn area_faithfulness(curve: &RoarCurve) -> Result<f64, MetricError> {
    curve.validate()?;
    let n = curve.ratios.len();
    let b_last = curve.baseline[n - 1];
    let dp: Vec<f64> = curve.baseline.iter().zip(&curve.performance).map(|(b, p)| b - p).collect();
    let db: Vec<f64> = curve.baseline.iter().map(|b| b - b_last).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n - 1 {
        let dx = curve.ratios[i + 1] - curve.ratios[i];
        num += 0.5 * dx * (dp[i] + dp[i + 1]);
        den += 0.5 * dx * (db[i] + db[i + 1]);
    }
    if den == 0.0 {
        return Err(MetricError::ZeroDenominator);
    }
    Ok(num / den)
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let j = xs.partition_point(|&v| v < x);
    if j < xs.len() && xs[j] == x {
        return ys[j];
    }
    let (x0, x1, y0, y1) = (xs[j - 1], xs[j], ys[j - 1], ys[j]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Resamples `curve` on `ratios` by linear interpolation.
pub fn refine_linear(curve: &RoarCurve, ratios: &[f64]) -> Result<RoarCurve, MetricError> {
    curve.validate()?;
    let performance = ratios.iter().map(|&x| interpolate(&curve.ratios, &curve.performance, x)).collect();
    let baseline = ratios.iter().map(|&x| interpolate(&curve.ratios, &curve.baseline, x)).collect();
    RoarCurve::new(ratios.to_vec(), performance, baseline)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInvarianceReport {
    pub coarse_score: f64,
    pub refined_score: f64,
    pub difference: f64,
    /// Every coarse ratio also appears in the refined grid.
    pub grid_is_superset: bool,
    /// Every refined point lies on the coarse curve's linear interpolant
    /// (within 1e-12); only then must the scores agree.
    pub linearly_interpolated: bool,
}

impl StepInvarianceReport {
    pub fn invariant(&self, tol: f64) -> bool {
        self.difference.abs() <= tol
    }
}

pub fn step_invariance_check(coarse: &RoarCurve, refined: &RoarCurve) -> Result<StepInvarianceReport, MetricError> {
    let coarse_score = area_faithfulness(coarse)?;
    let refined_score = area_faithfulness(refined)?;
    let grid_is_superset = coarse.ratios.iter().all(|r| refined.ratios.contains(r));
    let linearly_interpolated = refined.ratios.iter().enumerate().all(|(i, &x)| {
        (interpolate(&coarse.ratios, &coarse.performance, x) - refined.performance[i]).abs() <= 1e-12
            && (interpolate(&coarse.ratios, &coarse.baseline, x) - refined.baseline[i]).abs() <= 1e-12
    });
    Ok(StepInvarianceReport {
        coarse_score,
        refined_score,
        difference: refined_score - coarse_score,
        grid_is_superset,
        linearly_interpolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(r: &[f64], p: &[f64], b: &[f64]) -> RoarCurve {
        RoarCurve::new(r.to_vec(), p.to_vec(), b.to_vec()).unwrap()
    }

    #[test]
    fn equal_to_baseline_scores_zero() {
        let c = curve(&[0.0, 0.5, 1.0], &[0.9, 0.7, 0.5], &[0.9, 0.7, 0.5]);
        assert_eq!(area_faithfulness(&c).unwrap(), 0.0);
    }

    #[test]
    fn immediate_collapse_scores_one() {
        let c = curve(&[0.0, 0.5, 1.0], &[0.5, 0.5, 0.5], &[0.9, 0.7, 0.5]);
        assert_eq!(area_faithfulness(&c).unwrap(), 1.0);
    }

    #[test]
    fn hand_trapezoid_example() {
        let c = curve(&[0.0, 0.5, 1.0], &[0.9, 0.5, 0.5], &[0.9, 0.7, 0.5]);
        // numerator: 0.25*(0+0.2) + 0.25*(0.2+0) = 0.1; denominator: 0.25*(0.4+0.2) + 0.25*(0.2+0) = 0.2.
        // 0.9 and 0.7 are not doubles: on the stored inputs the exact ratio is
        // 0.5 - 6.9e-17, whose nearest double is the one just below 0.5.
        assert_eq!(area_faithfulness(&c).unwrap(), 0.5 - f64::EPSILON / 4.0);
    }

    #[test]
    fn flat_baseline_is_an_error() {
        let c = curve(&[0.0, 1.0], &[0.2, 0.5], &[0.5, 0.5]);
        assert_eq!(area_faithfulness(&c), Err(MetricError::ZeroDenominator));
        let c = curve(&[0.0, 1.0], &[0.2, 0.5], &[0.6, 0.5]);
        assert!(area_faithfulness(&c).is_ok());
    }

    #[test]
    fn refinement_by_interpolation_is_exact() {
        let c = curve(&[0.0, 0.5, 1.0], &[0.9, 0.5, 0.5], &[0.9, 0.7, 0.5]);
        let fine = refine_linear(&c, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let rep = step_invariance_check(&c, &fine).unwrap();
        assert!(rep.grid_is_superset && rep.linearly_interpolated);
        assert!(rep.invariant(1e-12), "{rep:?}");
    }

    #[test]
    fn measured_refinement_is_reported_not_asserted() {
        let c = curve(&[0.0, 0.5, 1.0], &[0.9, 0.5, 0.5], &[0.9, 0.7, 0.5]);
        let measured = curve(&[0.0, 0.25, 0.5, 0.75, 1.0], &[0.9, 0.55, 0.5, 0.5, 0.5], &[0.9, 0.8, 0.7, 0.6, 0.5]);
        let rep = step_invariance_check(&c, &measured).unwrap();
        assert!(!rep.linearly_interpolated);
        assert!(!rep.invariant(1e-12));
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(RoarCurve::new(vec![0.0], vec![1.0], vec![1.0]).is_err());
        assert!(RoarCurve::new(vec![0.0, 0.5], vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(RoarCurve::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0; 4], vec![1.0; 4]).is_err());
    }

    fn arb_curve() -> impl Strategy<Value = RoarCurve> {
        (2usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(0.01f64..1.0, n - 1),
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(0.0f64..1.0, n),
            )
                .prop_map(move |(gaps, p, b)| {
                    let total: f64 = gaps.iter().sum();
                    let mut r = vec![0.0];
                    let mut acc = 0.0;
                    for g in &gaps[..gaps.len() - 1] {
                        acc += g / total;
                        r.push(acc);
                    }
                    r.push(1.0);
                    RoarCurve { ratios: r, performance: p, baseline: b }
                })
        })
    }

    proptest! {
        #[test]
        fn linear_in_performance_deltas(c in arb_curve(), scale in -3.0f64..3.0) {
            prop_assume!(c.ratios.windows(2).all(|w| w[1] > w[0]));
            let Ok(base) = area_faithfulness(&c) else { return Ok(()); };
            prop_assume!(base.is_finite() && base.abs() < 1e6);
            let scaled = RoarCurve {
                performance: c.baseline.iter().zip(&c.performance).map(|(b, p)| b - scale * (b - p)).collect(),
                ..c.clone()
            };
            let s = area_faithfulness(&scaled).unwrap();
            prop_assert!((s - scale * base).abs() <= 1e-9 * (1.0 + base.abs()));
        }

        #[test]
        fn shifting_performance_shifts_numerator_by_the_constant(c in arb_curve(), shift in -0.5f64..0.5) {
            prop_assume!(c.ratios.windows(2).all(|w| w[1] > w[0]));
            let n = c.ratios.len();
            let b_last = c.baseline[n - 1];
            let den: f64 = (0..n - 1)
                .map(|i| 0.5 * (c.ratios[i + 1] - c.ratios[i]) * (c.baseline[i] + c.baseline[i + 1] - 2.0 * b_last))
                .sum();
            prop_assume!(den.abs() > 1e-6);
            let base = area_faithfulness(&c).unwrap();
            let shifted = RoarCurve { performance: c.performance.iter().map(|p| p - shift).collect(), ..c.clone() };
            let s = area_faithfulness(&shifted).unwrap();
            prop_assert!(((s - base) * den - shift).abs() < 1e-9);
        }

        #[test]
        fn interpolated_refinement_never_changes_the_score(c in arb_curve(), extra in prop::collection::vec(0.0f64..1.0, 1..8)) {
            prop_assume!(c.ratios.windows(2).all(|w| w[1] > w[0]));
            prop_assume!(area_faithfulness(&c).is_ok());
            let mut grid = c.ratios.clone();
            grid.extend(extra);
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let fine = refine_linear(&c, &grid).unwrap();
            let rep = step_invariance_check(&c, &fine).unwrap();
            // Relative tolerance: near-flat baselines give large scores.
            let tol = 1e-9 * (1.0 + rep.coarse_score.abs());
            prop_assert!(rep.invariant(tol), "{:?}", rep);
        }
    }
}
