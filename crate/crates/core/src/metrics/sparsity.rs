use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::masking::round_half_away;

/// Largest absolute top-k evaluated.
pub const ABSOLUTE_TOP_K: usize = 10;

/// Mean cumulative share of total |importance| captured by the top-ranked
/// positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityCurves {
    /// `absolute[k-1]`: share held by the top `k` positions, `k = 1..=10`.
    pub absolute: Vec<f64>,
    /// Relative grid `x` in `{0.1, ..., 1.0}`.
    pub relative_grid: Vec<f64>,
    pub relative: Vec<f64>,
    /// Maps that were all zero and fell back to the uniform `k / M` share.
    pub all_zero_maps: usize,
    pub maps: usize,
}

fn shares(scores: &[f64]) -> (Vec<f64>, bool) {
    let mut mags: Vec<f64> = scores.iter().map(|s| s.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = mags.iter().sum();
    let m = mags.len();
    if total == 0.0 {
        return ((1..=m).map(|k| k as f64 / m as f64).collect(), true);
    }
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(m);
    for v in mags {
        acc += v;
        out.push((acc / total).min(1.0));
    }
    *out.last_mut().unwrap() = 1.0;
    (out, false)
}

/// `maps` holds, per observation, the scores at its maskable positions.
pub fn sparsity_curves(maps: &[Vec<f64>]) -> Result<SparsityCurves, MetricError> {
    if maps.is_empty() || maps.iter().any(Vec::is_empty) {
        return Err(MetricError::Empty);
    }
    let relative_grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let mut absolute = vec![0.0; ABSOLUTE_TOP_K];
    let mut relative = vec![0.0; relative_grid.len()];
    let mut all_zero_maps = 0;
    for scores in maps {
        let (cum, zero) = shares(scores);
        all_zero_maps += usize::from(zero);
        let m = cum.len();
        let at = |k: usize| if k == 0 { 0.0 } else { cum[k.min(m) - 1] };
        for (k, slot) in absolute.iter_mut().enumerate() {
            *slot += at(k + 1);
        }
        for (x, slot) in relative_grid.iter().zip(relative.iter_mut()) {
            *slot += at(round_half_away(x * m as f64) as usize);
        }
    }
    let n = maps.len() as f64;
    absolute.iter_mut().for_each(|v| *v /= n);
    relative.iter_mut().for_each(|v| *v /= n);
    Ok(SparsityCurves { absolute, relative_grid, relative, all_zero_maps, maps: maps.len() })
}
