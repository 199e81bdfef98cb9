//! Monotone mask states, top-k extension and the step schedules.

use serde::{Deserialize, Serialize};

use crate::data::{Observation, MASK};

/// Rounds half away from zero after snapping to a 1e-9 grid, so products
/// like `3 * 0.1 * 5` that land a hair below `.5` still round up.
pub fn round_half_away(x: f64) -> f64 {
    ((x * 1e9).round() / 1e9).round()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Relative,
    Absolute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepSchedule {
    pub mode: StepMode,
    /// Fraction of maskable tokens added per iteration in relative mode.
    pub relative_step: f64,
    /// Tokens added per iteration in absolute mode.
    pub absolute_step: usize,
    /// Optional cap on the number of masking iterations.
    pub max_iterations: Option<usize>,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { mode: StepMode::Relative, relative_step: 0.1, absolute_step: 1, max_iterations: None }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MaskError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("target {target} is below the {current} positions already masked")]
    ShrinkingTarget { target: usize, current: usize },
    #[error("score vector has {scores} entries for a sequence of {len}")]
    LengthMismatch { scores: usize, len: usize },
}

impl StepSchedule {
    pub fn relative(step: f64) -> Self {
        Self { relative_step: step, ..Self::default() }
    }

    pub fn absolute(tokens: usize) -> Self {
        Self { mode: StepMode::Absolute, absolute_step: tokens, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        match self.mode {
            StepMode::Relative => {
                let s = self.relative_step;
                if !(s > 0.0 && s <= 1.0) {
                    return Err(MaskError::Schedule(format!("relative step {s} outside (0, 1]")));
                }
                let j = 1.0 / s;
                if (j - j.round()).abs() > 1e-9 {
                    return Err(MaskError::Schedule(format!("relative step {s} does not divide 1")));
                }
            }
            StepMode::Absolute => {
                if self.absolute_step == 0 {
                    return Err(MaskError::Schedule("absolute step must be at least 1".into()));
                }
            }
        }
        if self.max_iterations == Some(0) {
            return Err(MaskError::Schedule("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of masking iterations after iteration 0. In absolute mode it
    /// is the count needed to saturate the longest sequence.
    pub fn iterations(&self, max_maskable: usize) -> usize {
        let natural = match self.mode {
            StepMode::Relative => (1.0 / self.relative_step).round() as usize,
            StepMode::Absolute => max_maskable.div_ceil(self.absolute_step).max(1),
        };
        self.max_iterations.map_or(natural, |cap| natural.min(cap))
    }

    /// Curve abscissa of iteration `j` out of `total`.
    pub fn ratio(&self, j: usize, total: usize) -> f64 {
        match self.mode {
            StepMode::Relative if j == total && self.max_iterations.is_none() => 1.0,
            StepMode::Relative => (j as f64 * self.relative_step).min(1.0),
            StepMode::Absolute => j as f64 / total as f64,
        }
    }

    /// Number of positions masked at iteration `j` for a sequence with `m`
    /// maskable positions.
    pub fn cumulative_target(&self, j: usize, m: usize) -> usize {
        match self.mode {
            StepMode::Relative => {
                let t = round_half_away(j as f64 * self.relative_step * m as f64);
                (t.max(0.0) as usize).min(m)
            }
            StepMode::Absolute => j.saturating_mul(self.absolute_step).min(m),
        }
    }
}

/// How scores are ordered when picking positions to mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    /// Largest signed score first.
    #[default]
    Signed,
    /// Largest magnitude first.
    Absolute,
}

/// Masked positions of one observation, sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskState {
    pub masked: Vec<usize>,
    pub iteration: usize,
    /// Requested cumulative count (may exceed what could be masked).
    pub target: usize,
    /// The target exceeded the number of maskable positions.
    pub saturated: bool,
}

impl MaskState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.masked.binary_search(&pos).is_ok()
    }
}

/// Adds the highest-scoring unmasked maskable positions until `target` are
/// masked. Ties go to the lower position. Returns a new state.
pub fn extend_mask(
    state: &MaskState,
    scores: &[f64],
    maskable: &[bool],
    target: usize,
    ranking: Ranking,
) -> Result<MaskState, MaskError> {
    if scores.len() != maskable.len() {
        return Err(MaskError::LengthMismatch { scores: scores.len(), len: maskable.len() });
    }
    if target < state.masked.len() {
        return Err(MaskError::ShrinkingTarget { target, current: state.masked.len() });
    }
    let m = maskable.iter().filter(|&&b| b).count();
    let reachable = target.min(m);
    let key = |i: usize| match ranking {
        Ranking::Signed => scores[i],
        Ranking::Absolute => scores[i].abs(),
    };
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|&i| maskable[i] && !state.contains(i)).collect();
    candidates.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    let need = reachable.saturating_sub(state.masked.len());
    let mut masked = state.masked.clone();
    masked.extend_from_slice(&candidates[..need.min(candidates.len())]);
    masked.sort_unstable();
    Ok(MaskState { masked, iteration: state.iteration + 1, target, saturated: target > m })
}

/// Replaces masked positions with `[MASK]`; the length is unchanged.
pub fn apply_mask(obs: &Observation, state: &MaskState) -> Observation {
    let mut out = obs.clone();
    for &p in &state.masked {
        out.tokens[p] = MASK;
    }
    out
}

/// Sets masked features to 0.0, the population mean of every feature.
pub fn mask_tabular(features: &[f64], masked: &[usize]) -> Vec<f64> {
    let mut out = features.to_vec();
    for &j in masked {
        out[j] = 0.0;
    }
    out
}

/// One record of the mask dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub obs_id: u64,
    pub iteration: usize,
    pub masked_positions: Vec<usize>,
}
