use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curves::{SeriesSummary, CI_LEVEL};
use crate::data::{gen_tabular, DataError, SplitSizes, TabularDataset, TabularParams, TabularRow, TABULAR_FEATURES};
use crate::masking::mask_tabular;
use crate::metrics::confidence_interval;
use crate::models::{LogisticRegression, ModelError};

/// Largest allowed gap between mean Recursive ROAR and mean ground-truth
/// accuracy at any removal count.
pub const RECURSIVE_TOLERANCE: f64 = 0.02;
/// Gap above ground truth counted as classic ROAR overestimating.
pub const CLASSIC_GAP: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub seeds: Vec<u64>,
    pub splits: SplitSizes,
    pub ridge: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=5).collect(),
            splits: TabularParams::default().splits,
            ridge: 1e-6,
        }
    }
}

/// Test accuracy after removing 0..=16 features under each ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationCurves {
    pub seed: u64,
    pub a: Vec<f64>,
    pub ground_truth_order: Vec<usize>,
    pub classic_order: Vec<usize>,
    pub recursive_order: Vec<usize>,
    pub ground_truth: Vec<f64>,
    pub worst_case: Vec<f64>,
    pub classic: Vec<f64>,
    pub recursive: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationBundle {
    pub removed: Vec<usize>,
    pub per_seed: Vec<ValidationCurves>,
    pub ground_truth: SeriesSummary,
    pub worst_case: SeriesSummary,
    pub classic: SeriesSummary,
    pub recursive: SeriesSummary,
    /// max over removal counts of |mean recursive - mean ground truth|.
    pub max_recursive_gap: f64,
    /// Seeds where classic exceeds ground truth by at least the gap at
    /// some intermediate removal count.
    pub classic_overestimating_seeds: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl ValidationBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("invalid validation config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

struct Split {
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl Split {
    fn masked(rows: &[TabularRow], removed: &[usize]) -> Self {
        Self {
            rows: rows.iter().map(|r| mask_tabular(&r.features, removed)).collect(),
            labels: rows.iter().map(|r| r.label).collect(),
        }
    }

    fn refs(&self) -> Vec<&[f64]> {
        self.rows.iter().map(Vec::as_slice).collect()
    }
}

fn fit_eval(ds: &TabularDataset, removed: &[usize], ridge: f64) -> Result<(LogisticRegression, f64), ModelError> {
    let train = Split::masked(&ds.train, removed);
    let test = Split::masked(&ds.test, removed);
    let model = LogisticRegression::fit(&train.refs(), &train.labels, ridge)?;
    let acc = model.accuracy(&test.refs(), &test.labels);
    Ok((model, acc))
}

/// Accuracy after removing each prefix of `order`, retraining every time.
fn order_curve(ds: &TabularDataset, order: &[usize], ridge: f64) -> Result<Vec<f64>, ModelError> {
    (0..=order.len()).map(|k| fit_eval(ds, &order[..k], ridge).map(|(_, acc)| acc)).collect()
}

fn by_abs_weight(model: &LogisticRegression, exclude: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..model.weights.len()).filter(|j| !exclude.contains(j)).collect();
    idx.sort_by(|&i, &j| model.weights[j].abs().total_cmp(&model.weights[i].abs()).then(i.cmp(&j)));
    idx
}

fn run_seed(seed: u64, cfg: &ValidationConfig) -> Result<ValidationCurves, ValidationError> {
    let ds = gen_tabular(&TabularParams { splits: cfg.splits, seed })?;
    let gt = ds.ground_truth_order();
    let informative = &gt[..crate::data::TABULAR_INFORMATIVE];
    let mut worst: Vec<usize> = gt[crate::data::TABULAR_INFORMATIVE..].to_vec();
    worst.extend(informative.iter().rev());

    let (model0, acc0) = fit_eval(&ds, &[], cfg.ridge)?;
    let classic_order = by_abs_weight(&model0, &[]);

    let mut recursive = vec![acc0];
    let mut recursive_order = Vec::with_capacity(TABULAR_FEATURES);
    let mut model = model0;
    while recursive_order.len() < TABULAR_FEATURES {
        let next = by_abs_weight(&model, &recursive_order)[0];
        recursive_order.push(next);
        let (m, acc) = fit_eval(&ds, &recursive_order, cfg.ridge)?;
        model = m;
        recursive.push(acc);
    }

    Ok(ValidationCurves {
        seed,
        a: ds.a.clone(),
        ground_truth: order_curve(&ds, &gt, cfg.ridge)?,
        worst_case: order_curve(&ds, &worst, cfg.ridge)?,
        classic: order_curve(&ds, &classic_order, cfg.ridge)?,
        recursive,
        ground_truth_order: gt,
        classic_order,
        recursive_order,
    })
}

fn summarize(curves: &[&Vec<f64>]) -> SeriesSummary {
    let n = curves[0].len();
    let mut out = SeriesSummary { mean: Vec::new(), ci_low: Vec::new(), ci_high: Vec::new() };
    for k in 0..n {
        let vals: Vec<f64> = curves.iter().map(|c| c[k]).collect();
        out.mean.push(Some(vals.iter().sum::<f64>() / vals.len() as f64));
        let ci = confidence_interval(&vals, CI_LEVEL).ok();
        out.ci_low.push(ci.map(|c| c.low));
        out.ci_high.push(ci.map(|c| c.high));
    }
    out
}

/// Compares ground-truth, worst-case, classic and recursive removal
/// orders with logistic regression on the tabular task.
pub fn run_synthetic_validation(cfg: &ValidationConfig) -> Result<ValidationBundle, ValidationError> {
    if cfg.seeds.is_empty() {
        return Err(ValidationError::Config("at least one seed is required".into()));
    }
    if !(cfg.ridge >= 0.0 && cfg.ridge.is_finite()) {
        return Err(ValidationError::Config("ridge must be finite and non-negative".into()));
    }
    let per_seed: Vec<ValidationCurves> =
        cfg.seeds.par_iter().map(|&s| run_seed(s, cfg)).collect::<Result<_, _>>()?;
    let pick = |f: fn(&ValidationCurves) -> &Vec<f64>| summarize(&per_seed.iter().map(f).collect::<Vec<_>>());
    let ground_truth = pick(|c| &c.ground_truth);
    let recursive = pick(|c| &c.recursive);
    let max_recursive_gap = ground_truth
        .mean
        .iter()
        .zip(&recursive.mean)
        .map(|(g, r)| (g.unwrap() - r.unwrap()).abs())
        .fold(0.0, f64::max);
    let classic_overestimating_seeds = per_seed
        .iter()
        .filter(|c| (1..TABULAR_FEATURES).any(|k| c.classic[k] - c.ground_truth[k] >= CLASSIC_GAP))
        .count();
    Ok(ValidationBundle {
        removed: (0..=TABULAR_FEATURES).collect(),
        worst_case: pick(|c| &c.worst_case),
        classic: pick(|c| &c.classic),
        ground_truth,
        recursive,
        max_recursive_gap,
        classic_overestimating_seeds,
        tolerance: RECURSIVE_TOLERANCE,
        passed: max_recursive_gap <= RECURSIVE_TOLERANCE,
        per_seed,
    })
}
