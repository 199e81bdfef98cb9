//! Classification metrics, the area-between-curves faithfulness score,
//! Student-t confidence intervals and sparsity curves.

mod faithfulness;
mod sparsity;

pub use faithfulness::{area_faithfulness, refine_linear, step_invariance_check, RoarCurve, StepInvarianceReport};
pub use sparsity::{sparsity_curves, SparsityCurves, ABSOLUTE_TOP_K};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} predictions for {1} labels")]
    LengthMismatch(usize, usize),
    #[error("label {0} outside {1} classes")]
    LabelOutOfRange(usize, usize),
    #[error("unknown metric kind `{0}`")]
    UnknownMetric(String),
    #[error("faithfulness undefined: baseline curve is flat (zero denominator)")]
    ZeroDenominator,
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("confidence interval needs at least 2 values, got {0}")]
    TooFewValues(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Accuracy,
    MacroF1,
    MicroF1,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::MacroF1 => "macro-f1",
            MetricKind::MicroF1 => "micro-f1",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(MetricKind::Accuracy),
            "macro-f1" => Ok(MetricKind::MacroF1),
            "micro-f1" => Ok(MetricKind::MicroF1),
            other => Err(MetricError::UnknownMetric(other.to_string())),
        }
    }
}

/// Per-class true positive, false positive and false negative counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ClassCounts {
    /// F1 of one class; zero when the class never occurs in either
    /// predictions or labels.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn class_counts(preds: &[usize], golds: &[usize], num_classes: usize) -> Result<Vec<ClassCounts>, MetricError> {
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch(preds.len(), golds.len()));
    }
    let mut counts = vec![ClassCounts::default(); num_classes];
    for (&p, &g) in preds.iter().zip(golds) {
        for l in [p, g] {
            if l >= num_classes {
                return Err(MetricError::LabelOutOfRange(l, num_classes));
            }
        }
        if p == g {
            counts[p].tp += 1;
        } else {
            counts[p].fp += 1;
            counts[g].fn_ += 1;
        }
    }
    Ok(counts)
}

pub fn classification_metric(
    preds: &[usize],
    golds: &[usize],
    num_classes: usize,
    kind: MetricKind,
) -> Result<f64, MetricError> {
    let counts = class_counts(preds, golds, num_classes)?;
    Ok(match kind {
        MetricKind::Accuracy => counts.iter().map(|c| c.tp).sum::<usize>() as f64 / preds.len() as f64,
        MetricKind::MacroF1 => counts.iter().map(ClassCounts::f1).sum::<f64>() / num_classes as f64,
        MetricKind::MicroF1 => {
            let pooled = counts.iter().fold(ClassCounts::default(), |acc, c| ClassCounts {
                tp: acc.tp + c.tp,
                fp: acc.fp + c.fp,
                fn_: acc.fn_ + c.fn_,
            });
            pooled.f1()
        }
    })
}

/// Mean with a two-sided Student-t interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub n: usize,
}

impl ConfidenceInterval {
    pub fn half_width(&self) -> f64 {
        (self.high - self.low) / 2.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }
}

/// `mean +- t_{(1+level)/2, n-1} * s / sqrt(n)`.
pub fn confidence_interval(values: &[f64], level: f64) -> Result<ConfidenceInterval, MetricError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricError::TooFewValues(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof").inverse_cdf(0.5 + level / 2.0);
    let half = t * var.sqrt() / (n as f64).sqrt();
    Ok(ConfidenceInterval { mean, low: mean - half, high: mean + half, level, n })
}

/// One row of the faithfulness table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessRow {
    pub dataset: String,
    pub measure: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn faithfulness_csv(rows: &[FaithfulnessRow]) -> String {
    let mut s = String::from("dataset,measure,mean,ci_low,ci_high\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.dataset, r.measure, r.mean, r.ci_low, r.ci_high));
    }
    s
}
