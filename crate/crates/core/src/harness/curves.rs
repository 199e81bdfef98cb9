use serde::{Deserialize, Serialize};

use super::{PlanOutcome, RoarMode};
use crate::importance::Measure;
use crate::metrics::{area_faithfulness, confidence_interval, MetricKind, RoarCurve};

pub const CI_LEVEL: f64 = 0.95;

/// Mean and Student-t band of one series across seeds. Bands are absent
/// with fewer than two seeds; means are absent where any seed failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub mean: Vec<Option<f64>>,
    pub ci_low: Vec<Option<f64>>,
    pub ci_high: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedCurve {
    pub seed: u64,
    pub performance: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessSummary {
    pub per_seed: Vec<SeedScore>,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureCurves {
    pub measure: Measure,
    pub per_seed: Vec<SeedCurve>,
    pub summary: SeriesSummary,
    pub faithfulness: FaithfulnessSummary,
}

/// Plot-ready result of one plan. Contains no timing, so reruns produce
/// identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveBundle {
    pub dataset: String,
    pub mode: RoarMode,
    pub metric: MetricKind,
    pub ci_level: f64,
    pub plan_hash: String,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Performance with every maskable token replaced, per seed.
    pub lower_bound: Vec<SeedCurve>,
    pub measures: Vec<MeasureCurves>,
}

impl CurveBundle {
    pub fn measure(&self, m: Measure) -> Option<&MeasureCurves> {
        self.measures.iter().find(|c| c.measure == m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }
}

fn summarize(curves: &[Vec<Option<f64>>], len: usize) -> SeriesSummary {
    let mut out = SeriesSummary { mean: Vec::new(), ci_low: Vec::new(), ci_high: Vec::new() };
    for i in 0..len {
        let vals: Option<Vec<f64>> = curves.iter().map(|c| c[i]).collect();
        let Some(vals) = vals else {
            out.mean.push(None);
            out.ci_low.push(None);
            out.ci_high.push(None);
            continue;
        };
        out.mean.push(Some(vals.iter().sum::<f64>() / vals.len() as f64));
        let ci = confidence_interval(&vals, CI_LEVEL).ok();
        out.ci_low.push(ci.map(|c| c.low));
        out.ci_high.push(ci.map(|c| c.high));
    }
    out
}

fn scalar_summary(per_seed: Vec<SeedScore>) -> FaithfulnessSummary {
    let vals: Option<Vec<f64>> = per_seed.iter().map(|s| s.value).collect();
    let (mean, ci_low, ci_high) = match vals {
        Some(v) if !v.is_empty() => {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let ci = confidence_interval(&v, CI_LEVEL).ok();
            (Some(mean), ci.map(|c| c.low), ci.map(|c| c.high))
        }
        _ => (None, None, None),
    };
    FaithfulnessSummary { per_seed, mean, ci_low, ci_high }
}

/// Per-seed curves, across-seed bands and faithfulness against the
/// same-seed random baseline for every measure of `outcome`.
pub fn build_curves(outcome: &PlanOutcome, dataset: &str, mode: RoarMode, metric: MetricKind) -> CurveBundle {
    let n = outcome.ratios.len();
    let lower_bound = outcome
        .seeds
        .iter()
        .map(|&seed| SeedCurve { seed, performance: vec![outcome.full[&seed].performance] })
        .collect();
    let measures = outcome
        .measures
        .iter()
        .map(|&m| {
            let per_seed: Vec<SeedCurve> = outcome
                .seeds
                .iter()
                .map(|&seed| SeedCurve { seed, performance: outcome.curve(m, seed) })
                .collect();
            let raw: Vec<Vec<Option<f64>>> = per_seed.iter().map(|c| c.performance.clone()).collect();
            let scores = outcome
                .seeds
                .iter()
                .zip(&raw)
                .map(|(&seed, perf)| {
                    let base = outcome.curve(Measure::Random, seed);
                    let both: Option<(Vec<f64>, Vec<f64>)> =
                        perf.iter().copied().collect::<Option<_>>().zip(base.into_iter().collect::<Option<_>>());
                    match both {
                        None => SeedScore { seed, value: None, error: Some("incomplete curve".into()) },
                        Some((p, b)) => match RoarCurve::new(outcome.ratios.clone(), p, b).and_then(|c| area_faithfulness(&c)) {
                            Ok(v) => SeedScore { seed, value: Some(v), error: None },
                            Err(e) => SeedScore { seed, value: None, error: Some(e.to_string()) },
                        },
                    }
                })
                .collect();
            MeasureCurves { measure: m, summary: summarize(&raw, n), per_seed, faithfulness: scalar_summary(scores) }
        })
        .collect();
    CurveBundle {
        dataset: dataset.to_string(),
        mode,
        metric,
        ci_level: CI_LEVEL,
        plan_hash: outcome.plan_hash.clone(),
        ratios: outcome.ratios.clone(),
        seeds: outcome.seeds.clone(),
        lower_bound,
        measures,
    }
}
