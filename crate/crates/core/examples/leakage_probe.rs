//! Classic ROAR on the leakage-probe task. Masks chosen from gold-label
//! importance can carry label information, so performance may rise between
//! iterations.

use std::sync::Arc;

use roarbench::data::{gen_leakage_probe, LeakageParams, SplitSizes};
use roarbench::harness::{build_curves, ExperimentPlan, Harness, RoarMode, RunCache};
use roarbench::importance::Measure;
use roarbench::masking::StepSchedule;
use roarbench::models::{Architecture, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = gen_leakage_probe(&LeakageParams {
        splits: SplitSizes { train: 400, validation: 100, test: 300 },
        seed: 13,
        ..LeakageParams::default()
    })?;
    let mut model = ModelConfig::new(Architecture::BilstmAttentionSingle, ds.vocab.len(), ds.num_classes);
    model.embedding_dim = 8;
    model.hidden_dim = 8;
    model.max_epochs = 8;
    model.optimizer.learning_rate = 1e-2;
    let mut plan = ExperimentPlan::new("leakage", Arc::new(ds), model);
    plan.measures = vec![Measure::Gradient, Measure::InputTimesGradient];
    plan.schedule = StepSchedule::relative(0.1);
    plan.seeds = vec![1, 2, 3];
    plan.mode = RoarMode::Classic;

    let outcome = Harness::new(RunCache::in_memory()).run(&plan)?;
    let bundle = build_curves(&outcome, "leakage", plan.mode, plan.metric);
    for c in &bundle.measures {
        let mean: Vec<f64> = c.summary.mean.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let rises: Vec<String> = mean
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] - w[0] >= 0.02)
            .map(|(j, w)| format!("ratio {:.1}: {:+.3}", bundle.ratios[j + 1], w[1] - w[0]))
            .collect();
        println!("{:<18} {}", c.measure.name(), mean.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" "));
        if !rises.is_empty() {
            println!("{:<18} rises: {}", "", rises.join(", "));
        }
    }
    Ok(())
}
