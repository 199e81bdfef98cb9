//! Recursive ROAR on the keyword-lookup task: every measure, two seeds,
//! 20 % masking steps. Prints mean curves and faithfulness per measure.

use std::sync::Arc;
use std::time::Instant;

use roarbench::data::{gen_keyword_lookup, KeywordParams, SplitSizes};
use roarbench::harness::{build_curves, ExperimentPlan, Harness, RoarMode, RunCache};
use roarbench::importance::Measure;
use roarbench::masking::StepSchedule;
use roarbench::models::{Architecture, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = gen_keyword_lookup(&KeywordParams {
        splits: SplitSizes { train: 400, validation: 100, test: 200 },
        seed: 7,
        ..KeywordParams::default()
    })?;
    let mut model = ModelConfig::new(Architecture::BilstmAttentionSingle, ds.vocab.len(), ds.num_classes);
    model.embedding_dim = 8;
    model.hidden_dim = 8;
    model.max_epochs = 8;
    model.optimizer.learning_rate = 1e-2;

    let mut plan = ExperimentPlan::new("keyword", Arc::new(ds), model);
    plan.measures = vec![
        Measure::Attention,
        Measure::Gradient,
        Measure::InputTimesGradient,
        Measure::IntegratedGradient,
        Measure::Oracle,
    ];
    plan.schedule = StepSchedule::relative(0.2);
    plan.seeds = vec![1, 2];
    plan.ig_steps = 20;
    plan.mode = RoarMode::Recursive;

    let harness = Harness::new(RunCache::in_memory()).with_jobs(1);
    let start = Instant::now();
    let outcome = harness.run(&plan)?;
    println!("{} trainings in {:.1?}", outcome.trainings, start.elapsed());

    let bundle = build_curves(&outcome, "keyword", plan.mode, plan.metric);
    let ratios: Vec<String> = bundle.ratios.iter().map(|r| format!("{r:>5.2}")).collect();
    println!("{:<22} {}   faithfulness", "measure", ratios.join(" "));
    for c in &bundle.measures {
        let mean: Vec<String> =
            c.summary.mean.iter().map(|v| v.map_or("  -  ".into(), |v| format!("{v:>5.3}"))).collect();
        let f = c.faithfulness.mean.map_or("-".into(), |v| format!("{v:.3}"));
        println!("{:<22} {}   {f}", c.measure.name(), mean.join(" "));
    }
    Ok(())
}
