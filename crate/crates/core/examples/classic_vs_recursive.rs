//! Two evidence copies per sequence. With importance frozen after the first
//! model, masking one copy leaves the task solvable; recomputing importance
//! finds the second copy on the next iteration.

use std::sync::Arc;

use roarbench::data::{gen_keyword_lookup, KeywordParams, SplitSizes};
use roarbench::harness::{build_curves, ExperimentPlan, Harness, RoarMode, RunCache};
use roarbench::importance::Measure;
use roarbench::masking::StepSchedule;
use roarbench::models::{Architecture, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = gen_keyword_lookup(&KeywordParams {
        splits: SplitSizes { train: 400, validation: 100, test: 300 },
        redundancy: 2,
        seed: 11,
        ..KeywordParams::default()
    })?;
    let mut model = ModelConfig::new(Architecture::BilstmAttentionSingle, ds.vocab.len(), ds.num_classes);
    model.embedding_dim = 8;
    model.hidden_dim = 8;
    model.max_epochs = 8;
    model.optimizer.learning_rate = 1e-2;
    let mut plan = ExperimentPlan::new("keyword_redundant", Arc::new(ds), model);
    plan.measures = vec![Measure::OracleFirst];
    plan.schedule = StepSchedule { max_iterations: Some(3), ..StepSchedule::relative(0.1) };
    plan.seeds = vec![1, 2, 3];

    let cache = RunCache::in_memory();
    let harness = Harness::new(cache);
    for mode in [RoarMode::Classic, RoarMode::Recursive] {
        plan.mode = mode;
        let outcome = harness.run(&plan)?;
        let bundle = build_curves(&outcome, &plan.name, mode, plan.metric);
        let curve = &bundle.measure(Measure::OracleFirst).expect("measure present").summary.mean;
        let shown: Vec<String> = curve.iter().map(|v| v.map_or("-".into(), |v| format!("{v:.3}"))).collect();
        let ratios: Vec<String> = bundle.ratios.iter().map(|r| format!("{r:.3}")).collect();
        println!("{:<10} ratios   {}", mode.name(), ratios.join(" "));
        println!("{:<10} accuracy {}", "", shown.join(" "));
    }
    println!("{} trainings", harness.trainings());
    Ok(())
}
