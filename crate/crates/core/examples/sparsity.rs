//! Cumulative importance share held by the top-ranked tokens, attention
//! against random maps.

use roarbench::data::{gen_keyword_lookup, KeywordParams, SplitKind, SplitSizes};
use roarbench::importance::{compute, Context, Measure};
use roarbench::metrics::sparsity_curves;
use roarbench::models::{train, Architecture, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = gen_keyword_lookup(&KeywordParams {
        splits: SplitSizes { train: 400, validation: 100, test: 200 },
        seed: 8,
        ..KeywordParams::default()
    })?;
    let mut cfg = ModelConfig::new(Architecture::BilstmAttentionSingle, ds.vocab.len(), ds.num_classes);
    cfg.embedding_dim = 8;
    cfg.hidden_dim = 8;
    cfg.max_epochs = 8;
    cfg.optimizer.learning_rate = 1e-2;
    let model = train(&cfg, &ds.train, &ds.validation)?;

    let ids: Vec<u64> = (0..ds.test.len()).map(|i| ds.obs_id(SplitKind::Test, i)).collect();
    let ctx = Context { model: Some(&model), seed: 1, iteration: 0, ig_steps: 20 };
    for m in [Measure::Attention, Measure::Gradient, Measure::IntegratedGradient, Measure::Random] {
        let maps = compute(m, &ctx, &ds.test, &ids)?;
        let scores: Vec<Vec<f64>> = maps.iter().map(|m| m.maskable_scores()).collect();
        let s = sparsity_curves(&scores)?;
        let top: Vec<String> = s.absolute.iter().take(5).map(|v| format!("{v:.3}")).collect();
        println!("{:<20} top-1..5 share {}", m.name(), top.join(" "));
    }
    Ok(())
}
