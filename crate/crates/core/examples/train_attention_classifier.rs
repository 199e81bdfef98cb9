//! Trains a BiLSTM-attention classifier on the keyword-lookup task and
//! prints per-epoch losses, test accuracy and one attention map.

use std::time::Instant;

use roarbench::data::{gen_keyword_lookup, KeywordParams, SplitSizes};
use roarbench::metrics::MetricKind;
use roarbench::models::{train, Architecture, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = gen_keyword_lookup(&KeywordParams {
        splits: SplitSizes { train: 500, validation: 200, test: 500 },
        classes: 2,
        redundancy: 1,
        seed: 1,
        ..KeywordParams::default()
    })?;
    let mut cfg = ModelConfig::new(Architecture::BilstmAttentionSingle, ds.vocab.len(), ds.num_classes);
    cfg.embedding_dim = 8;
    cfg.hidden_dim = 8;
    cfg.max_epochs = 10;
    cfg.optimizer.learning_rate = 1e-2;
    let start = Instant::now();
    let model = train(&cfg, &ds.train, &ds.validation)?;
    println!("trained in {:.2?} (best epoch {})", start.elapsed(), model.best_epoch);
    print!("{}", model.history_csv());
    println!("test accuracy {:.3}", model.evaluate(&ds.test, MetricKind::Accuracy)?);

    let obs = &ds.test[0];
    let alpha = &model.attention(std::slice::from_ref(obs))?[0];
    for (tok, a) in ds.decode(&obs.tokens).iter().zip(alpha) {
        println!("{tok:>8} {a:.3}");
    }
    Ok(())
}
