//! Trains a small classifier and prints every importance measure for one
//! test sequence, with the planted evidence marked.

use roarbench::data::{gen_keyword_lookup, KeywordParams, SplitSizes};
use roarbench::importance::{compute, Context, Measure};
use roarbench::models::{train, Architecture, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = gen_keyword_lookup(&KeywordParams {
        splits: SplitSizes { train: 400, validation: 100, test: 50 },
        seed: 3,
        ..KeywordParams::default()
    })?;
    let mut cfg = ModelConfig::new(Architecture::BilstmAttentionSingle, ds.vocab.len(), ds.num_classes);
    cfg.embedding_dim = 8;
    cfg.hidden_dim = 8;
    cfg.max_epochs = 8;
    cfg.optimizer.learning_rate = 1e-2;
    let model = train(&cfg, &ds.train, &ds.validation)?;

    let obs = std::slice::from_ref(&ds.test[0]);
    let id = ds.obs_id(roarbench::data::SplitKind::Test, 0);
    let ctx = Context { model: Some(&model), seed: 1, iteration: 0, ig_steps: 50 };
    let measures = [
        Measure::Attention,
        Measure::Gradient,
        Measure::InputTimesGradient,
        Measure::IntegratedGradient,
        Measure::Random,
        Measure::Oracle,
    ];
    let maps: Vec<_> = measures.iter().map(|&m| compute(m, &ctx, obs, &[id]).map(|v| v[0].clone())).collect::<Result<_, _>>()?;

    let evidence = obs[0].evidence.clone().unwrap_or_default();
    print!("{:>10}", "token");
    for m in &measures {
        print!(" {:>19}", m.name());
    }
    println!();
    for (t, tok) in ds.decode(&obs[0].tokens).iter().enumerate() {
        let mark = if evidence.contains(&t) { "*" } else { " " };
        print!("{mark}{tok:>9}");
        for map in &maps {
            print!(" {:>19.4}", map.scores[t]);
        }
        println!();
    }
    println!("label {}", obs[0].label);
    Ok(())
}
