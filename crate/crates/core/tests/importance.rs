mod common;

use common::{dense_gold, fd_input_gradient, onehot, random_obs, tiny_model, V};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roarbench::data::{Observation, BOS, EOS, MASK};
use roarbench::grad::check::relative_error;
use roarbench::grad::Tensor;
use roarbench::importance::{
    attention_scores, compute, gold_logits, gradient_scores, integrated_gradient_scores, oracle_first_scores,
    oracle_scores, random_scores, Context, ImportanceError, Measure,
};
use roarbench::models::{Architecture, ModelConfig, TrainedModel};

const FD_H: f64 = 1e-5;

fn linear_weight(model: &TrainedModel, v: usize, c: usize) -> f64 {
    model.params.get("linear.w").unwrap().get(v, c)
}

#[test]
fn linear_gradient_scores_are_the_gold_column_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..10 {
        let model = tiny_model(Architecture::Linear, seed, 3);
        let obs = random_obs(&mut rng, 5, false, 3);
        let (l2, _) = &gradient_scores(&model, std::slice::from_ref(&obs)).unwrap()[0];
        let expected = (0..V).map(|v| linear_weight(&model, v, obs.label).powi(2)).sum::<f64>().sqrt();
        for &s in l2 {
            assert!((s - expected).abs() < 1e-12, "{s} vs {expected}");
        }
        let fd = fd_input_gradient(&model, &obs, &onehot(&obs), FD_H);
        for (t, row) in fd.iter().enumerate() {
            let norm = row.iter().map(|g| g * g).sum::<f64>().sqrt();
            assert!(relative_error(l2[t], norm) < 1e-4);
        }
    }
}

#[test]
fn zero_weight_model_has_zero_gradient_scores() {
    let config = ModelConfig::new(Architecture::Linear, V, 2);
    let model = TrainedModel::initialized(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let obs = random_obs(&mut rng, 4, false, 2);
    let (l2, ixg) = &gradient_scores(&model, &[obs]).unwrap()[0];
    assert!(l2.iter().chain(ixg).all(|&s| s == 0.0));
}

#[test]
fn gradient_measures_match_finite_differences_on_tiny_lstms() {
    for arch in [Architecture::BilstmAttentionSingle, Architecture::BilstmAttentionPaired] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..8 {
            let model = tiny_model(arch, seed, 2);
            let obs = random_obs(&mut rng, 3, arch == Architecture::BilstmAttentionPaired, 2);
            let (l2, ixg) = &gradient_scores(&model, std::slice::from_ref(&obs)).unwrap()[0];
            let fd = fd_input_gradient(&model, &obs, &onehot(&obs), FD_H);
            for (t, row) in fd.iter().enumerate() {
                let norm = row.iter().map(|g| g * g).sum::<f64>().sqrt();
                assert!(relative_error(l2[t], norm) < 1e-4, "{arch:?} seed {seed} t {t}: {} vs {norm}", l2[t]);
                let at = row[obs.tokens[t]];
                assert!(relative_error(ixg[t], at) < 1e-4, "{arch:?} seed {seed} t {t}: {} vs {at}", ixg[t]);
            }
            assert!(l2.iter().all(|&s| s >= 0.0));
        }
    }
}

#[test]
fn linear_input_x_gradient_is_the_observed_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = tiny_model(Architecture::Linear, 9, 2);
    let mut obs = random_obs(&mut rng, 6, false, 2);
    obs.tokens[2] = MASK;
    let (_, ixg) = &gradient_scores(&model, std::slice::from_ref(&obs)).unwrap()[0];
    for (t, &id) in obs.tokens.iter().enumerate() {
        assert_eq!(ixg[t], linear_weight(&model, id, obs.label));
    }
    // A masked position is scored on the [MASK] token.
    assert_eq!(ixg[2], linear_weight(&model, MASK, obs.label));

    // Other positions' tokens do not move a position's score.
    let mut other = obs.clone();
    other.tokens[4] = if obs.tokens[4] == 5 { 6 } else { 5 };
    let (_, ixg2) = &gradient_scores(&model, &[other]).unwrap()[0];
    assert_eq!(ixg[1], ixg2[1]);
}

#[test]
fn integrated_gradient_equals_input_x_gradient_on_linear_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..5 {
        let model = tiny_model(Architecture::Linear, seed, 3);
        let obs: Vec<Observation> = (0..4).map(|i| random_obs(&mut rng, 2 + i, false, 3)).collect();
        let ixg: Vec<Vec<f64>> = gradient_scores(&model, &obs).unwrap().into_iter().map(|(_, x)| x).collect();
        for k in [1, 2, 3, 7, 50, 333] {
            assert_eq!(integrated_gradient_scores(&model, &obs, k).unwrap(), ixg, "k = {k}");
        }
    }
}

#[test]
fn integrated_gradient_rejects_zero_steps() {
    let model = tiny_model(Architecture::Linear, 0, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let obs = random_obs(&mut rng, 2, false, 2);
    assert!(matches!(integrated_gradient_scores(&model, &[obs], 0), Err(ImportanceError::ZeroSteps)));
}

/// Composite Simpson integral over the path of finite-difference
/// gradients at the observed coordinates.
fn simpson_ig_oracle(model: &TrainedModel, obs: &Observation, intervals: usize) -> Vec<f64> {
    let x = onehot(obs);
    let mut acc = vec![0.0; obs.tokens.len()];
    for j in 0..=intervals {
        let a = j as f64 / intervals as f64;
        let w = if j == 0 || j == intervals { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
        let xa = x.map(|v| v * a);
        for (t, &id) in obs.tokens.iter().enumerate() {
            let k = t * V + id;
            let mut p = xa.clone();
            p.values_mut()[k] += FD_H;
            let plus = dense_gold(model, obs, &p);
            p.values_mut()[k] -= 2.0 * FD_H;
            let minus = dense_gold(model, obs, &p);
            acc[t] += w * (plus - minus) / (2.0 * FD_H);
        }
    }
    acc.iter().map(|s| s / (3.0 * intervals as f64)).collect()
}

/// The right Riemann sum overshoots the path integral by
/// (g(1) - g(0)) / (2k) to first order, where g is the gradient at the
/// observed coordinate along the path.
#[test]
fn integrated_gradient_k50_error_is_the_right_riemann_leading_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..3 {
        let model = tiny_model(Architecture::BilstmAttentionSingle, seed, 2);
        let obs = random_obs(&mut rng, 3, false, 2);
        let one = std::slice::from_ref(&obs);
        let simpson = simpson_ig_oracle(&model, &obs, 200);
        let g1 = fd_input_gradient(&model, &obs, &onehot(&obs), FD_H);
        let g0 = fd_input_gradient(&model, &obs, &Tensor::zeros(&[obs.tokens.len(), V]), FD_H);
        let ig = integrated_gradient_scores(&model, one, 50).unwrap().remove(0);
        for (t, &id) in obs.tokens.iter().enumerate() {
            let lead = (g1[t][id] - g0[t][id]) / 100.0;
            let err = ig[t] - simpson[t];
            assert!((err - lead).abs() <= 0.05 * lead.abs() + 1e-6, "seed {seed} t {t}: error {err} vs leading term {lead}");
        }
    }
}

fn completeness_error(model: &TrainedModel, obs: &Observation, k: usize) -> f64 {
    let one = std::slice::from_ref(obs);
    let ig: f64 = integrated_gradient_scores(model, one, k).unwrap()[0].iter().sum();
    let fx = gold_logits(model, one, 1.0).unwrap()[0];
    let f0 = gold_logits(model, one, 0.0).unwrap()[0];
    (ig - (fx - f0)).abs()
}

#[test]
fn integrated_gradient_completeness_improves_with_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut improved = 0;
    for seed in 0..20 {
        let model = tiny_model(Architecture::BilstmAttentionSingle, 100 + seed, 2);
        let obs = random_obs(&mut rng, 3, false, 2);
        if completeness_error(&model, &obs, 1000) <= completeness_error(&model, &obs, 10) {
            improved += 1;
        }
    }
    assert!(improved >= 18, "{improved} of 20");
}

#[test]
fn gold_logits_at_unit_scale_match_ids_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = tiny_model(Architecture::BilstmAttentionSingle, 3, 2);
    let obs: Vec<Observation> = (0..5).map(|i| random_obs(&mut rng, 1 + i, false, 2)).collect();
    let via_onehot = gold_logits(&model, &obs, 1.0).unwrap();
    let via_ids = model.logits(&obs).unwrap();
    for ((a, b), o) in via_onehot.iter().zip(&via_ids).zip(&obs) {
        assert!((a - b[o.label]).abs() < 1e-10);
    }
}

#[test]
fn attention_scores_sum_to_one_and_skip_specials() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let model = tiny_model(Architecture::BilstmAttentionSingle, 4, 2);
    let obs: Vec<Observation> = (0..6).map(|i| random_obs(&mut rng, 1 + i, false, 2)).collect();
    for (o, a) in obs.iter().zip(attention_scores(&model, &obs).unwrap()) {
        assert_eq!(a.len(), o.tokens.len());
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a[0], 0.0);
        assert_eq!(*a.last().unwrap(), 0.0);
        assert!(a.iter().all(|&x| x >= 0.0));
    }
    let single = Observation { tokens: vec![7], aux_tokens: None, label: 0, evidence: None };
    assert_eq!(attention_scores(&model, &[single]).unwrap()[0], vec![1.0]);
}

#[test]
fn attention_is_unsupported_on_linear_models() {
    let model = tiny_model(Architecture::Linear, 0, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let obs = random_obs(&mut rng, 3, false, 2);
    assert!(matches!(attention_scores(&model, &[obs]), Err(ImportanceError::Unsupported { .. })));
}

#[test]
fn random_scores_are_seeded_and_respect_exclusions() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let obs = random_obs(&mut rng, 6, false, 2);
    let a = random_scores(&obs, 1, 2, 3);
    assert_eq!(a, random_scores(&obs, 1, 2, 3));
    assert_ne!(a, random_scores(&obs, 1, 2, 4));
    assert_ne!(a, random_scores(&obs, 1, 3, 3));
    assert_ne!(a, random_scores(&obs, 2, 2, 3));
    assert_eq!(a[0], 0.0);
    assert_eq!(*a.last().unwrap(), 0.0);
    assert!(a[1..7].iter().all(|&s| (0.0..1.0).contains(&s)));
}

#[test]
fn random_top1_frequency_is_uniform() {
    const DRAWS: u64 = 10_000;
    let t = 8;
    let obs = Observation {
        tokens: std::iter::once(BOS).chain((0..t).map(|i| 5 + i % 4)).chain(std::iter::once(EOS)).collect(),
        aux_tokens: None,
        label: 0,
        evidence: None,
    };
    let mut counts = vec![0u64; obs.tokens.len()];
    for id in 0..DRAWS {
        let s = random_scores(&obs, 42, 0, id);
        let top = (0..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        counts[top] += 1;
    }
    let p = 1.0 / t as f64;
    let sigma = (DRAWS as f64 * p * (1.0 - p)).sqrt();
    assert_eq!(counts[0] + counts[t + 1], 0);
    for &c in &counts[1..=t] {
        assert!((c as f64 - DRAWS as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn oracle_marks_remaining_evidence() {
    let mut obs = Observation { tokens: vec![BOS, 5, 6, 7, 8, EOS], aux_tokens: None, label: 1, evidence: Some(vec![3]) };
    assert_eq!(oracle_scores(&obs, 0).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    obs.tokens[3] = MASK;
    assert!(oracle_scores(&obs, 0).unwrap().iter().all(|&s| s == 0.0));

    let mut two = Observation { evidence: Some(vec![4, 2]), ..obs.clone() };
    two.tokens[3] = 7;
    assert_eq!(oracle_scores(&two, 0).unwrap(), vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    assert_eq!(oracle_first_scores(&two, 0).unwrap(), vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    two.tokens[2] = MASK;
    assert_eq!(oracle_first_scores(&two, 0).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    let bare = Observation { evidence: None, ..obs };
    assert!(matches!(oracle_scores(&bare, 9), Err(ImportanceError::MissingEvidence(9))));
}

#[test]
fn every_measure_flags_specials_and_covers_only_the_primary_sequence() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let model = tiny_model(Architecture::BilstmAttentionPaired, 5, 2);
    let obs: Vec<Observation> = (0..3)
        .map(|i| Observation { evidence: Some(vec![1]), ..random_obs(&mut rng, 2 + i, true, 2) })
        .collect();
    let ids: Vec<u64> = (0..3).collect();
    for m in Measure::ALL {
        let ctx = Context { model: Some(&model), seed: 1, iteration: 0, ig_steps: 5 };
        let maps = compute(m, &ctx, &obs, &ids).unwrap();
        for (map, o) in maps.iter().zip(&obs) {
            assert_eq!(map.scores.len(), o.tokens.len(), "{m}");
            assert_eq!(map.maskable, o.maskable());
            assert!(!map.maskable[0] && !map.maskable[o.tokens.len() - 1]);
            assert_eq!(map.measure, m);
        }
    }
}

#[test]
fn positive_rescaling_keeps_the_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let model = tiny_model(Architecture::BilstmAttentionSingle, 6, 2);
    let obs = random_obs(&mut rng, 6, false, 2);
    let (_, ixg) = &gradient_scores(&model, std::slice::from_ref(&obs)).unwrap()[0];
    let rank = |s: &[f64]| {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        idx
    };
    let c = rng.random_range(0.1..10.0);
    let scaled: Vec<f64> = ixg.iter().map(|s| s * c).collect();
    assert_eq!(rank(ixg), rank(&scaled));
}

#[test]
fn dense_input_reproduces_one_hot_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let model = tiny_model(Architecture::BilstmAttentionSingle, 7, 2);
    let obs = random_obs(&mut rng, 4, false, 2);
    let direct = model.logits(std::slice::from_ref(&obs)).unwrap()[0][obs.label];
    let dense = dense_gold(&model, &obs, &onehot(&obs));
    assert!((direct - dense).abs() < 1e-12);
    let zero = Tensor::zeros(&[obs.tokens.len(), V]);
    let base = gold_logits(&model, std::slice::from_ref(&obs), 0.0).unwrap()[0];
    assert!((dense_gold(&model, &obs, &zero) - base).abs() < 1e-12);
}
