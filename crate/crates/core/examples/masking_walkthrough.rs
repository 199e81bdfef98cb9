//! Walks one sequence through four masking iterations, once with a frozen
//! score vector and once with fresh scores each step.

use roarbench::data::{gen_keyword_lookup, KeywordParams, SplitSizes};
use roarbench::masking::{apply_mask, extend_mask, MaskState, Ranking, StepSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = gen_keyword_lookup(&KeywordParams {
        splits: SplitSizes { train: 1, validation: 1, test: 1 },
        seed: 5,
        ..KeywordParams::default()
    })?;
    let obs = &ds.train[0];
    let maskable = obs.maskable();
    let m = obs.maskable_count();
    let schedule = StepSchedule::relative(0.25);
    println!("{}", ds.decode(&obs.tokens).join(" "));

    // Frozen scores rise with position, so later tokens go first.
    let frozen: Vec<f64> = (0..obs.tokens.len()).map(|t| t as f64).collect();
    let mut classic = MaskState::new();
    let mut recursive = MaskState::new();
    for j in 1..schedule.iterations(m) {
        let target = schedule.cumulative_target(j, m);
        classic = extend_mask(&classic, &frozen, &maskable, target, Ranking::Signed)?;
        // A stand-in for recomputed importance: prefer tokens next to the
        // most recently masked one.
        let last = recursive.masked.last().copied().unwrap_or(0) as f64;
        let fresh: Vec<f64> = (0..obs.tokens.len()).map(|t| -(t as f64 - last - 1.0).abs()).collect();
        recursive = extend_mask(&recursive, &fresh, &maskable, target, Ranking::Signed)?;
        println!("iteration {j} (target {target})");
        println!("  frozen: {}", ds.decode(&apply_mask(obs, &classic).tokens).join(" "));
        println!("  fresh:  {}", ds.decode(&apply_mask(obs, &recursive).tokens).join(" "));
    }
    Ok(())
}
