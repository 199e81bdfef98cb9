//! Area-between-curves faithfulness for a few hand-made curves, the effect
//! of refining the grid, and a confidence interval across seeds.

use roarbench::metrics::{area_faithfulness, confidence_interval, refine_linear, step_invariance_check, RoarCurve};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ratios = vec![0.0, 0.5, 1.0];
    let baseline = vec![0.9, 0.7, 0.5];
    for (label, perf) in [
        ("same as random", vec![0.9, 0.7, 0.5]),
        ("halfway", vec![0.9, 0.5, 0.5]),
        ("immediate collapse", vec![0.5, 0.5, 0.5]),
        ("worse than random", vec![0.9, 0.85, 0.5]),
    ] {
        let c = RoarCurve::new(ratios.clone(), perf, baseline.clone())?;
        println!("{label:<20} {:+.4}", area_faithfulness(&c)?);
    }

    let coarse = RoarCurve::new(ratios, vec![0.9, 0.6, 0.5], baseline)?;
    let fine = refine_linear(&coarse, &[0.0, 0.1, 0.25, 0.5, 0.6, 0.75, 1.0])?;
    let rep = step_invariance_check(&coarse, &fine)?;
    println!("coarse {:.6} refined {:.6} difference {:.1e}", rep.coarse_score, rep.refined_score, rep.difference);

    let per_seed = [0.62, 0.71, 0.55, 0.68, 0.66];
    let ci = confidence_interval(&per_seed, 0.95)?;
    println!("mean {:.3}, 95 % CI [{:.3}, {:.3}]", ci.mean, ci.low, ci.high);
    Ok(())
}
