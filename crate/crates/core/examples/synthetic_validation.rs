//! Removal curves on the 16-feature tabular task: ground truth, worst case,
//! classic and recursive |weight| ordering.

use roarbench::harness::{run_synthetic_validation, ValidationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let v = run_synthetic_validation(&ValidationConfig::default())?;
    let fmt = |xs: &[Option<f64>]| xs.iter().map(|x| x.map_or("  -  ".into(), |x| format!("{x:.3}"))).collect::<Vec<_>>().join(" ");
    println!("removed       {}", v.removed.iter().map(|r| format!("{r:>5}")).collect::<Vec<_>>().join(" "));
    println!("ground truth  {}", fmt(&v.ground_truth.mean));
    println!("worst case    {}", fmt(&v.worst_case.mean));
    println!("classic       {}", fmt(&v.classic.mean));
    println!("recursive     {}", fmt(&v.recursive.mean));
    println!(
        "max recursive gap {:.4} (tolerance {}), classic overestimates on {} seeds, passed {}",
        v.max_recursive_gap, v.tolerance, v.classic_overestimating_seeds, v.passed
    );
    Ok(())
}
