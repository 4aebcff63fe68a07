//! Token weight `w(q)` for each rule at a few probabilities.
//!
//! `cargo run --example weight_curves`

use infosft::weighting::{difference_sign_changes, interior_grid, weight_curve, WeightRule};

fn main() -> infosft::Result<()> {
    let rules: Vec<WeightRule> = [
        "sft",
        "dft",
        "infosft(0.93)",
        "infosft(0.7)",
        "calibrated(1.5)",
    ]
    .iter()
    .map(|s| s.parse())
    .collect::<infosft::Result<_>>()?;
    print!("{:>8}", "q");
    for r in &rules {
        print!("{:>16}", r.to_string());
    }
    println!();
    for q in [
        1e-6, 1e-3, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 0.93, 0.99,
    ] {
        print!("{q:>8}");
        for r in &rules {
            print!("{:>16.6}", r.token_weight(q)?);
        }
        println!();
    }
    let grid = interior_grid(10_000);
    let info = weight_curve(&rules[2], &grid)?;
    let values: Vec<f64> = info.iter().map(|&(_, w)| w).collect();
    let (q_peak, w_peak) = info
        .iter()
        .copied()
        .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    println!(
        "infosft(0.93): peak w = {w_peak:.4} at q = {q_peak:.4}, {} sign change(s) in the differences",
        difference_sign_changes(&values)
    );
    Ok(())
}
