//! Below `p̄`, the InfoSFT gradient splits into `logit(p̄)` times the DFT
//! gradient plus the gradient of the mean binary entropy of the scored
//! tokens.
//!
//! `cargo run --example entropy_decomposition`

use infosft::tabular::{entropy_decomposition_check, ContextMap, Sequence, TabularPolicy};
use ndarray::Array2;

fn main() -> infosft::Result<()> {
    let map = ContextMap::new(1, 5)?;
    let logits = Array2::from_shape_fn((map.num_contexts(), 5), |(r, c)| {
        0.3 * (r as f64 - c as f64).sin()
    });
    let policy = TabularPolicy::from_logits(map, logits)?;
    let seqs = [
        Sequence::new(vec![0, 4, 2, 2], 1),
        Sequence::new(vec![3, 1, 0], 1),
    ];
    let batch: Vec<&Sequence> = seqs.iter().collect();
    for p_bar in [0.5, 0.8, 0.93] {
        let (lhs, rhs) = entropy_decomposition_check(&policy, &batch, p_bar)?;
        let diff = lhs
            .iter()
            .zip(&rhs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        println!("p_bar = {p_bar}: max |lhs - rhs| = {diff:.2e}");
    }
    Ok(())
}
