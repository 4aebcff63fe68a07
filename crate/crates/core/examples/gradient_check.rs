//! Analytic gradient of the weighted objective against central finite
//! differences with the token weights held fixed.
//!
//! `cargo run --example gradient_check`

use infosft::tabular::{
    frozen_objective, token_terms, weighted_loss_and_gradient, ContextMap, Sequence, TabularPolicy,
    DEFAULT_Q_CLIP_HI,
};
use infosft::weighting::WeightRule;
use ndarray::Array2;

fn main() -> infosft::Result<()> {
    let map = ContextMap::new(2, 4)?;
    let logits = Array2::from_shape_fn((map.num_contexts(), 4), |(r, c)| {
        ((3 * r + 5 * c) % 7) as f64 / 3.0 - 1.0
    });
    let policy = TabularPolicy::from_logits(map, logits)?;
    let seqs = [
        Sequence::new(vec![1, 2, 0, 3, 3], 2),
        Sequence::new(vec![0, 1, 1], 1),
    ];
    let batch: Vec<&Sequence> = seqs.iter().collect();
    let h = 1e-5;
    for rule in [
        WeightRule::Sft,
        WeightRule::Dft,
        WeightRule::info_sft(0.93)?,
    ] {
        let analytic =
            weighted_loss_and_gradient(&policy, &batch, &rule, DEFAULT_Q_CLIP_HI)?.gradient;
        let weights: Vec<f64> = token_terms(&policy, &batch, &rule, DEFAULT_Q_CLIP_HI)?
            .iter()
            .map(|t| t.weight)
            .collect();
        let mut worst: f64 = 0.0;
        for idx in ndarray::indices(analytic.dim()) {
            let shifted = |delta: f64| -> infosft::Result<f64> {
                let mut l = policy.logits().clone();
                l[idx] += delta;
                frozen_objective(&TabularPolicy::from_logits(map, l)?, &batch, &weights)
            };
            let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            worst = worst.max((fd - analytic[idx]).abs());
        }
        println!("{:<14} max |analytic - fd| = {worst:.2e}", rule.to_string());
    }
    Ok(())
}
