//! Fits a bigram policy to samples from a peaked expert with SFT, DFT and
//! InfoSFT, and compares fit, entropy and distance from the initial policy.
//!
//! `cargo run --release --example train_tabular`

use infosft::tabular::{policy_metrics, train, TrainConfig};
use infosft::tasks::{imitation_task, ImitationTaskSpec};
use infosft::weighting::WeightRule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> infosft::Result<()> {
    let task = imitation_task(
        &ImitationTaskSpec::default(),
        &mut ChaCha8Rng::seed_from_u64(4),
    )?;
    let contexts = task.dataset.contexts(task.init.context_map());
    println!(
        "{:<14} {:>8} {:>9} {:>11} {:>12}",
        "rule", "mean_q", "entropy", "KL to init", "KL expert||pi"
    );
    for rule in [
        WeightRule::Sft,
        WeightRule::Dft,
        WeightRule::info_sft(0.93)?,
    ] {
        let run = train(
            &task.init,
            &task.dataset,
            &TrainConfig::new(rule, 5.0, 1000),
        )?;
        let m = policy_metrics(&run.policy, &task.init, &task.dataset, &contexts)?;
        let fit = task.expert.mean_kl_to(&run.policy, &contexts)?;
        println!(
            "{:<14} {:>8.4} {:>9.4} {:>11.4} {:>12.4}",
            rule.to_string(),
            m.mean_q,
            m.entropy,
            m.kl_to_base,
            fit
        );
    }
    Ok(())
}
