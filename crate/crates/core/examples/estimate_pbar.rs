//! Estimates `p̄` for a trained policy by sampling its own responses, with
//! and without a filter on which responses count.
//!
//! `cargo run --release --example estimate_pbar`

use infosft::tabular::{estimate_p_bar, train, PBarSettings, TrainConfig};
use infosft::tasks::{imitation_task, ImitationTaskSpec};
use infosft::weighting::WeightRule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> infosft::Result<()> {
    let task = imitation_task(
        &ImitationTaskSpec::default(),
        &mut ChaCha8Rng::seed_from_u64(2),
    )?;
    let policy = train(
        &task.init,
        &task.dataset,
        &TrainConfig::new(WeightRule::Sft, 5.0, 300),
    )?
    .policy;
    let prompts = task.dataset.prompts();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for temperature in [1.0, 0.7] {
        let settings = PBarSettings {
            temperature,
            ..PBarSettings::default()
        };
        let est = estimate_p_bar(&policy, &prompts, &settings, None, &mut rng)?;
        println!(
            "T = {temperature}: p_bar = {:.4} +- {:.4}",
            est.p_bar, est.std_error
        );
    }
    let expert = &task.expert;
    let map = *policy.context_map();
    let agrees = |prompt: &[usize], response: &[usize]| {
        let mut history = prompt.to_vec();
        response.iter().all(|&t| {
            let row = expert.row(map.context_id(&history));
            let best = (0..row.len())
                .max_by(|&a, &b| row.prob(a).total_cmp(&row.prob(b)))
                .unwrap_or(0);
            history.push(t);
            t == best
        })
    };
    let est = estimate_p_bar(
        &policy,
        &prompts,
        &PBarSettings::default(),
        Some(&agrees),
        &mut rng,
    )?;
    println!(
        "expert-greedy responses only: p_bar = {:.4} +- {:.4} ({} of {} kept)",
        est.p_bar, est.std_error, est.kept_responses, est.total_responses
    );
    Ok(())
}
