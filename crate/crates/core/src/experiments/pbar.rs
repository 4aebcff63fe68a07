use std::fs::File;
use std::io::BufReader;

use super::config::ExperimentConfig;
use super::output::{ensure_dir, fmt_opt, rng_for, write_csv};
use crate::error::{Error, Result};
use crate::tabular::{
    estimate_p_bar, ContextMap, PBarEstimate, PBarSettings, SequenceDataset, TabularPolicy,
};

/// Estimates `p̄` by sampling from a policy. Writes `pbar.csv` (per prompt)
/// and `pbar_summary.csv`.
pub fn run_estimate_pbar(config: &ExperimentConfig) -> Result<PBarEstimate> {
    let section = &config.estimate_pbar;
    let policy = match &section.policy {
        Some(path) => TabularPolicy::read_text(BufReader::new(File::open(path)?))?,
        None => TabularPolicy::uniform(ContextMap::new(section.order, section.alphabet_size)?),
    };
    let prompts = match &section.dataset {
        Some(path) => SequenceDataset::read_text(BufReader::new(File::open(path)?))?.prompts(),
        None => section.prompts.clone(),
    };
    if let Some(t) = prompts
        .iter()
        .flatten()
        .find(|&&t| t >= policy.alphabet_size())
    {
        return Err(Error::Config(format!(
            "prompt token {t} >= alphabet size {}",
            policy.alphabet_size()
        )));
    }
    let settings = PBarSettings {
        num_samples: section.num_samples,
        max_len: section.max_len,
        temperature: section.temperature,
    };
    let estimate = estimate_p_bar(
        &policy,
        &prompts,
        &settings,
        None,
        &mut rng_for(config.seed, 0),
    )?;

    ensure_dir(&config.out)?;
    config.write_resolved()?;
    write_csv(
        &config.out.join("pbar.csv"),
        "pbar-per-prompt",
        &["prompt", "tokens", "kept", "sampled", "mean_prob"],
        estimate.per_prompt.iter().map(|p| {
            let tokens: Vec<String> = prompts[p.prompt].iter().map(|t| t.to_string()).collect();
            vec![
                p.prompt.to_string(),
                tokens.join(" "),
                p.kept.to_string(),
                p.sampled.to_string(),
                fmt_opt(p.mean_prob),
            ]
        }),
    )?;
    write_csv(
        &config.out.join("pbar_summary.csv"),
        "pbar",
        &[
            "p_bar",
            "std_error",
            "kept_responses",
            "total_responses",
            "temperature",
        ],
        [vec![
            estimate.p_bar.to_string(),
            estimate.std_error.to_string(),
            estimate.kept_responses.to_string(),
            estimate.total_responses.to_string(),
            section.temperature.to_string(),
        ]],
    )?;
    Ok(estimate)
}
