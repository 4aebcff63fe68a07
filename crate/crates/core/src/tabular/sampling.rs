use rand::Rng;

use super::TabularPolicy;
use crate::distributions::sample_slice;
use crate::error::{Error, Result};

/// Autoregressive response for `prompt`, `max_len` tokens long.
///
/// Tokens are drawn from `softmax(logits / temperature)`. At `temperature == 0`
/// the most likely token is taken, ties going to the lowest index.
pub fn generate<R: Rng + ?Sized>(
    policy: &TabularPolicy,
    prompt: &[usize],
    max_len: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::Domain {
            op: "generate",
            value: temperature,
            domain: "temperature >= 0",
        });
    }
    let map = policy.context_map();
    let mut history = prompt.to_vec();
    let mut response = Vec::with_capacity(max_len);
    for _ in 0..max_len {
        let ctx = map.context_id(&history);
        let token = if temperature == 0.0 {
            argmax_lowest(policy.row(ctx).iter().copied())
        } else {
            sample_slice(&policy.tempered_probs(ctx, temperature), rng)
        };
        history.push(token);
        response.push(token);
    }
    Ok(response)
}

fn argmax_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Keeps or rejects a sampled `(prompt, response)`.
pub type Predicate<'a> = &'a dyn Fn(&[usize], &[usize]) -> bool;

#[derive(Debug, Clone, Copy)]
pub struct PBarSettings {
    pub num_samples: usize,
    pub max_len: usize,
    pub temperature: f64,
}

impl Default for PBarSettings {
    fn default() -> Self {
        Self {
            num_samples: 64,
            max_len: 8,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptEstimate {
    pub prompt: usize,
    pub kept: usize,
    pub sampled: usize,
    /// Mean token probability over this prompt's kept responses; `None` if none were kept.
    pub mean_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PBarEstimate {
    pub p_bar: f64,
    /// Standard error of the mean over kept responses.
    pub std_error: f64,
    pub kept_responses: usize,
    pub total_responses: usize,
    pub per_prompt: Vec<PromptEstimate>,
}

/// Average probability the policy assigns to its own sampled tokens.
///
/// Responses are drawn at `settings.temperature`, the score of each token is
/// its untempered probability under the policy, and responses rejected by
/// `predicate` are dropped. The estimate weights every kept token equally; the
/// standard error treats each kept response's mean as one observation.
pub fn estimate_p_bar<R: Rng + ?Sized>(
    policy: &TabularPolicy,
    prompts: &[Vec<usize>],
    settings: &PBarSettings,
    predicate: Option<Predicate<'_>>,
    rng: &mut R,
) -> Result<PBarEstimate> {
    if settings.num_samples == 0 {
        return Err(Error::Precondition("num_samples must be >= 1".into()));
    }
    if settings.max_len == 0 {
        return Err(Error::Precondition("max_len must be >= 1".into()));
    }
    if prompts.is_empty() {
        return Err(Error::Precondition("no prompts".into()));
    }
    let map = policy.context_map();
    let mut token_sum = 0.0;
    let mut token_count = 0usize;
    let mut response_means = Vec::new();
    let mut per_prompt = Vec::with_capacity(prompts.len());
    for (i, prompt) in prompts.iter().enumerate() {
        let mut kept = 0;
        let mut prompt_sum = 0.0;
        let mut prompt_tokens = 0usize;
        for _ in 0..settings.num_samples {
            let response = generate(policy, prompt, settings.max_len, settings.temperature, rng)?;
            if let Some(pred) = predicate {
                if !pred(prompt, &response) {
                    continue;
                }
            }
            let mut history = prompt.clone();
            let mut sum = 0.0;
            for &token in &response {
                sum += policy.prob(map.context_id(&history), token);
                history.push(token);
            }
            kept += 1;
            prompt_sum += sum;
            prompt_tokens += response.len();
            response_means.push(sum / response.len() as f64);
        }
        token_sum += prompt_sum;
        token_count += prompt_tokens;
        per_prompt.push(PromptEstimate {
            prompt: i,
            kept,
            sampled: settings.num_samples,
            mean_prob: (kept > 0).then(|| prompt_sum / prompt_tokens as f64),
        });
    }
    if response_means.is_empty() {
        return Err(Error::AllFiltered);
    }
    let n = response_means.len() as f64;
    let mean = response_means.iter().sum::<f64>() / n;
    let std_error = if response_means.len() > 1 {
        let var = response_means
            .iter()
            .map(|m| (m - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(PBarEstimate {
        p_bar: token_sum / token_count as f64,
        std_error,
        kept_responses: response_means.len(),
        total_responses: prompts.len() * settings.num_samples,
        per_prompt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::ContextMap;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_hot_policy() -> TabularPolicy {
        // order 1, K = 3: each token deterministically followed by (t + 1) mod 3
        let map = ContextMap::new(1, 3).unwrap();
        let logits =
            Array2::from_shape_fn((4, 3), |(r, c)| if c == (r + 1) % 3 { 0.0 } else { -1e4 });
        TabularPolicy::from_logits(map, logits).unwrap()
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let map = ContextMap::new(0, 4).unwrap();
        let policy = TabularPolicy::from_logits(
            map,
            Array2::from_shape_vec((1, 4), vec![0.0, 2.0, 2.0, 1.0]).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            generate(&policy, &[], 3, 0.0, &mut rng).unwrap(),
            vec![1, 1, 1]
        );
        assert!(generate(&policy, &[], 3, -1.0, &mut rng).is_err());
    }

    #[test]
    fn one_hot_path_at_any_temperature() {
        let policy = one_hot_policy();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for temp in [0.0, 0.7, 1.0, 3.0] {
            assert_eq!(
                generate(&policy, &[2], 4, temp, &mut rng).unwrap(),
                vec![0, 1, 2, 0]
            );
        }
    }

    #[test]
    fn tempered_frequencies() {
        let map = ContextMap::new(0, 3).unwrap();
        let logits = vec![0.2, -0.4, 0.5];
        let policy =
            TabularPolicy::from_logits(map, Array2::from_shape_vec((1, 3), logits).unwrap())
                .unwrap();
        let expected = policy.tempered_probs(0, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let draws = generate(&policy, &[], n, 0.7, &mut rng).unwrap();
        for (k, &pk) in expected.iter().enumerate() {
            let freq = draws.iter().filter(|&&t| t == k).count() as f64 / n as f64;
            let sigma = (pk * (1.0 - pk) / n as f64).sqrt();
            assert!(
                (freq - pk).abs() <= 5.0 * sigma,
                "token {k}: {freq} vs {pk}"
            );
        }
    }

    #[test]
    fn p_bar_of_one_hot_policy_is_one() {
        let policy = one_hot_policy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let est = estimate_p_bar(
            &policy,
            &[vec![0], vec![1]],
            &PBarSettings::default(),
            None,
            &mut rng,
        )
        .unwrap();
        assert_eq!(est.p_bar, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn p_bar_of_uniform_policy() {
        let policy = TabularPolicy::uniform(ContextMap::new(1, 10).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let est = estimate_p_bar(
            &policy,
            &[vec![3]],
            &PBarSettings::default(),
            None,
            &mut rng,
        )
        .unwrap();
        assert!((est.p_bar - 0.1).abs() <= 1e-12);
    }

    #[test]
    fn predicate_filters() {
        let policy = TabularPolicy::uniform(ContextMap::new(1, 4).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let settings = PBarSettings::default();
        let reject_all = |_: &[usize], _: &[usize]| false;
        assert!(matches!(
            estimate_p_bar(&policy, &[vec![0]], &settings, Some(&reject_all), &mut rng),
            Err(Error::AllFiltered)
        ));
        let starts_with_zero = |_: &[usize], r: &[usize]| r[0] == 0;
        let est = estimate_p_bar(
            &policy,
            &[vec![0]],
            &settings,
            Some(&starts_with_zero),
            &mut rng,
        )
        .unwrap();
        assert!(est.kept_responses < est.total_responses);
        assert_eq!(est.per_prompt[0].kept, est.kept_responses);
    }

    #[test]
    fn seeded_estimates_repeat() {
        let map = ContextMap::new(1, 5).unwrap();
        let logits = Array2::from_shape_fn((6, 5), |(r, c)| ((r * 5 + c) as f64).cos());
        let policy = TabularPolicy::from_logits(map, logits).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            estimate_p_bar(
                &policy,
                &[vec![1], vec![4]],
                &PBarSettings::default(),
                None,
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
