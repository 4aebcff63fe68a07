//! Synthetic expert models and the task generators used by the training
//! experiments.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::distributions::{kl_divergence, sample, sample_dirichlet, CategoricalDistribution};
use crate::error::{Error, Result};
use crate::tabular::{train, ContextMap, Sequence, SequenceDataset, TabularPolicy, TrainConfig};
use crate::weighting::WeightRule;

/// A known next-token distribution for every context of a [`ContextMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertModel {
    map: ContextMap,
    rows: Vec<CategoricalDistribution>,
}

impl ExpertModel {
    pub fn new(map: ContextMap, rows: Vec<CategoricalDistribution>) -> Result<Self> {
        if rows.len() != map.num_contexts() {
            return Err(Error::Config(format!(
                "{} expert rows for {} contexts",
                rows.len(),
                map.num_contexts()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != map.alphabet_size()) {
            return Err(Error::InvalidDistribution(format!(
                "expert row over {} tokens, alphabet is {}",
                r.len(),
                map.alphabet_size()
            )));
        }
        Ok(Self { map, rows })
    }

    pub fn context_map(&self) -> &ContextMap {
        &self.map
    }

    pub fn row(&self, context: usize) -> &CategoricalDistribution {
        &self.rows[context]
    }

    pub fn rows(&self) -> &[CategoricalDistribution] {
        &self.rows
    }

    pub fn sample_response<R: Rng + ?Sized>(
        &self,
        prompt: &[usize],
        len: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let mut history = prompt.to_vec();
        for _ in 0..len {
            let next = sample(&self.rows[self.map.context_id(&history)], rng);
            history.push(next);
        }
        history.split_off(prompt.len())
    }

    /// `count` sequences, each a one-token prompt drawn uniformly from
    /// `prompt_tokens` followed by a `response_len`-token expert response.
    pub fn sample_dataset<R: Rng + ?Sized>(
        &self,
        prompt_tokens: &[usize],
        count: usize,
        response_len: usize,
        rng: &mut R,
    ) -> Result<SequenceDataset> {
        if prompt_tokens.is_empty() {
            return Err(Error::Config("no prompt tokens".into()));
        }
        let sequences = (0..count)
            .map(|_| {
                let prompt = prompt_tokens[rng.random_range(0..prompt_tokens.len())];
                let mut tokens = vec![prompt];
                tokens.extend(self.sample_response(&[prompt], response_len, rng));
                Sequence::new(tokens, 1)
            })
            .collect();
        SequenceDataset::new(self.map.alphabet_size(), sequences)
    }

    /// Mean `KL(expert(. | c) || policy(. | c))` over `contexts`.
    pub fn mean_kl_to(&self, policy: &TabularPolicy, contexts: &[usize]) -> Result<f64> {
        if contexts.is_empty() {
            return Err(Error::Precondition("no probe contexts".into()));
        }
        let mut total = 0.0;
        for &c in contexts {
            total += kl_divergence(&self.rows[c], &policy.distribution(c)?)?;
        }
        Ok(total / contexts.len() as f64)
    }
}

/// Mean `KL(policy(. | c) || base(. | c))` over `contexts`.
pub fn mean_kl_between(
    policy: &TabularPolicy,
    base: &TabularPolicy,
    contexts: &[usize],
) -> Result<f64> {
    if contexts.is_empty() {
        return Err(Error::Precondition("no probe contexts".into()));
    }
    let mut total = 0.0;
    for &c in contexts {
        total += kl_divergence(&policy.distribution(c)?, &base.distribution(c)?)?;
    }
    Ok(total / contexts.len() as f64)
}

/// Mean entropy of `policy(. | c)` over `contexts`.
pub fn mean_entropy(policy: &TabularPolicy, contexts: &[usize]) -> Result<f64> {
    if contexts.is_empty() {
        return Err(Error::Precondition("no probe contexts".into()));
    }
    let mut total = 0.0;
    for &c in contexts {
        total += crate::distributions::entropy(&policy.distribution(c)?);
    }
    Ok(total / contexts.len() as f64)
}

/// A row with mass `top` on `peak` and the remaining `1 - top` spread by a
/// symmetric Dirichlet draw over the other tokens.
fn peaked_row<R: Rng + ?Sized>(
    k: usize,
    peak: usize,
    top: f64,
    rest_concentration: f64,
    rng: &mut R,
) -> Result<CategoricalDistribution> {
    let mut rest = sample_dirichlet(rest_concentration, k, rng)?.into_probs();
    rest[peak] = 0.0;
    let sum: f64 = rest.iter().sum();
    let mut row: Vec<f64> = rest.iter().map(|r| (1.0 - top) * r / sum).collect();
    row[peak] = top;
    CategoricalDistribution::normalized(row)
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(0.0 < r[0] && r[0] <= r[1] && r[1] < 1.0) {
        return Err(Error::Config(format!(
            "{name} = {r:?} must satisfy 0 < lo <= hi < 1"
        )));
    }
    Ok(())
}

fn uniform_in<R: Rng + ?Sized>(r: [f64; 2], rng: &mut R) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Single-task imitation: a sharply peaked expert and a small random
/// initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImitationTaskSpec {
    pub alphabet_size: usize,
    pub order: usize,
    pub sequences: usize,
    pub response_len: usize,
    /// Range of the expert's peak probability in each row.
    pub top_mass: [f64; 2],
    pub rest_concentration: f64,
    /// Standard deviation of the initial logits.
    pub init_logit_std: f64,
}

impl Default for ImitationTaskSpec {
    fn default() -> Self {
        Self {
            alphabet_size: 12,
            order: 1,
            sequences: 150,
            response_len: 6,
            top_mass: [0.95, 0.99],
            rest_concentration: 1.0,
            init_logit_std: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImitationTask {
    pub expert: ExpertModel,
    pub dataset: SequenceDataset,
    pub init: TabularPolicy,
}

pub fn imitation_task<R: Rng + ?Sized>(
    spec: &ImitationTaskSpec,
    rng: &mut R,
) -> Result<ImitationTask> {
    check_range("top_mass", spec.top_mass)?;
    let map = ContextMap::new(spec.order, spec.alphabet_size)?;
    let k = spec.alphabet_size;
    let mut rows = Vec::with_capacity(map.num_contexts());
    for _ in 0..map.num_contexts() {
        let peak = rng.random_range(0..k);
        let top = uniform_in(spec.top_mass, rng);
        rows.push(peaked_row(k, peak, top, spec.rest_concentration, rng)?);
    }
    let expert = ExpertModel::new(map, rows)?;
    let prompts: Vec<usize> = (0..k).collect();
    let dataset = expert.sample_dataset(&prompts, spec.sequences, spec.response_len, rng)?;
    let normal = Normal::new(0.0, spec.init_logit_std)
        .map_err(|e| Error::Config(format!("init_logit_std = {}: {e}", spec.init_logit_std)))?;
    let logits = Array2::from_shape_simple_fn((map.num_contexts(), k), || normal.sample(rng));
    let init = TabularPolicy::from_logits(map, logits)?;
    Ok(ImitationTask {
        expert,
        dataset,
        init,
    })
}

/// A prior task A and a new task B over one alphabet.
///
/// Task A prompts are the first half of the alphabet and task B prompts the
/// second half; response tokens range over the whole alphabet. The base policy
/// is fit to task A with SFT. Each task-B expert row peaks on one of the
/// `shift_candidates` tokens the base finds least likely in that context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoTaskSpec {
    pub alphabet_size: usize,
    pub order: usize,
    pub response_len: usize,
    pub prior_sequences: usize,
    pub new_sequences: usize,
    pub prior_concentration: f64,
    pub pretrain_learning_rate: f64,
    pub pretrain_steps: usize,
    pub shift_candidates: usize,
    pub top_mass: [f64; 2],
    pub new_rest_concentration: f64,
}

impl Default for TwoTaskSpec {
    fn default() -> Self {
        Self {
            alphabet_size: 12,
            order: 1,
            response_len: 6,
            prior_sequences: 200,
            new_sequences: 100,
            prior_concentration: 0.3,
            pretrain_learning_rate: 5.0,
            pretrain_steps: 300,
            shift_candidates: 3,
            top_mass: [0.8, 0.97],
            new_rest_concentration: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTaskDraw {
    pub expert_a: ExpertModel,
    pub expert_b: ExpertModel,
    pub base: TabularPolicy,
    pub dataset_a: SequenceDataset,
    pub dataset_b: SequenceDataset,
    /// Contexts scored by task A data, used for retention.
    pub contexts_a: Vec<usize>,
    /// Contexts scored by task B data, used for new-task fit.
    pub contexts_b: Vec<usize>,
}

pub fn two_task_draw<R: Rng + ?Sized>(spec: &TwoTaskSpec, rng: &mut R) -> Result<TwoTaskDraw> {
    check_range("top_mass", spec.top_mass)?;
    let k = spec.alphabet_size;
    if k < 4 {
        return Err(Error::Config(format!("alphabet_size = {k} < 4")));
    }
    if spec.shift_candidates == 0 || spec.shift_candidates > k {
        return Err(Error::Config(format!(
            "shift_candidates = {} must lie in [1, {k}]",
            spec.shift_candidates
        )));
    }
    let map = ContextMap::new(spec.order, k)?;
    let rows_a = (0..map.num_contexts())
        .map(|_| sample_dirichlet(spec.prior_concentration, k, rng))
        .collect::<Result<Vec<_>>>()?;
    let expert_a = ExpertModel::new(map, rows_a)?;
    let prompts_a: Vec<usize> = (0..k / 2).collect();
    let prompts_b: Vec<usize> = (k / 2..k).collect();
    let dataset_a =
        expert_a.sample_dataset(&prompts_a, spec.prior_sequences, spec.response_len, rng)?;

    let pretrain = TrainConfig::new(
        WeightRule::Sft,
        spec.pretrain_learning_rate,
        spec.pretrain_steps,
    );
    let base = train(&TabularPolicy::uniform(map), &dataset_a, &pretrain)?.policy;

    let mut rows_b = Vec::with_capacity(map.num_contexts());
    for c in 0..map.num_contexts() {
        let base_row = base.probs(c);
        let mut by_prob: Vec<usize> = (0..k).collect();
        by_prob.sort_by(|&a, &b| base_row[a].total_cmp(&base_row[b]).then(a.cmp(&b)));
        let peak = by_prob[rng.random_range(0..spec.shift_candidates)];
        let top = uniform_in(spec.top_mass, rng);
        rows_b.push(peaked_row(k, peak, top, spec.new_rest_concentration, rng)?);
    }
    let expert_b = ExpertModel::new(map, rows_b)?;
    let dataset_b =
        expert_b.sample_dataset(&prompts_b, spec.new_sequences, spec.response_len, rng)?;
    let contexts_a = dataset_a.contexts(&map);
    let contexts_b = dataset_b.contexts(&map);
    Ok(TwoTaskDraw {
        expert_a,
        expert_b,
        base,
        dataset_a,
        dataset_b,
        contexts_a,
        contexts_b,
    })
}
