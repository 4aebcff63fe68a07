use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::objective::{prob_table, weighted_loss_and_gradient, DEFAULT_Q_CLIP_HI};
use super::{SequenceDataset, TabularPolicy};
use crate::distributions::{kl_divergence, CategoricalDistribution};
use crate::error::{Error, Result};
use crate::numerics::xlogx_neg;
use crate::weighting::WeightRule;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rule: WeightRule,
    pub learning_rate: f64,
    /// Passes over the dataset. Zero runs no steps.
    pub epochs: usize,
    /// Sequences per step; `0` means the full dataset.
    pub batch_size: usize,
    /// Seeds the minibatch shuffle.
    pub seed: u64,
    pub q_clip_hi: f64,
    /// Rows over which `kl_to_base` is averaged; defaults to every context
    /// scored by the dataset.
    pub probe_contexts: Option<Vec<usize>>,
}

impl TrainConfig {
    pub fn new(rule: WeightRule, learning_rate: f64, epochs: usize) -> Self {
        Self {
            rule,
            learning_rate,
            epochs,
            batch_size: 0,
            seed: 0,
            q_clip_hi: DEFAULT_Q_CLIP_HI,
            probe_contexts: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate = {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.q_clip_hi > 0.0 && self.q_clip_hi < 1.0) {
            return Err(Error::Config(format!(
                "q_clip_hi = {} must lie in (0, 1)",
                self.q_clip_hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    /// `-J` on the step's batch, before the update.
    pub loss: f64,
    /// Mean probability of the expert tokens over the whole dataset, after the update.
    pub mean_q: f64,
    /// Mean entropy of `pi(. | c_t)` over the dataset's response positions, after the update.
    pub entropy: f64,
    /// Mean `KL(pi(. | c) || pi_base(. | c))` over the probe contexts, after the update.
    pub kl_to_base: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

pub const TRACE_SCHEMA: &str = "# schema: infosft/train-trace/v1";

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "loss", "mean_q", "entropy", "kl_to_base"])?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.loss.to_string(),
                r.mean_q.to_string(),
                r.entropy.to_string(),
                r.kl_to_base.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Dataset-level diagnostics of a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyMetrics {
    pub mean_q: f64,
    pub entropy: f64,
    pub kl_to_base: f64,
}

/// Mean expert-token probability, mean response entropy, and mean
/// `KL(policy || base)` over `probes`.
pub fn policy_metrics(
    policy: &TabularPolicy,
    base: &TabularPolicy,
    dataset: &SequenceDataset,
    probes: &[usize],
) -> Result<PolicyMetrics> {
    let probs = prob_table(policy)?;
    let base_probs = prob_table(base)?;
    let map = policy.context_map();
    let scored = dataset.scored_tokens(map);
    let mean_q = scored
        .iter()
        .map(|s| probs[[s.context, s.token]])
        .sum::<f64>()
        / scored.len() as f64;

    let row_entropy: Vec<f64> = probs
        .rows()
        .into_iter()
        .map(|row| row.iter().copied().map(xlogx_neg).sum())
        .collect();
    let entropy = scored.iter().map(|s| row_entropy[s.context]).sum::<f64>() / scored.len() as f64;

    let mut kl = 0.0;
    for &c in probes {
        let p = CategoricalDistribution::normalized(probs.row(c).to_vec())?;
        let r = CategoricalDistribution::normalized(base_probs.row(c).to_vec())?;
        kl += kl_divergence(&p, &r)?;
    }
    let kl_to_base = if probes.is_empty() {
        0.0
    } else {
        kl / probes.len() as f64
    };
    Ok(PolicyMetrics {
        mean_q,
        entropy,
        kl_to_base,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub policy: TabularPolicy,
    pub trace: TrainTrace,
}

/// Plain gradient ascent on the weighted objective with a constant step.
///
/// Deterministic given `config.seed`. A non-finite loss, probability, or
/// parameter aborts with [`Error::Diverged`] carrying the trace so far.
pub fn train(
    policy: &TabularPolicy,
    dataset: &SequenceDataset,
    config: &TrainConfig,
) -> Result<TrainRun> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Precondition("empty dataset".into()));
    }
    let map = *policy.context_map();
    if dataset.alphabet_size() != map.alphabet_size() {
        return Err(Error::Config(format!(
            "dataset alphabet {} != policy alphabet {}",
            dataset.alphabet_size(),
            map.alphabet_size()
        )));
    }
    let probes = config
        .probe_contexts
        .clone()
        .unwrap_or_else(|| dataset.contexts(&map));
    let base = policy.clone();
    let mut current = policy.clone();
    let mut trace = TrainTrace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = dataset.len();
    let batch_size = if config.batch_size == 0 {
        n
    } else {
        config.batch_size.min(n)
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;

    for _ in 0..config.epochs {
        if batch_size < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| &dataset.sequences()[i]).collect();
            let diverged = |trace: &TrainTrace| Error::Diverged {
                step,
                trace: Box::new(trace.clone()),
            };
            let out = match weighted_loss_and_gradient(
                &current,
                &batch,
                &config.rule,
                config.q_clip_hi,
            ) {
                Ok(out) => out,
                Err(Error::NonFinite(_)) => return Err(diverged(&trace)),
                Err(e) => return Err(e),
            };
            current
                .logits_mut()
                .scaled_add(config.learning_rate, &out.gradient);
            if current.logits().iter().any(|l| !l.is_finite()) {
                return Err(diverged(&trace));
            }
            let metrics = match policy_metrics(&current, &base, dataset, &probes) {
                Ok(m) => m,
                Err(Error::NonFinite(_) | Error::InvalidDistribution(_)) => {
                    return Err(diverged(&trace))
                }
                Err(e) => return Err(e),
            };
            trace.records.push(TraceRecord {
                step,
                loss: -out.objective,
                mean_q: metrics.mean_q,
                entropy: metrics.entropy,
                kl_to_base: metrics.kl_to_base,
            });
            step += 1;
        }
    }
    Ok(TrainRun {
        policy: current,
        trace,
    })
}
