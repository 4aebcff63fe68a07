//! The likelihood-weighted supervised objective on a tabular policy.
//!
//! For a batch of `B` sequences the objective is
//!
//! ```text
//! J = (1/B) sum_seq (1/|y*|) sum_t w(q_t) log pi(y*_t | c_t)
//! ```
//!
//! where `q_t = pi(y*_t | c_t)` and the weight `w` is held constant under
//! differentiation. For a softmax row, `grad log pi(y | c) = onehot(y) - pi(. | c)`.

use ndarray::Array2;

use super::{Sequence, TabularPolicy};
use crate::distributions::softmax;
use crate::error::{Error, Result};
use crate::numerics::logit;
use crate::weighting::WeightRule;

/// Default upper clip on `q` before a weight is evaluated.
pub const DEFAULT_Q_CLIP_HI: f64 = 1.0 - 1e-6;

/// Softmax of every row of the logit table.
pub fn prob_table(policy: &TabularPolicy) -> Result<Array2<f64>> {
    let logits = policy.logits();
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("policy logits".into()));
    }
    let mut probs = Array2::zeros(logits.dim());
    for (r, row) in logits.rows().into_iter().enumerate() {
        let p = softmax(row.as_slice().expect("standard layout"));
        probs.row_mut(r).assign(&ndarray::Array1::from(p));
    }
    Ok(probs)
}

/// One scored response position of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTerm {
    pub sequence: usize,
    pub context: usize,
    pub token: usize,
    /// `pi(token | context)` at the evaluation point.
    pub q: f64,
    /// `w(min(q, q_clip_hi))`.
    pub weight: f64,
    /// `1 / (B |y*|)` for the sequence this position belongs to.
    pub scale: f64,
    /// This position's contribution to the gradient row of `context`:
    /// `scale * weight * (onehot(token) - pi(. | context))`.
    pub row_gradient: Vec<f64>,
}

fn check_batch(batch: &[&Sequence]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    for (i, seq) in batch.iter().enumerate() {
        if seq.response().is_empty() {
            return Err(Error::EmptyResponse(i));
        }
    }
    Ok(())
}

/// Per-position weights and gradient contributions.
pub fn token_terms(
    policy: &TabularPolicy,
    batch: &[&Sequence],
    rule: &WeightRule,
    q_clip_hi: f64,
) -> Result<Vec<TokenTerm>> {
    check_batch(batch)?;
    let probs = prob_table(policy)?;
    let map = policy.context_map();
    let b = batch.len() as f64;
    let mut terms = Vec::new();
    for (s, seq) in batch.iter().enumerate() {
        let scale = 1.0 / (b * seq.response().len() as f64);
        for t in seq.prompt_len..seq.tokens.len() {
            let context = map.context_id(&seq.tokens[..t]);
            let token = seq.tokens[t];
            let row = probs.row(context);
            let q = row[token];
            if q <= 0.0 {
                return Err(Error::NonFinite(format!(
                    "token probability underflowed to 0 (sequence {s}, position {t})"
                )));
            }
            let weight = rule.token_weight(q.min(q_clip_hi))?;
            let row_gradient = row
                .iter()
                .enumerate()
                .map(|(j, &pj)| scale * weight * (f64::from(u8::from(j == token)) - pj))
                .collect();
            terms.push(TokenTerm {
                sequence: s,
                context,
                token,
                q,
                weight,
                scale,
                row_gradient,
            });
        }
    }
    Ok(terms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedObjective {
    /// `J`; the trace reports `-J` as the loss.
    pub objective: f64,
    /// `grad J`, the ascent direction.
    pub gradient: Array2<f64>,
    pub mean_q: f64,
}

pub fn weighted_loss_and_gradient(
    policy: &TabularPolicy,
    batch: &[&Sequence],
    rule: &WeightRule,
    q_clip_hi: f64,
) -> Result<WeightedObjective> {
    let terms = token_terms(policy, batch, rule, q_clip_hi)?;
    let mut gradient = Array2::zeros(policy.logits().dim());
    let mut objective = 0.0;
    let mut q_sum = 0.0;
    for term in &terms {
        objective += term.scale * term.weight * term.q.ln();
        q_sum += term.q;
        let mut row = gradient.row_mut(term.context);
        for (g, v) in row.iter_mut().zip(&term.row_gradient) {
            *g += v;
        }
    }
    if !objective.is_finite() {
        return Err(Error::NonFinite(format!("objective = {objective}")));
    }
    Ok(WeightedObjective {
        objective,
        gradient,
        mean_q: q_sum / terms.len() as f64,
    })
}

/// `J` with the weights fixed to `weights` (one per scored position, in the
/// order of [`token_terms`]). Used to check the analytic gradient by finite
/// differences.
pub fn frozen_objective(
    policy: &TabularPolicy,
    batch: &[&Sequence],
    weights: &[f64],
) -> Result<f64> {
    check_batch(batch)?;
    let probs = prob_table(policy)?;
    let map = policy.context_map();
    let b = batch.len() as f64;
    let mut k = 0;
    let mut objective = 0.0;
    for seq in batch {
        let scale = 1.0 / (b * seq.response().len() as f64);
        for t in seq.prompt_len..seq.tokens.len() {
            let q = probs[[map.context_id(&seq.tokens[..t]), seq.tokens[t]]];
            objective += scale * weights[k] * q.ln();
            k += 1;
        }
    }
    if k != weights.len() {
        return Err(Error::Precondition(format!(
            "{} weights for {k} scored positions",
            weights.len()
        )));
    }
    Ok(objective)
}

/// Both sides of the gradient-level decomposition of unclipped InfoSFT into
/// a scaled DFT term plus a binary-entropy term:
///
/// ```text
/// grad J_info = logit(p̄) * grad J_DFT + grad (1/B) sum (1/|y*|) sum_t H_b(q_t)
/// ```
///
/// The left side goes through [`weighted_loss_and_gradient`]; the entropy
/// term on the right differentiates `H_b(q)` through `dq/dz = q (onehot - pi)`.
/// Every `q_t` must be below `p̄`.
pub fn entropy_decomposition_check(
    policy: &TabularPolicy,
    batch: &[&Sequence],
    p_bar: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_batch(batch)?;
    let probs = prob_table(policy)?;
    let map = policy.context_map();
    for seq in batch {
        for t in seq.prompt_len..seq.tokens.len() {
            let q = probs[[map.context_id(&seq.tokens[..t]), seq.tokens[t]]];
            if q >= p_bar {
                return Err(Error::Precondition(format!(
                    "token probability {q} >= p_bar = {p_bar}; decomposition needs the unclipped region"
                )));
            }
        }
    }
    let calibration = logit(p_bar)?;
    let lhs =
        weighted_loss_and_gradient(policy, batch, &WeightRule::calibrated(calibration)?, 1.0)?
            .gradient;
    let dft = weighted_loss_and_gradient(policy, batch, &WeightRule::Dft, 1.0)?.gradient;

    let mut entropy_grad = Array2::<f64>::zeros(policy.logits().dim());
    let b = batch.len() as f64;
    for seq in batch {
        let scale = 1.0 / (b * seq.response().len() as f64);
        for t in seq.prompt_len..seq.tokens.len() {
            let context = map.context_id(&seq.tokens[..t]);
            let token = seq.tokens[t];
            let q = probs[[context, token]];
            // d H_b / dq = log((1 - q) / q)
            let dh_dq = (-q).ln_1p() - q.ln();
            for j in 0..policy.alphabet_size() {
                let dq_dz = if j == token {
                    q * (1.0 - q)
                } else {
                    -q * probs[[context, j]]
                };
                entropy_grad[[context, j]] += scale * dh_dq * dq_dz;
            }
        }
    }
    let rhs = dft * calibration + entropy_grad;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::ContextMap;
    use approx::assert_abs_diff_eq;

    fn single_token_policy(logits: &[f64]) -> TabularPolicy {
        let ctx = ContextMap::new(0, logits.len()).unwrap();
        TabularPolicy::from_logits(
            ctx,
            Array2::from_shape_vec((1, logits.len()), logits.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn dft_single_token_hand_value() {
        let policy = single_token_policy(&[0.0, 0.0]);
        let seq = Sequence::new(vec![0], 0);
        let out = weighted_loss_and_gradient(&policy, &[&seq], &WeightRule::Dft, DEFAULT_Q_CLIP_HI)
            .unwrap();
        assert_abs_diff_eq!(out.gradient[[0, 0]], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(out.gradient[[0, 1]], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(out.objective, 0.5 * 0.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn sft_is_plain_nll_gradient() {
        let policy = single_token_policy(&[0.3, -1.0, 2.0]);
        let a = Sequence::new(vec![2, 0, 1], 1);
        let b = Sequence::new(vec![1, 1], 1);
        let out =
            weighted_loss_and_gradient(&policy, &[&a, &b], &WeightRule::Sft, DEFAULT_Q_CLIP_HI)
                .unwrap();
        let pi = policy.probs(0);
        // (1/2) * [ (1/2)(e0 - pi + e1 - pi) + (e1 - pi) ]
        let expected = [0.25 - pi[0], 0.25 + 0.5 - pi[1], -pi[2]];
        for j in 0..3 {
            assert_abs_diff_eq!(out.gradient[[0, j]], expected[j], epsilon = 1e-15);
        }
    }

    #[test]
    fn clipped_token_contributes_nothing() {
        // q = 0.95 > 0.93
        let q = 0.95f64;
        let policy = single_token_policy(&[(q / (1.0 - q)).ln(), 0.0]);
        let seq = Sequence::new(vec![0], 0);
        let out = weighted_loss_and_gradient(
            &policy,
            &[&seq],
            &WeightRule::InfoSft { p_bar: 0.93 },
            DEFAULT_Q_CLIP_HI,
        )
        .unwrap();
        assert!(out.gradient.iter().all(|&g| g == 0.0));
        assert_abs_diff_eq!(out.mean_q, q, epsilon = 1e-12);
    }

    #[test]
    fn near_certain_token_is_clipped_before_logit() {
        let policy = single_token_policy(&[40.0, 0.0]);
        let seq = Sequence::new(vec![0], 0);
        let rule = WeightRule::CalibratedC { c: 20.0 };
        // q rounds to 1 in f64; without the clip logit(q) would be a domain error
        assert!(weighted_loss_and_gradient(&policy, &[&seq], &rule, 1.0).is_err());
        assert!(weighted_loss_and_gradient(&policy, &[&seq], &rule, DEFAULT_Q_CLIP_HI).is_ok());
    }

    #[test]
    fn errors() {
        let policy = single_token_policy(&[0.0, 0.0]);
        let empty = Sequence::new(vec![0], 1);
        assert!(matches!(
            weighted_loss_and_gradient(&policy, &[&empty], &WeightRule::Sft, DEFAULT_Q_CLIP_HI),
            Err(Error::EmptyResponse(0))
        ));
        assert!(
            weighted_loss_and_gradient(&policy, &[], &WeightRule::Sft, DEFAULT_Q_CLIP_HI).is_err()
        );
        let mut nan = policy.clone();
        nan.logits_mut()[[0, 0]] = f64::NAN;
        let seq = Sequence::new(vec![0], 0);
        assert!(matches!(
            weighted_loss_and_gradient(&nan, &[&seq], &WeightRule::Sft, DEFAULT_Q_CLIP_HI),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn decomposition_at_half() {
        let policy = single_token_policy(&[0.0, 0.0]);
        let seq = Sequence::new(vec![0], 0);
        let (lhs, rhs) = entropy_decomposition_check(&policy, &[&seq], 0.93).unwrap();
        // coefficient on grad q is logit(0.93) on both sides; entropy term vanishes at q = 0.5
        let grad_q = [0.25, -0.25];
        let coef = logit(0.93).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(lhs[[0, j]], coef * grad_q[j], epsilon = 1e-15);
            assert_abs_diff_eq!(rhs[[0, j]], coef * grad_q[j], epsilon = 1e-15);
        }
        assert_abs_diff_eq!(coef, 2.5867, epsilon = 1e-4);
    }

    #[test]
    fn decomposition_rejects_clipped_region() {
        let policy = single_token_policy(&[5.0, 0.0]);
        let seq = Sequence::new(vec![0], 0);
        assert!(matches!(
            entropy_decomposition_check(&policy, &[&seq], 0.93),
            Err(Error::Precondition(_))
        ));
    }
}
