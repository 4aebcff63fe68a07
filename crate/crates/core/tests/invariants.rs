use std::io::BufReader;

use infosft::distributions::{kl_divergence, CategoricalDistribution, DistributionPair};
use infosft::proximal::{delta_kl_closed, gibbs_update, oracle_u};
use infosft::tabular::{
    weighted_loss_and_gradient, ContextMap, Sequence, SequenceDataset, TabularPolicy,
    DEFAULT_Q_CLIP_HI,
};
use infosft::weighting::WeightRule;
use ndarray::Array2;
use proptest::prelude::*;

fn simplex(k: usize) -> impl Strategy<Value = CategoricalDistribution> {
    prop::collection::vec(0.01f64..1.0, k)
        .prop_map(|w| CategoricalDistribution::normalized(w).unwrap())
}

fn pair() -> impl Strategy<Value = DistributionPair> {
    (2usize..12)
        .prop_flat_map(|k| (simplex(k), simplex(k), 0..k))
        .prop_map(|(e, b, t)| DistributionPair::new(e, b, t).unwrap())
}

fn policy_and_batch() -> impl Strategy<Value = (TabularPolicy, Vec<Sequence>)> {
    (2usize..6, 0usize..3).prop_flat_map(|(k, order)| {
        let map = ContextMap::new(order, k).unwrap();
        let logits = prop::collection::vec(-3.0f64..3.0, map.num_contexts() * k);
        let seq = (0usize..3, prop::collection::vec(0..k, 1..6)).prop_map(|(p, mut toks)| {
            let prompt: Vec<usize> = toks.iter().copied().cycle().take(p).collect();
            let mut all = prompt;
            let n = all.len();
            all.append(&mut toks);
            Sequence::new(all, n)
        });
        (logits, prop::collection::vec(seq, 1..4)).prop_map(move |(l, seqs)| {
            let arr = Array2::from_shape_vec((map.num_contexts(), k), l).unwrap();
            (TabularPolicy::from_logits(map, arr).unwrap(), seqs)
        })
    })
}

proptest! {
    #[test]
    fn closed_form_matches_enumeration(pair in pair(), u in -8.0f64..8.0) {
        let out = gibbs_update(&pair, u).unwrap();
        prop_assert!((out.delta_kl_closed - out.delta_kl_enumerated).abs() < 1e-10);
        let total: f64 = out.updated.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_tilt_is_a_global_minimum(pair in pair(), u in -20.0f64..20.0) {
        let star = oracle_u(pair.p(), pair.q()).unwrap();
        prop_assert!(delta_kl_closed(pair.p(), pair.q(), star) <= delta_kl_closed(pair.p(), pair.q(), u) + 1e-12);
        let after = gibbs_update(&pair, star).unwrap().updated;
        prop_assert!((after.prob(pair.target()) - pair.p()).abs() < 1e-12);
    }

    #[test]
    fn tilt_only_moves_mass_toward_or_away_from_target(pair in pair(), u in -8.0f64..8.0) {
        let after = gibbs_update(&pair, u).unwrap().updated;
        let t = pair.target();
        for y in 0..pair.alphabet_size() {
            if y != t {
                let ratio = after.prob(y) / pair.base().prob(y);
                let expected = 1.0 / (pair.q() * u.exp() + 1.0 - pair.q());
                prop_assert!((ratio - expected).abs() < 1e-9 * expected.max(1.0));
            }
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(p in simplex(7), r in simplex(7)) {
        prop_assert!(kl_divergence(&p, &r).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gradient_rows_sum_to_zero((policy, seqs) in policy_and_batch(), p_bar in 0.1f64..0.99) {
        let batch: Vec<&Sequence> = seqs.iter().collect();
        for rule in [WeightRule::Sft, WeightRule::Dft, WeightRule::info_sft(p_bar).unwrap()] {
            let g = weighted_loss_and_gradient(&policy, &batch, &rule, DEFAULT_Q_CLIP_HI).unwrap().gradient;
            for row in g.rows() {
                prop_assert!(row.sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn policy_text_round_trip_is_exact((policy, _) in policy_and_batch()) {
        let mut buf = Vec::new();
        policy.write_text(&mut buf).unwrap();
        let back = TabularPolicy::read_text(BufReader::new(&buf[..])).unwrap();
        prop_assert_eq!(back, policy);
    }

    #[test]
    fn dataset_text_round_trip((policy, seqs) in policy_and_batch()) {
        let data = SequenceDataset::new(policy.alphabet_size(), seqs).unwrap();
        let mut buf = Vec::new();
        data.write_text(&mut buf).unwrap();
        let back = SequenceDataset::read_text(BufReader::new(&buf[..])).unwrap();
        prop_assert_eq!(back, data);
    }
}
