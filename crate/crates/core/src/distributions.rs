//! Finite categorical distributions, exact KL and entropy, seeded sampling,
//! and the synthetic `(expert, base, target)` populations that the proximal
//! analysis averages over.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::numerics::xlogx_neg;

/// Tolerance on `|sum - 1|` accepted by [`CategoricalDistribution::new`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability vector over tokens `0..K` with `K >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDistribution {
    probs: Vec<f64>,
}

impl CategoricalDistribution {
    /// Accepts `probs` as given if they already sum to one within
    /// [`NORMALIZATION_TOL`]; rejects otherwise.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum = validate_entries(&probs)?;
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, expected 1 within {NORMALIZATION_TOL:e}"
            )));
        }
        Ok(Self { probs })
    }

    /// Divides nonnegative weights by their sum.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum = validate_entries(&weights)?;
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "cannot normalize weights with sum {sum}"
            )));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self { probs: weights })
    }

    /// Softmax of a logit vector.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("logit vector".into()));
        }
        Self::normalized(softmax(logits))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::normalized(vec![1.0; k])
    }

    pub fn one_hot(k: usize, index: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::InvalidDistribution(format!(
                "one-hot index {index} out of range for K = {k}"
            )));
        }
        let mut probs = vec![0.0; k];
        probs[index] = 1.0;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

fn validate_entries(probs: &[f64]) -> Result<f64> {
    if probs.len() < 2 {
        return Err(Error::InvalidDistribution(format!(
            "alphabet size {} < 2",
            probs.len()
        )));
    }
    let mut sum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidDistribution(format!("entry {i} = {p}")));
        }
        sum += p;
    }
    Ok(sum)
}

/// Numerically stable softmax; does not validate.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// `KL(p || r) = sum_i p_i log(p_i / r_i)` in nats.
///
/// Terms with `p_i = 0` contribute nothing. A term with `p_i > 0` and
/// `r_i = 0` is a [`Error::SupportMismatch`], never `+inf`.
pub fn kl_divergence(p: &CategoricalDistribution, r: &CategoricalDistribution) -> Result<f64> {
    if p.len() != r.len() {
        return Err(Error::InvalidDistribution(format!(
            "alphabet sizes differ: {} vs {}",
            p.len(),
            r.len()
        )));
    }
    let mut kl = 0.0;
    for (index, (&pi, &ri)) in p.probs.iter().zip(&r.probs).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if ri == 0.0 {
            return Err(Error::SupportMismatch { index, p: pi });
        }
        kl += pi * (pi / ri).ln();
    }
    Ok(kl)
}

/// Shannon entropy in nats.
pub fn entropy(p: &CategoricalDistribution) -> f64 {
    p.probs.iter().copied().map(xlogx_neg).sum()
}

/// Draws one token index by inverting the CDF.
pub fn sample<R: Rng + ?Sized>(p: &CategoricalDistribution, rng: &mut R) -> usize {
    sample_slice(&p.probs, rng)
}

pub(crate) fn sample_slice<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding left the cumulative sum a hair below 1.
    last_positive
}

/// Symmetric Dirichlet draw. Gamma variates are generated in log space
/// (`log G = log Gamma(a + 1) + log(U) / a`) so very small concentrations do
/// not underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(
    concentration: f64,
    k: usize,
    rng: &mut R,
) -> Result<CategoricalDistribution> {
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(Error::Domain {
            op: "sample_dirichlet",
            value: concentration,
            domain: "(0, inf)",
        });
    }
    let gamma = Gamma::new(concentration + 1.0, 1.0).expect("shape > 1");
    let log_g: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            gamma.sample(rng).ln() + u.ln() / concentration
        })
        .collect();
    CategoricalDistribution::normalized(softmax(&log_g))
}

/// An expert distribution `p*`, a base distribution `pi_0` over the same
/// alphabet, and the observed token `y*`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionPair {
    expert: CategoricalDistribution,
    base: CategoricalDistribution,
    target: usize,
}

impl DistributionPair {
    pub fn new(
        expert: CategoricalDistribution,
        base: CategoricalDistribution,
        target: usize,
    ) -> Result<Self> {
        if expert.len() != base.len() {
            return Err(Error::InvalidDistribution(format!(
                "expert has K = {} but base has K = {}",
                expert.len(),
                base.len()
            )));
        }
        if target >= expert.len() {
            return Err(Error::InvalidDistribution(format!(
                "target {target} out of range for K = {}",
                expert.len()
            )));
        }
        if base.prob(target) <= 0.0 {
            return Err(Error::InvalidDistribution(
                "base assigns zero probability to the target".into(),
            ));
        }
        Ok(Self {
            expert,
            base,
            target,
        })
    }

    pub fn expert(&self) -> &CategoricalDistribution {
        &self.expert
    }

    pub fn base(&self) -> &CategoricalDistribution {
        &self.base
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// Expert probability of the observed token.
    pub fn p(&self) -> f64 {
        self.expert.prob(self.target)
    }

    /// Base probability of the observed token.
    pub fn q(&self) -> f64 {
        self.base.prob(self.target)
    }

    pub fn alphabet_size(&self) -> usize {
        self.expert.len()
    }
}

/// Generator settings for [`random_population`].
///
/// Experts are `(1 - smoothing) * Dir(expert_concentration) + smoothing * uniform`,
/// which keeps every expert entry strictly inside `(0, 1)`. Bases are
/// `(1 - mixing) * Dir(base_concentration) + mixing * expert`. The target is
/// drawn from the expert; the base is redrawn until `min_q <= q <= max_q`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub alphabet_size: usize,
    pub count: usize,
    pub expert_concentration: f64,
    pub base_concentration: f64,
    pub expert_smoothing: f64,
    pub mixing: f64,
    /// Upper bound `d` on `q`.
    pub max_q: f64,
    /// Lower bound on `q`, exclusive of zero. Rules with `u = 1/q` need
    /// `q >= 1/700` to stay inside the overflow guard.
    pub min_q: f64,
    /// Base redraws allowed per pair before giving up.
    pub max_attempts: usize,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            alphabet_size: 20,
            count: 200,
            expert_concentration: 1.0,
            base_concentration: 1.0,
            expert_smoothing: 1e-3,
            mixing: 0.0,
            max_q: 1.0,
            min_q: 0.0,
            max_attempts: 100_000,
        }
    }
}

impl PopulationSpec {
    /// Expert concentration whose Dirichlet gives `E[sum_i D_i^2] = mean`,
    /// i.e. an expected expert probability of the drawn target equal to
    /// `mean` before smoothing. Requires `1/K < mean < 1`.
    pub fn concentration_for_mean_p(alphabet_size: usize, mean: f64) -> Result<f64> {
        let k = alphabet_size as f64;
        if !(mean > 1.0 / k && mean < 1.0) {
            return Err(Error::Domain {
                op: "concentration_for_mean_p",
                value: mean,
                domain: "(1/K, 1)",
            });
        }
        Ok((1.0 - mean) / (mean * k - 1.0))
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("population spec: {msg}")));
        if self.alphabet_size < 2 {
            return bad(format!("alphabet_size = {} < 2", self.alphabet_size));
        }
        if !(self.expert_smoothing > 0.0 && self.expert_smoothing < 1.0) {
            return bad(format!(
                "expert_smoothing = {} must lie in (0, 1)",
                self.expert_smoothing
            ));
        }
        if !(0.0..1.0).contains(&self.mixing) {
            return bad(format!("mixing = {} must lie in [0, 1)", self.mixing));
        }
        if !(self.max_q > 0.0 && self.max_q <= 1.0) {
            return bad(format!("max_q = {} must lie in (0, 1]", self.max_q));
        }
        if !(self.min_q >= 0.0 && self.min_q <= self.max_q) {
            return bad(format!(
                "min_q = {} must lie in [0, max_q = {}]",
                self.min_q, self.max_q
            ));
        }
        if self.max_attempts == 0 {
            return bad("max_attempts = 0".into());
        }
        Ok(())
    }
}

/// Draws `spec.count` pairs.
pub fn random_population<R: Rng + ?Sized>(
    spec: &PopulationSpec,
    rng: &mut R,
) -> Result<Vec<DistributionPair>> {
    spec.validate()?;
    let k = spec.alphabet_size;
    let eps = spec.expert_smoothing;
    let mut pairs = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let raw = sample_dirichlet(spec.expert_concentration, k, rng)?;
        let expert = CategoricalDistribution::normalized(
            raw.probs()
                .iter()
                .map(|&d| (1.0 - eps) * d + eps / k as f64)
                .collect(),
        )?;
        let target = sample(&expert, rng);

        let mut accepted = None;
        for _ in 0..spec.max_attempts {
            let raw_base = sample_dirichlet(spec.base_concentration, k, rng)?;
            let q = (1.0 - spec.mixing) * raw_base.prob(target) + spec.mixing * expert.prob(target);
            if q > 0.0 && q >= spec.min_q && q <= spec.max_q {
                accepted = Some(raw_base);
                break;
            }
        }
        let raw_base = accepted.ok_or_else(|| Error::ResampleBudget {
            attempts: spec.max_attempts,
            constraint: format!("{} <= q <= {}", spec.min_q, spec.max_q),
        })?;
        let base = if spec.mixing == 0.0 {
            raw_base
        } else {
            CategoricalDistribution::normalized(
                raw_base
                    .probs()
                    .iter()
                    .zip(expert.probs())
                    .map(|(&b, &e)| (1.0 - spec.mixing) * b + spec.mixing * e)
                    .collect(),
            )?
        };
        pairs.push(DistributionPair::new(expert, base, target)?);
    }
    Ok(pairs)
}

/// Mean of `p` over a population.
pub fn mean_p(population: &[DistributionPair]) -> f64 {
    population.iter().map(DistributionPair::p).sum::<f64>() / population.len() as f64
}

/// Largest `q` in a population.
pub fn max_q(population: &[DistributionPair]) -> f64 {
    population
        .iter()
        .map(DistributionPair::q)
        .fold(f64::NEG_INFINITY, f64::max)
}

const POPULATION_HEADER: &str = "# infosft-population v1";

/// Writes one pair per line: `K expert[0..K] base[0..K] target`.
///
/// Floats use the shortest representation that parses back to the same bits.
pub fn write_population<W: Write>(mut out: W, population: &[DistributionPair]) -> Result<()> {
    writeln!(out, "{POPULATION_HEADER}")?;
    for pair in population {
        write!(out, "{}", pair.alphabet_size())?;
        for v in pair.expert.probs().iter().chain(pair.base.probs()) {
            write!(out, " {v}")?;
        }
        writeln!(out, " {}", pair.target)?;
    }
    Ok(())
}

pub fn read_population<R: BufRead>(input: R) -> Result<Vec<DistributionPair>> {
    let mut pairs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: lineno, msg };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let k: usize = fields[0]
            .parse()
            .map_err(|e| parse_err(format!("alphabet size: {e}")))?;
        if fields.len() != 2 * k + 2 {
            return Err(parse_err(format!(
                "expected {} fields for K = {k}, found {}",
                2 * k + 2,
                fields.len()
            )));
        }
        let floats = fields[1..=2 * k]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("{f}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let target: usize = fields[2 * k + 1]
            .parse()
            .map_err(|e| parse_err(format!("target: {e}")))?;
        let expert = CategoricalDistribution::new(floats[..k].to_vec())
            .map_err(|e| parse_err(format!("expert: {e}")))?;
        let base = CategoricalDistribution::new(floats[k..].to_vec())
            .map_err(|e| parse_err(format!("base: {e}")))?;
        pairs.push(
            DistributionPair::new(expert, base, target).map_err(|e| parse_err(e.to_string()))?,
        );
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(p: &[f64]) -> CategoricalDistribution {
        CategoricalDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn kl_examples() {
        let p = dist(&[0.2, 0.3, 0.5]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);

        let oracle = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let kl = kl_divergence(&dist(&[0.5, 0.5]), &dist(&[0.25, 0.75])).unwrap();
        assert_abs_diff_eq!(kl, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(kl, 0.1438, epsilon = 1e-4);

        let kl = kl_divergence(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap();
        assert_abs_diff_eq!(kl, 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn kl_support_mismatch_is_error() {
        let err = kl_divergence(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::SupportMismatch { index: 1, .. }));
        // zero mass in p where r is zero is fine
        assert!(kl_divergence(&dist(&[1.0, 0.0]), &dist(&[1.0, 0.0])).is_ok());
        assert!(kl_divergence(&dist(&[0.5, 0.5]), &dist(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(
            entropy(&CategoricalDistribution::uniform(4).unwrap()),
            4f64.ln(),
            epsilon = 1e-15
        );
        assert_eq!(
            entropy(&CategoricalDistribution::one_hot(5, 3).unwrap()),
            0.0
        );
        let h = entropy(&dist(&[0.93, 0.07]));
        assert_abs_diff_eq!(
            h,
            crate::numerics::binary_entropy(0.93).unwrap(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(h, 0.253_638_946_921_691_4, epsilon = 1e-15);
    }

    #[test]
    fn constructor_rules() {
        assert!(CategoricalDistribution::new(vec![1.0]).is_err());
        assert!(CategoricalDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(CategoricalDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(CategoricalDistribution::new(vec![0.5, f64::NAN]).is_err());
        let d = CategoricalDistribution::normalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.75]);
        assert!(CategoricalDistribution::normalized(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn sample_one_hot_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = CategoricalDistribution::one_hot(4, 2).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample(&d, &mut rng), 2);
        }
        let u = CategoricalDistribution::uniform(5).unwrap();
        let a: Vec<usize> = {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            (0..200).map(|_| sample(&u, &mut r)).collect()
        };
        let b: Vec<usize> = {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            (0..200).map(|_| sample(&u, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn sample_frequencies_within_five_sigma() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = CategoricalDistribution::uniform(2).unwrap();
        let zeros = (0..n).filter(|_| sample(&u, &mut rng) == 0).count();
        let freq = zeros as f64 / n as f64;
        assert!((0.49..=0.51).contains(&freq), "{freq}");

        let d = dist(&[0.05, 0.15, 0.3, 0.5]);
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample(&d, &mut rng)] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let p = d.prob(i);
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let f = c as f64 / n as f64;
            assert!((f - p).abs() <= 5.0 * sigma, "token {i}: {f} vs {p}");
        }
    }

    #[test]
    fn population_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = PopulationSpec {
            alphabet_size: 50,
            count: 300,
            max_q: 0.01,
            ..PopulationSpec::default()
        };
        let pop = random_population(&spec, &mut rng).unwrap();
        assert_eq!(pop.len(), 300);
        for pair in &pop {
            assert!(pair.q() > 0.0 && pair.q() <= 0.01);
            assert!(pair.p() > 0.0 && pair.p() < 1.0);
        }

        let vacuous = PopulationSpec {
            count: 50,
            ..PopulationSpec::default()
        };
        assert_eq!(random_population(&vacuous, &mut rng).unwrap().len(), 50);
    }

    #[test]
    fn population_budget_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = PopulationSpec {
            alphabet_size: 2,
            count: 5,
            base_concentration: 50.0,
            max_q: 1e-9,
            max_attempts: 20,
            ..PopulationSpec::default()
        };
        assert!(matches!(
            random_population(&spec, &mut rng),
            Err(Error::ResampleBudget { attempts: 20, .. })
        ));
    }

    #[test]
    fn tiny_concentration_does_not_underflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d = sample_dirichlet(1e-3, 100, &mut rng).unwrap();
            let s: f64 = d.probs().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn population_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = PopulationSpec {
            alphabet_size: 7,
            count: 25,
            mixing: 0.3,
            ..PopulationSpec::default()
        };
        let pop = random_population(&spec, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_population(&mut buf, &pop).unwrap();
        let back = read_population(buf.as_slice()).unwrap();
        assert_eq!(back, pop);
    }

    #[test]
    fn population_text_rejects_bad_records() {
        let short = "# infosft-population v1\n3 0.2 0.3 0.5 0.1 0.1 0\n";
        assert!(matches!(
            read_population(short.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_target = "2 0.5 0.5 0.5 0.5 2\n";
        assert!(matches!(
            read_population(bad_target.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
