//! One-step proximal analysis of a weighting rule.
//!
//! Given a base distribution and an observed token `y*` with base probability
//! `q`, the KL-regularized update that rewards `y*` by `u` is the Gibbs tilt
//!
//! ```text
//! pi(y) = pi_0(y) * exp(u * 1{y = y*}) / Z,     Z = q e^u + 1 - q,
//! ```
//!
//! and the change in KL to the expert is `log Z - p u` where `p = p*(y*)`.
//! This module evaluates that closed form next to a full enumeration of both
//! KL terms, averages it over populations, and checks the comparisons between
//! rules that follow from it.

use std::f64::consts::E;

use crate::distributions::{kl_divergence, mean_p, CategoricalDistribution, DistributionPair};
use crate::error::{Error, Result};
use crate::numerics::{binary_entropy, log_tilt_partition, logit, sigmoid};
use crate::weighting::WeightRule;

/// Largest `|u|` accepted by [`gibbs_update`].
pub const MAX_ABS_U: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ProximalOutcome {
    pub updated: CategoricalDistribution,
    pub partition: f64,
    pub u: f64,
    /// `log Z - p u`.
    pub delta_kl_closed: f64,
    /// `KL(p* || pi) - KL(p* || pi_0)` by enumeration over the alphabet.
    pub delta_kl_enumerated: f64,
}

fn check_u(u: f64) -> Result<()> {
    if !u.is_finite() {
        return Err(Error::NonFinite(format!("tilt coefficient u = {u}")));
    }
    if u.abs() > MAX_ABS_U {
        return Err(Error::Overflow(u));
    }
    Ok(())
}

/// Closed-form `Delta KL(u) = log(q e^u + 1 - q) - p u`.
pub fn delta_kl_closed(p: f64, q: f64, u: f64) -> f64 {
    log_tilt_partition(q, u) - p * u
}

pub fn gibbs_update(pair: &DistributionPair, u: f64) -> Result<ProximalOutcome> {
    check_u(u)?;
    let q = pair.q();
    let target = pair.target();
    let tilt = u.exp();
    let partition = q * tilt + 1.0 - q;
    let probs: Vec<f64> = pair
        .base()
        .probs()
        .iter()
        .enumerate()
        .map(|(y, &b)| {
            if y == target {
                b * tilt / partition
            } else {
                b / partition
            }
        })
        .collect();
    let updated = CategoricalDistribution::normalized(probs)?;
    let delta_kl_enumerated =
        kl_divergence(pair.expert(), &updated)? - kl_divergence(pair.expert(), pair.base())?;
    Ok(ProximalOutcome {
        updated,
        partition,
        u,
        delta_kl_closed: delta_kl_closed(pair.p(), q, u),
        delta_kl_enumerated,
    })
}

/// `u* = logit(p) - logit(q)`: the tilt that lands `pi(y*)` exactly on `p`.
pub fn oracle_u(p: f64, q: f64) -> Result<f64> {
    Ok(logit(p)? - logit(q)?)
}

/// Closed-form `Delta KL` at every `u` in `u_grid`.
pub fn delta_kl_curve(pair: &DistributionPair, u_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let (p, q) = (pair.p(), pair.q());
    u_grid
        .iter()
        .map(|&u| {
            check_u(u)?;
            Ok((u, delta_kl_closed(p, q, u)))
        })
        .collect()
}

/// Both `Delta KL` values for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDelta {
    pub u: f64,
    pub closed: f64,
    pub enumerated: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedKlReport {
    pub rule: WeightRule,
    /// Mean of the enumerated per-pair values.
    pub mean_delta_kl: f64,
    /// Mean of the closed-form per-pair values.
    pub mean_delta_kl_closed: f64,
    pub per_pair: Vec<PairDelta>,
    pub p_bar: f64,
    pub max_q: f64,
    pub count: usize,
}

/// Per-pair tilt for `rule`. `Oracle` ignores its stored `p` and uses the
/// pair's own expert probability.
pub fn pair_u(rule: &WeightRule, pair: &DistributionPair) -> Result<f64> {
    match rule {
        WeightRule::Oracle { .. } => oracle_u(pair.p(), pair.q()),
        rule => rule.u_coefficient(pair.q()),
    }
}

/// Averages the one-step `Delta KL` of `rule` over `population`, summing in
/// index order.
pub fn expected_delta_kl(
    population: &[DistributionPair],
    rule: &WeightRule,
) -> Result<ExpectedKlReport> {
    if population.is_empty() {
        return Err(Error::Precondition("empty population".into()));
    }
    let per_pair = population
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let u = pair_u(rule, pair).map_err(|e| e.at_pair(i))?;
            let out = gibbs_update(pair, u).map_err(|e| e.at_pair(i))?;
            Ok(PairDelta {
                u,
                closed: out.delta_kl_closed,
                enumerated: out.delta_kl_enumerated,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_pair.len() as f64;
    Ok(ExpectedKlReport {
        rule: *rule,
        mean_delta_kl: per_pair.iter().map(|d| d.enumerated).sum::<f64>() / n,
        mean_delta_kl_closed: per_pair.iter().map(|d| d.closed).sum::<f64>() / n,
        per_pair,
        p_bar: mean_p(population),
        max_q: crate::distributions::max_q(population),
        count: population.len(),
    })
}

/// Derivative in `C` of the expected `Delta KL` under `u_C(q) = C - logit(q)`:
/// `mean_q e^C / (e^C + (1 - q)^2) - p̄`.
pub fn c_derivative(population: &[DistributionPair], c: f64) -> f64 {
    let n = population.len() as f64;
    let mean_sigma = population
        .iter()
        .map(|pair| sigmoid(c - 2.0 * (-pair.q()).ln_1p()))
        .sum::<f64>()
        / n;
    mean_sigma - mean_p(population)
}

/// Closed-form expected `Delta KL` under `u_C`, without building updated
/// distributions.
pub fn expected_delta_kl_calibrated(population: &[DistributionPair], c: f64) -> Result<f64> {
    let mut total = 0.0;
    for (i, pair) in population.iter().enumerate() {
        let u = c - logit(pair.q()).map_err(|e| e.at_pair(i))?;
        check_u(u).map_err(|e| e.at_pair(i))?;
        total += delta_kl_closed(pair.p(), pair.q(), u);
    }
    Ok(total / population.len() as f64)
}

pub const C_STAR_BRACKET: (f64, f64) = (-50.0, 50.0);
pub const C_STAR_TOL: f64 = 1e-12;

/// Optimal shift `C*` of the calibrated family, by bisection on the
/// (strictly increasing) derivative over [`C_STAR_BRACKET`].
pub fn solve_c_star(population: &[DistributionPair]) -> Result<f64> {
    if population.is_empty() {
        return Err(Error::Precondition("empty population".into()));
    }
    if let Some(i) = population.iter().position(|pair| pair.q() >= 1.0) {
        return Err(Error::Precondition(format!("pair {i} has q = 1")));
    }
    let (mut lo, mut hi) = C_STAR_BRACKET;
    let g_lo = c_derivative(population, lo);
    let g_hi = c_derivative(population, hi);
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(Error::Bracket { lo, hi, g_lo, g_hi });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let g = c_derivative(population, mid);
        if g.abs() <= C_STAR_TOL || mid == lo || mid == hi {
            break;
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapIdentity {
    /// `E[Delta KL_info] - E[Delta KL*]`, both by enumeration through
    /// [`expected_delta_kl`].
    pub lhs: f64,
    /// `H_b(p̄) - E[H_b(p)]`.
    pub rhs: f64,
    pub p_bar: f64,
}

/// Evaluates both sides of the InfoSFT-vs-oracle gap identity, with the
/// unclipped rule calibrated at the population mean `p̄`.
pub fn gap_identity_check(population: &[DistributionPair]) -> Result<GapIdentity> {
    if population.is_empty() {
        return Err(Error::Precondition("empty population".into()));
    }
    let p_bar = mean_p(population);
    let info = expected_delta_kl(population, &WeightRule::unclipped_info_sft(p_bar)?)?;
    let oracle = expected_delta_kl(population, &WeightRule::Oracle { p: p_bar })?;
    let mean_hb = population
        .iter()
        .map(|pair| binary_entropy(pair.p()))
        .sum::<Result<f64>>()?
        / population.len() as f64;
    Ok(GapIdentity {
        lhs: info.mean_delta_kl - oracle.mean_delta_kl,
        rhs: binary_entropy(p_bar)? - mean_hb,
        p_bar,
    })
}

/// `(ratio, bound)` with `ratio = E[Delta KL_info] / E[Delta KL*]` and
/// `bound = 1 - c * max(log(1/p̄), 1) / log(1/d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioBound {
    pub ratio: f64,
    pub bound: f64,
    pub expected_info: f64,
    pub expected_oracle: f64,
}

impl RatioBound {
    pub fn holds(&self) -> bool {
        self.expected_info < 0.0 && self.expected_oracle < 0.0 && self.ratio >= self.bound
    }
}

pub fn ratio_bound_check(population: &[DistributionPair], d: f64, c: f64) -> Result<RatioBound> {
    let gap = gap_identity_check(population)?;
    let info = expected_delta_kl(population, &WeightRule::unclipped_info_sft(gap.p_bar)?)?;
    let oracle = expected_delta_kl(population, &WeightRule::Oracle { p: gap.p_bar })?;
    let scale = (1.0 / gap.p_bar).ln().max(1.0);
    Ok(RatioBound {
        ratio: info.mean_delta_kl / oracle.mean_delta_kl,
        bound: 1.0 - c * scale / (1.0 / d).ln(),
        expected_info: info.mean_delta_kl,
        expected_oracle: oracle.mean_delta_kl,
    })
}

/// Largest `p̄` for which the SFT comparison is claimed.
pub const SFT_DOMINANCE_MAX_P_BAR: f64 = 0.98;

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub p_bar: f64,
    pub d: f64,
    pub info_sft: f64,
    pub dft: f64,
    /// `None` when `p̄ > 0.98`, outside the range where the SFT clause applies.
    pub sft: Option<f64>,
    pub oracle: f64,
    /// `log(d e / p̄)`, an upper bound on the oracle's expected `Delta KL`.
    pub oracle_bound: f64,
}

impl DominanceReport {
    pub fn info_beats_dft(&self) -> bool {
        self.info_sft < self.dft
    }

    pub fn info_beats_sft(&self) -> Option<bool> {
        self.sft.map(|sft| self.info_sft < sft)
    }

    pub fn holds(&self) -> bool {
        self.info_beats_dft() && self.info_beats_sft().unwrap_or(true)
    }
}

/// Compares clipped InfoSFT (calibrated at the population `p̄`) against DFT
/// (`u = 1`) and SFT (`u = 1/q`) in expected `Delta KL`.
///
/// Fails with [`Error::Precondition`] if some `q > d` or if `d > p̄ / e^2`.
pub fn dominance_check(population: &[DistributionPair], d: f64) -> Result<DominanceReport> {
    if population.is_empty() {
        return Err(Error::Precondition("empty population".into()));
    }
    if let Some((i, pair)) = population.iter().enumerate().find(|(_, pair)| pair.q() > d) {
        return Err(Error::Precondition(format!(
            "q <= d violated: pair {i} has q = {} > d = {d}",
            pair.q()
        )));
    }
    let p_bar = mean_p(population);
    let regime = p_bar / (E * E);
    if d > regime {
        return Err(Error::Precondition(format!(
            "d <= p_bar / e^2 violated: d = {d} > {regime} (p_bar = {p_bar})"
        )));
    }
    let info_rule = WeightRule::info_sft(p_bar)?;
    let info = expected_delta_kl(population, &info_rule)?;
    let dft = expected_delta_kl(population, &WeightRule::Dft)?;
    let sft = if p_bar <= SFT_DOMINANCE_MAX_P_BAR {
        Some(expected_delta_kl(population, &WeightRule::Sft)?.mean_delta_kl)
    } else {
        None
    };
    let oracle = expected_delta_kl(population, &WeightRule::Oracle { p: p_bar })?;
    Ok(DominanceReport {
        p_bar,
        d,
        info_sft: info.mean_delta_kl,
        dft: dft.mean_delta_kl,
        sft,
        oracle: oracle.mean_delta_kl,
        oracle_bound: (d * E / p_bar).ln(),
    })
}

/// Above this exponent `e^{e^2/x}` is not formed directly.
const G_DIRECT_MAX_EXPONENT: f64 = 700.0;

/// `log(1 + a (e^b - 1))` for `a = x / e^2`, `b = e^2 / x`.
///
/// For large `b` this factors as `b + log a + log1p((1 - a) e^{-b} / a)`,
/// which is exact and never forms `e^b`.
fn g_log_term(x: f64) -> f64 {
    let e2 = E * E;
    let a = x / e2;
    let b = e2 / x;
    if b <= G_DIRECT_MAX_EXPONENT {
        (a * b.exp_m1()).ln_1p()
    } else {
        b + a.ln() + ((1.0 - a) * (-b).exp() / a).ln_1p()
    }
}

/// `G(x) = (1 - x) log(1 + (x/e^2)(e^{e^2/x} - 1)) + x log x + (1 - x) log(1 - x)`.
///
/// `G(p̄) >= 0` is the condition under which calibrated InfoSFT beats SFT.
pub fn g_function(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 || x >= 1.0 {
        return Err(Error::Domain {
            op: "g_function",
            value: x,
            domain: "(0, 1)",
        });
    }
    Ok((1.0 - x) * g_log_term(x) + x * x.ln() + (1.0 - x) * (-x).ln_1p())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GReport {
    pub min_value: f64,
    pub argmin: f64,
    pub points: usize,
    pub all_positive: bool,
    /// Largest `x` with `G(x) > 0` found by bisection on `[0.9, 0.999]`.
    pub positive_up_to: f64,
}

pub fn verify_g_positive(grid: &[f64]) -> Result<GReport> {
    if grid.is_empty() {
        return Err(Error::Precondition("empty grid".into()));
    }
    let mut min_value = f64::INFINITY;
    let mut argmin = f64::NAN;
    let mut all_positive = true;
    for &x in grid {
        let g = g_function(x)?;
        all_positive &= g > 0.0;
        if g < min_value {
            min_value = g;
            argmin = x;
        }
    }
    Ok(GReport {
        min_value,
        argmin,
        points: grid.len(),
        all_positive,
        positive_up_to: g_root()?,
    })
}

/// The zero crossing of `G` near 0.9886.
pub fn g_root() -> Result<f64> {
    let (mut lo, mut hi) = (0.9, 0.999);
    if !(g_function(lo)? > 0.0 && g_function(hi)? < 0.0) {
        return Err(Error::Bracket {
            lo,
            hi,
            g_lo: g_function(lo)?,
            g_hi: g_function(hi)?,
        });
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if g_function(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
