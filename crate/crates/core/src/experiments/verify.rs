use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, VerifyConfig};
use super::output::{ensure_dir, rng_for, write_csv, write_text};
use crate::distributions::{
    mean_p, random_population, sample_dirichlet, CategoricalDistribution, DistributionPair,
    PopulationSpec,
};
use crate::error::{Error, Result};
use crate::numerics::{binary_entropy, logit};
use crate::proximal::{
    c_derivative, delta_kl_closed, dominance_check, expected_delta_kl,
    expected_delta_kl_calibrated, g_root, gap_identity_check, gibbs_update, oracle_u,
    ratio_bound_check, solve_c_star, verify_g_positive,
};
use crate::weighting::WeightRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIPPED",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub measured: f64,
    pub tolerance: String,
    pub detail: String,
}

impl CheckResult {
    fn new(
        name: &'static str,
        ok: bool,
        measured: f64,
        tolerance: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name,
            status: if ok {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            measured,
            tolerance: tolerance.into(),
            detail: detail.into(),
        }
    }

    fn skipped(
        name: &'static str,
        tolerance: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name,
            status: CheckStatus::Skipped,
            measured: f64::NAN,
            tolerance: tolerance.into(),
            detail: detail.into(),
        }
    }

    fn errored(name: &'static str, err: &Error) -> Self {
        Self {
            name,
            status: CheckStatus::Fail,
            measured: f64::NAN,
            tolerance: String::new(),
            detail: format!("error: {err}"),
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<7} {:<30} measured={:<24} tolerance={:<14} {}",
            self.status.to_string(),
            self.name,
            format!("{:e}", self.measured),
            self.tolerance,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.status == CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s: String = self.checks.iter().map(|c| format!("{c}\n")).collect();
        let count = |st| self.checks.iter().filter(|c| c.status == st).count();
        s.push_str(&format!(
            "summary: {} passed, {} failed, {} skipped\n",
            count(CheckStatus::Pass),
            count(CheckStatus::Fail),
            count(CheckStatus::Skipped)
        ));
        s
    }
}

/// Runs every check, writes `verify_report.txt` and `verify.csv`, and returns
/// the report. The caller decides the exit status from [`VerifyReport::passed`].
pub fn run_verify(config: &ExperimentConfig) -> Result<VerifyReport> {
    let v = &config.verify;
    let seed = config.seed;
    let mut checks = Vec::new();
    let mut push = |name: &'static str, r: Result<Vec<CheckResult>>| match r {
        Ok(list) => checks.extend(list),
        Err(e) => checks.push(CheckResult::errored(name, &e)),
    };
    push(
        "closed_form_vs_enumeration",
        closed_form_checks(v, &mut rng_for(seed, 1)),
    );
    push(
        "oracle_grid_argmin",
        oracle_checks(v, &mut rng_for(seed, 2)),
    );
    push("c_star_bound", c_star_checks(v, &mut rng_for(seed, 3)));
    push("gap_identity", gap_checks(v, &mut rng_for(seed, 4)));
    push("ratio_bound", ratio_checks(v, &mut rng_for(seed, 5)));
    push(
        "dominance_info_vs_dft",
        dominance_checks(v, &mut rng_for(seed, 6)),
    );
    push("g_positive", g_checks(v));
    let report = VerifyReport { checks };

    ensure_dir(&config.out)?;
    config.write_resolved()?;
    write_text(&config.out.join("verify_report.txt"), &report.to_text())?;
    write_csv(
        &config.out.join("verify.csv"),
        "verify",
        &["check", "status", "measured", "tolerance", "detail"],
        report.checks.iter().map(|c| {
            vec![
                c.name.to_string(),
                c.status.to_string(),
                c.measured.to_string(),
                c.tolerance.clone(),
                c.detail.clone(),
            ]
        }),
    )?;
    Ok(report)
}

fn range<R: Rng>(r: [f64; 2], rng: &mut R) -> f64 {
    rng.random_range(r[0]..r[1])
}

/// Population `index` of a check: alphabet sizes cycle through the
/// configured list, base concentrations alternate between 0.5 and 1, and the
/// target mean expert probability is drawn from `mean_p`.
fn lemma_population(
    v: &VerifyConfig,
    index: usize,
    max_q: f64,
    min_q: f64,
    mean: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DistributionPair>> {
    let k = v.alphabet_sizes[index % v.alphabet_sizes.len()];
    let spec = PopulationSpec {
        alphabet_size: k,
        count: v.population_size,
        expert_concentration: PopulationSpec::concentration_for_mean_p(k, mean)?,
        base_concentration: if (index / v.alphabet_sizes.len()).is_multiple_of(2) {
            1.0
        } else {
            0.5
        },
        max_q,
        min_q,
        ..PopulationSpec::default()
    };
    random_population(&spec, rng)
}

fn check_population_config(v: &VerifyConfig) -> Result<()> {
    if v.alphabet_sizes.is_empty() || v.populations == 0 || v.population_size == 0 {
        return Err(Error::Config(
            "verify needs alphabet sizes, populations and pairs".into(),
        ));
    }
    Ok(())
}

/// Pair with expert `[p, rest...]`, base `[q, rest...]` and target 0.
fn pair_with<R: Rng>(p: f64, q: f64, k: usize, rng: &mut R) -> Result<DistributionPair> {
    let fill = |head: f64, rng: &mut R| -> Result<CategoricalDistribution> {
        let mut probs = vec![head];
        if k == 2 {
            probs.push(1.0 - head);
        } else {
            let rest = sample_dirichlet(1.0, k - 1, rng)?;
            probs.extend(rest.probs().iter().map(|r| (1.0 - head) * r));
        }
        CategoricalDistribution::normalized(probs)
    };
    let expert = fill(p, rng)?;
    let base = fill(q, rng)?;
    DistributionPair::new(expert, base, 0)
}

fn closed_form_checks(v: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let mut max_diff: f64 = 0.0;
    let mut max_norm: f64 = 0.0;
    let mut max_partition: f64 = 0.0;
    for _ in 0..v.closed_form_samples {
        let k = rng.random_range(v.closed_form_alphabet[0]..=v.closed_form_alphabet[1]);
        let spec = PopulationSpec {
            alphabet_size: k,
            count: 1,
            ..PopulationSpec::default()
        };
        let pair = random_population(&spec, rng)?.remove(0);
        let u = range(v.closed_form_u, rng);
        let out = gibbs_update(&pair, u)?;
        max_diff = max_diff.max((out.delta_kl_closed - out.delta_kl_enumerated).abs());
        let sum: f64 = out.updated.probs().iter().sum();
        max_norm = max_norm.max((sum - 1.0).abs());
        let q = pair.q();
        max_partition =
            max_partition.max((out.partition - (q * u.exp() + 1.0 - q)).abs() / out.partition);
    }
    let n = format!("n={}", v.closed_form_samples);
    Ok(vec![
        CheckResult::new(
            "closed_form_vs_enumeration",
            max_diff <= 1e-10,
            max_diff,
            "<= 1e-10",
            &n,
        ),
        CheckResult::new(
            "gibbs_normalization",
            max_norm <= 1e-12,
            max_norm,
            "<= 1e-12",
            &n,
        ),
        CheckResult::new(
            "partition_function",
            max_partition <= 1e-12,
            max_partition,
            "rel <= 1e-12",
            &n,
        ),
    ])
}

fn oracle_checks(v: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let step = v.oracle_grid_step;
    let points = ((v.oracle_grid[1] - v.oracle_grid[0]) / step).round() as usize + 1;
    let grid: Vec<f64> = (0..points)
        .map(|i| v.oracle_grid[0] + i as f64 * step)
        .collect();
    let mut worst_argmin: f64 = 0.0;
    let mut worst_fixed: f64 = 0.0;
    let mut min_second = f64::INFINITY;
    let mut worst_curvature: f64 = 0.0;
    for _ in 0..v.oracle_pairs {
        let p = rng.random_range(0.01..0.99);
        let q = rng.random_range(0.01..0.99);
        let k = rng.random_range(2..=10);
        let pair = pair_with(p, q, k, rng)?;
        let (p, q) = (pair.p(), pair.q());
        let u_star = oracle_u(p, q)?;
        let values: Vec<f64> = grid.iter().map(|&u| delta_kl_closed(p, q, u)).collect();
        let argmin = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| grid[i])
            .expect("nonempty grid");
        worst_argmin = worst_argmin.max((argmin - u_star).abs());
        for w in values.windows(3) {
            min_second = min_second.min(w[0] - 2.0 * w[1] + w[2]);
        }
        let out = gibbs_update(&pair, u_star)?;
        worst_fixed = worst_fixed.max((out.updated.prob(0) - p).abs());

        let h = v.convexity_step;
        let mut u = -8.0;
        while u <= 8.0 {
            let second = (delta_kl_closed(p, q, u + h) - 2.0 * delta_kl_closed(p, q, u)
                + delta_kl_closed(p, q, u - h))
                / (h * h);
            let pi = q * u.exp() / (q * u.exp() + 1.0 - q);
            let analytic = pi * (1.0 - pi);
            worst_curvature = worst_curvature.max((second - analytic).abs() / analytic);
            u += 0.5;
        }
    }
    let n = format!("pairs={}", v.oracle_pairs);
    Ok(vec![
        CheckResult::new(
            "oracle_grid_argmin",
            worst_argmin <= step * (1.0 + 1e-9),
            worst_argmin,
            format!("<= {step}"),
            format!("{n} grid=[{}, {}]", v.oracle_grid[0], v.oracle_grid[1]),
        ),
        CheckResult::new(
            "oracle_fixed_point",
            worst_fixed <= 1e-12,
            worst_fixed,
            "<= 1e-12",
            &n,
        ),
        CheckResult::new(
            "convexity_second_difference",
            min_second > 0.0,
            min_second,
            "> 0",
            &n,
        ),
        CheckResult::new(
            "convexity_curvature",
            worst_curvature <= 1e-3,
            worst_curvature,
            "rel <= 1e-3",
            format!("{n} h={}", v.convexity_step),
        ),
    ])
}

fn c_star_checks(v: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    check_population_config(v)?;
    let d = v.c_star_d;
    let eps = v.c_star_perturbation;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_margin = f64::INFINITY;
    let mut monotone = true;
    let mut worst_residual: f64 = 0.0;
    for i in 0..v.populations {
        let mean = range(v.mean_p, rng);
        let pop = lemma_population(v, i, d, 0.0, mean, rng)?;
        let c_star = solve_c_star(&pop)?;
        worst_residual = worst_residual.max(c_derivative(&pop, c_star).abs());
        let target = logit(mean_p(&pop))?;
        worst_ratio = worst_ratio.max((c_star - target).abs() / d);
        let at = expected_delta_kl_calibrated(&pop, c_star)?;
        let lo = expected_delta_kl_calibrated(&pop, c_star - eps)?;
        let hi = expected_delta_kl_calibrated(&pop, c_star + eps)?;
        worst_margin = worst_margin.min((lo - at).min(hi - at));
        let gs: Vec<f64> = (0..=200)
            .map(|j| c_derivative(&pop, -10.0 + 0.1 * j as f64))
            .collect();
        monotone &= gs.windows(2).all(|w| w[1] > w[0]);
    }
    let n = format!("populations={} d={d}", v.populations);
    Ok(vec![
        CheckResult::new(
            "c_star_bound",
            worst_ratio <= v.c_star_bound_factor,
            worst_ratio,
            format!("|C*-logit(p)|/d <= {}", v.c_star_bound_factor),
            &n,
        ),
        CheckResult::new(
            "c_star_root",
            worst_residual <= 1e-12,
            worst_residual,
            "|g(C*)| <= 1e-12",
            &n,
        ),
        CheckResult::new(
            "c_star_optimality",
            worst_margin >= 0.0,
            worst_margin,
            ">= 0",
            format!("{n} E(C*+-{eps}) - E(C*)"),
        ),
        CheckResult::new(
            "c_star_monotone_derivative",
            monotone,
            f64::from(u8::from(monotone)),
            "== 1",
            format!("{n} C in [-10, 10]"),
        ),
    ])
}

fn gap_checks(v: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    check_population_config(v)?;
    let mut worst_identity: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    for i in 0..v.populations {
        let mean = range(v.mean_p, rng);
        let pop = lemma_population(v, i, 1.0, 0.0, mean, rng)?;
        let gap = gap_identity_check(&pop)?;
        worst_identity = worst_identity.max((gap.lhs - gap.rhs).abs());
        min_gap = min_gap.min(gap.lhs.min(gap.rhs));
    }
    let mut worst_constant: f64 = 0.0;
    for i in 0..v.populations.min(20) {
        let p = rng.random_range(0.05..0.99);
        let k = v.alphabet_sizes[i % v.alphabet_sizes.len()];
        let pop = (0..v.population_size)
            .map(|_| {
                let base = sample_dirichlet(1.0, k, rng)?;
                let mut expert = vec![(1.0 - p) / (k - 1) as f64; k];
                expert[0] = p;
                DistributionPair::new(CategoricalDistribution::normalized(expert)?, base, 0)
            })
            .collect::<Result<Vec<_>>>()?;
        let gap = gap_identity_check(&pop)?;
        worst_constant = worst_constant.max(gap.lhs.abs()).max(gap.rhs.abs());
    }
    let n = format!("populations={}", v.populations);
    Ok(vec![
        CheckResult::new(
            "gap_identity",
            worst_identity <= 1e-10,
            worst_identity,
            "<= 1e-10",
            &n,
        ),
        CheckResult::new(
            "gap_nonnegative",
            min_gap >= -1e-12,
            min_gap,
            ">= -1e-12",
            &n,
        ),
        CheckResult::new(
            "gap_constant_p",
            worst_constant <= 1e-12,
            worst_constant,
            "<= 1e-12",
            "constant-p populations",
        ),
    ])
}

fn ratio_checks(v: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    check_population_config(v)?;
    let mut worst_slack = f64::INFINITY;
    let mut worst_ratio = f64::INFINITY;
    let mut used = 0;
    for i in 0..v.populations {
        let mean = range(v.mean_p, rng);
        let d = v.ratio_d_factor * mean * (-6f64).exp();
        let pop = lemma_population(v, i, d, 0.0, mean, rng)?;
        if d > mean_p(&pop) * (-6f64).exp() {
            continue;
        }
        used += 1;
        let r = ratio_bound_check(&pop, d, v.ratio_constant)?;
        if !(r.expected_info < 0.0 && r.expected_oracle < 0.0) {
            worst_slack = f64::NEG_INFINITY;
        }
        worst_slack = worst_slack.min(r.ratio - r.bound);
        worst_ratio = worst_ratio.min(r.ratio);
    }
    if used == 0 {
        return Ok(vec![CheckResult::skipped(
            "ratio_bound",
            ">= 0",
            "no population satisfied d <= p_bar e^-6",
        )]);
    }
    Ok(vec![CheckResult::new(
        "ratio_bound",
        worst_slack >= 0.0,
        worst_slack,
        ">= 0",
        format!(
            "populations={used} c={} min ratio={worst_ratio}",
            v.ratio_constant
        ),
    )])
}

fn dominance_checks(v: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    check_population_config(v)?;
    let d = v.dominance_d;
    let mut used = 0;
    let mut sft_used = 0;
    let mut worst_dft = f64::NEG_INFINITY;
    let mut worst_sft = f64::NEG_INFINITY;
    let mut worst_oracle = f64::NEG_INFINITY;
    let mut worst_clip: f64 = 0.0;
    let mut last_reason = String::new();
    for i in 0..v.populations {
        let mean = range(v.mean_p, rng);
        let pop = lemma_population(v, i, d, v.dominance_min_q, mean, rng)?;
        let report = match dominance_check(&pop, d) {
            Ok(r) => r,
            Err(Error::Precondition(reason)) => {
                last_reason = reason;
                continue;
            }
            Err(e) => return Err(e),
        };
        used += 1;
        worst_dft = worst_dft.max(report.info_sft - report.dft);
        if let Some(sft) = report.sft {
            sft_used += 1;
            worst_sft = worst_sft.max(report.info_sft - sft);
        }
        worst_oracle = worst_oracle.max(report.oracle - report.oracle_bound);
        let unclipped = expected_delta_kl(&pop, &WeightRule::unclipped_info_sft(report.p_bar)?)?;
        worst_clip = worst_clip.max((unclipped.mean_delta_kl - report.info_sft).abs());
    }
    if used == 0 {
        let detail = format!("precondition: {last_reason}");
        return Ok(vec![
            CheckResult::skipped("dominance_info_vs_dft", "< 0", &detail),
            CheckResult::skipped("dominance_info_vs_sft", "< 0", &detail),
            CheckResult::skipped("dominance_oracle_bound", "<= 0", &detail),
            CheckResult::skipped("dominance_clip_inactive", "== 0", &detail),
        ]);
    }
    let n = format!("populations={used} d={d}");
    let sft = if sft_used == 0 {
        CheckResult::skipped(
            "dominance_info_vs_sft",
            "< 0",
            "no population with p_bar <= 0.98",
        )
    } else {
        CheckResult::new(
            "dominance_info_vs_sft",
            worst_sft < 0.0,
            worst_sft,
            "< 0",
            format!("populations={sft_used} max E[info]-E[sft]"),
        )
    };
    Ok(vec![
        CheckResult::new(
            "dominance_info_vs_dft",
            worst_dft < 0.0,
            worst_dft,
            "< 0",
            format!("{n} max E[info]-E[dft]"),
        ),
        sft,
        CheckResult::new(
            "dominance_oracle_bound",
            worst_oracle <= 0.0,
            worst_oracle,
            "<= 0",
            format!("{n} max E[oracle]-log(d e/p_bar)"),
        ),
        CheckResult::new(
            "dominance_clip_inactive",
            worst_clip == 0.0,
            worst_clip,
            "== 0",
            &n,
        ),
    ])
}

fn g_checks(v: &VerifyConfig) -> Result<Vec<CheckResult>> {
    let lo = (v.g_grid[0] / v.g_step).round() as i64;
    let hi = (v.g_grid[1] / v.g_step).round() as i64;
    let grid: Vec<f64> = (lo..=hi).map(|i| i as f64 * v.g_step).collect();
    let report = verify_g_positive(&grid)?;
    let root = g_root()?;
    Ok(vec![
        CheckResult::new(
            "g_positive",
            report.all_positive,
            report.min_value,
            "> 0",
            format!(
                "points={} grid=[{}, {}] argmin={}",
                report.points, v.g_grid[0], v.g_grid[1], report.argmin
            ),
        ),
        CheckResult::new(
            "g_root",
            root >= 0.988,
            root,
            ">= 0.988",
            "largest x with G(x) > 0",
        ),
        CheckResult::new(
            "binary_entropy_bound",
            binary_entropy(root)? <= root * (1.0 - root.ln()),
            binary_entropy(root)?,
            "<= t(1 - log t)",
            "at the G root",
        ),
    ])
}
