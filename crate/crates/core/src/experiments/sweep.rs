use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::output::{ensure_dir, rng_for, write_csv, write_text};
use super::svg::{Marker, Plot};
use crate::distributions::{mean_p, random_population, DistributionPair, PopulationSpec};
use crate::error::{Error, Result};
use crate::proximal::expected_delta_kl;
use crate::weighting::WeightRule;

/// A rule as named in a sweep. Bare `infosft` is calibrated at each
/// population's own mean `p`; bare `oracle` uses each pair's `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepRule {
    Fixed(WeightRule),
    InfoSftAtPopulationMean,
    Oracle,
}

impl SweepRule {
    fn resolve(&self, population: &[DistributionPair]) -> Result<WeightRule> {
        match self {
            SweepRule::Fixed(rule) => Ok(*rule),
            SweepRule::InfoSftAtPopulationMean => WeightRule::info_sft(mean_p(population)),
            SweepRule::Oracle => Ok(WeightRule::Oracle { p: 0.5 }),
        }
    }
}

impl FromStr for SweepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "infosft" => Ok(SweepRule::InfoSftAtPopulationMean),
            "oracle" => Ok(SweepRule::Oracle),
            other => other.parse().map(SweepRule::Fixed),
        }
    }
}

impl fmt::Display for SweepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepRule::Fixed(rule) => write!(f, "{rule}"),
            SweepRule::InfoSftAtPopulationMean => write!(f, "infosft"),
            SweepRule::Oracle => write!(f, "oracle"),
        }
    }
}

/// One `(d, rule)` cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub d: f64,
    pub rule: String,
    pub populations: usize,
    /// Mean over populations of the population-level expected `Delta KL`.
    pub mean_delta_kl: Option<f64>,
    pub std_error: Option<f64>,
    pub mean_p_bar: Option<f64>,
    /// `mean_delta_kl / oracle mean_delta_kl`.
    pub ratio_to_oracle: Option<f64>,
    /// Whether `d <= p̄ / e^2` for the mean `p̄` of the cell.
    pub in_regime: Option<bool>,
    pub status: String,
}

/// For each `d` draws the same populations for every rule, so rules are
/// compared on identical data. Writes `population_sweep.csv` and
/// `population_sweep.svg`.
pub fn run_population_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let section = &config.population_sweep;
    if section.rules.is_empty() || section.d_grid.is_empty() || section.populations_per_cell == 0 {
        return Err(Error::Config(
            "population_sweep needs rules, a d grid and populations_per_cell >= 1".into(),
        ));
    }
    let rules = section
        .rules
        .iter()
        .map(|r| r.parse::<SweepRule>())
        .collect::<Result<Vec<_>>>()?;
    let base_spec = PopulationSpec {
        expert_concentration: PopulationSpec::concentration_for_mean_p(
            section.population.alphabet_size,
            section.mean_p,
        )?,
        ..section.population.clone()
    };
    let seed = config.seed;
    let pool = config.thread_pool()?;
    let per_d: Vec<Vec<SweepRow>> = pool.install(|| {
        section
            .d_grid
            .par_iter()
            .enumerate()
            .map(|(i, &d)| {
                sweep_column(
                    &base_spec,
                    &rules,
                    d,
                    section.populations_per_cell,
                    seed,
                    i as u64,
                )
            })
            .collect()
    });
    let rows: Vec<SweepRow> = per_d.into_iter().flatten().collect();

    ensure_dir(&config.out)?;
    config.write_resolved()?;
    write_csv(
        &config.out.join("population_sweep.csv"),
        "population-sweep",
        &[
            "d",
            "rule",
            "populations",
            "mean_delta_kl",
            "std_error",
            "mean_p_bar",
            "ratio_to_oracle",
            "in_regime",
            "status",
        ],
        rows.iter().map(|r| {
            vec![
                r.d.to_string(),
                r.rule.clone(),
                r.populations.to_string(),
                super::output::fmt_opt(r.mean_delta_kl),
                super::output::fmt_opt(r.std_error),
                super::output::fmt_opt(r.mean_p_bar),
                super::output::fmt_opt(r.ratio_to_oracle),
                r.in_regime.map(|b| b.to_string()).unwrap_or_default(),
                r.status.clone(),
            ]
        }),
    )?;
    let mut plot = Plot::new(
        "Expected one-step change in KL to the expert",
        "d (max q)",
        "E[delta KL]",
    );
    plot.log_x = true;
    for (i, rule) in rules.iter().enumerate() {
        let name = rule.to_string();
        let pts = rows
            .iter()
            .filter(|r| r.rule == name)
            .filter_map(|r| r.mean_delta_kl.map(|m| (r.d, m)))
            .collect();
        plot.add(&name, pts, Marker::DotsAndLine, i);
    }
    write_text(&config.out.join("population_sweep.svg"), &plot.render())?;
    Ok(rows)
}

fn sweep_column(
    base_spec: &PopulationSpec,
    rules: &[SweepRule],
    d: f64,
    populations: usize,
    seed: u64,
    stream: u64,
) -> Vec<SweepRow> {
    let failed = |rule: &SweepRule, status: String| SweepRow {
        d,
        rule: rule.to_string(),
        populations: 0,
        mean_delta_kl: None,
        std_error: None,
        mean_p_bar: None,
        ratio_to_oracle: None,
        in_regime: None,
        status,
    };
    let spec = PopulationSpec {
        max_q: d,
        ..base_spec.clone()
    };
    let mut rng = rng_for(seed, stream);
    let pops: Result<Vec<Vec<DistributionPair>>> = (0..populations)
        .map(|_| random_population(&spec, &mut rng))
        .collect();
    let pops = match pops {
        Ok(p) => p,
        Err(e) => {
            return rules
                .iter()
                .map(|r| failed(r, format!("error: {e}")))
                .collect()
        }
    };
    let p_bar = pops.iter().map(|p| mean_p(p)).sum::<f64>() / pops.len() as f64;
    let in_regime = d <= p_bar / (std::f64::consts::E * std::f64::consts::E);
    let means: Vec<Result<Vec<f64>>> = rules
        .iter()
        .map(|rule| {
            pops.iter()
                .map(|pop| Ok(expected_delta_kl(pop, &rule.resolve(pop)?)?.mean_delta_kl))
                .collect()
        })
        .collect();
    let oracle_mean = rules
        .iter()
        .position(|r| *r == SweepRule::Oracle)
        .and_then(|i| means[i].as_ref().ok())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64);
    rules
        .iter()
        .zip(means)
        .map(|(rule, values)| match values {
            Ok(values) => {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let se = if values.len() > 1 {
                    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
                } else {
                    0.0
                };
                SweepRow {
                    d,
                    rule: rule.to_string(),
                    populations: values.len(),
                    mean_delta_kl: Some(mean),
                    std_error: Some(se),
                    mean_p_bar: Some(p_bar),
                    ratio_to_oracle: oracle_mean.map(|o| mean / o),
                    in_regime: Some(in_regime),
                    status: "ok".into(),
                }
            }
            Err(e) => SweepRow {
                mean_p_bar: Some(p_bar),
                in_regime: Some(in_regime),
                ..failed(rule, format!("error: {e}"))
            },
        })
        .collect()
}
