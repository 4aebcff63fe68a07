use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::output::{ensure_dir, fmt_opt, read_schema_csv, rng_for, write_csv, write_text};
use super::svg::{Marker, Plot};
use crate::error::{Error, Result};
use crate::tabular::{train, TabularPolicy, TrainConfig};
use crate::tasks::{mean_entropy, mean_kl_between, two_task_draw, TwoTaskDraw};
use crate::weighting::WeightRule;

/// Summary of one fine-tuning run on task B.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRecord {
    pub draw: usize,
    pub seed: u64,
    pub rule: String,
    pub learning_rate: f64,
    pub epochs: usize,
    pub steps: usize,
    /// `ok`, `diverged at step N`, or `error: ...`.
    pub status: String,
    /// Mean `KL(expert_B || pi)` over task-B contexts.
    pub new_task_fit: Option<f64>,
    /// Mean `KL(pi || pi_base)` over task-A contexts.
    pub retention_kl: Option<f64>,
    /// Mean `KL(expert_A || pi)` over task-A contexts.
    pub prior_task_fit: Option<f64>,
    /// Mean entropy of `pi` over task-B contexts.
    pub terminal_entropy: Option<f64>,
    /// Fraction of task-B contexts where `pi` and `expert_B` share an argmax.
    pub greedy_match: Option<f64>,
}

impl TradeoffRecord {
    fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

const HEADER: [&str; 12] = [
    "draw",
    "seed",
    "rule",
    "learning_rate",
    "epochs",
    "steps",
    "status",
    "new_task_fit",
    "retention_kl",
    "prior_task_fit",
    "terminal_entropy",
    "greedy_match",
];

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

fn evaluate(draw: &TwoTaskDraw, policy: &TabularPolicy) -> Result<[f64; 5]> {
    let new_fit = draw.expert_b.mean_kl_to(policy, &draw.contexts_b)?;
    let retention = mean_kl_between(policy, &draw.base, &draw.contexts_a)?;
    let prior_fit = draw.expert_a.mean_kl_to(policy, &draw.contexts_a)?;
    let entropy = mean_entropy(policy, &draw.contexts_b)?;
    let matches = draw
        .contexts_b
        .iter()
        .filter(|&&c| argmax(&policy.probs(c)) == argmax(draw.expert_b.row(c).probs()))
        .count();
    Ok([
        new_fit,
        retention,
        prior_fit,
        entropy,
        matches as f64 / draw.contexts_b.len() as f64,
    ])
}

struct Cell {
    draw: usize,
    rule: WeightRule,
    rule_name: String,
    learning_rate: f64,
    epochs: usize,
}

fn run_cell(config: &ExperimentConfig, draw: &TwoTaskDraw, cell: &Cell) -> TradeoffRecord {
    let section = &config.tradeoff;
    let n = draw.dataset_b.len();
    let batch = if section.batch_size == 0 {
        n
    } else {
        section.batch_size.min(n)
    };
    let mut record = TradeoffRecord {
        draw: cell.draw,
        seed: config.seed,
        rule: cell.rule_name.clone(),
        learning_rate: cell.learning_rate,
        epochs: cell.epochs,
        steps: cell.epochs * n.div_ceil(batch),
        status: "ok".into(),
        new_task_fit: None,
        retention_kl: None,
        prior_task_fit: None,
        terminal_entropy: None,
        greedy_match: None,
    };
    let train_config = TrainConfig {
        batch_size: section.batch_size,
        seed: config.seed ^ (cell.draw as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        q_clip_hi: section.q_clip_hi,
        probe_contexts: Some(draw.contexts_a.clone()),
        ..TrainConfig::new(cell.rule, cell.learning_rate, cell.epochs)
    };
    let metrics = train(&draw.base, &draw.dataset_b, &train_config)
        .and_then(|run| evaluate(draw, &run.policy));
    match metrics {
        Ok([new_fit, retention, prior_fit, entropy, greedy]) => {
            record.new_task_fit = Some(new_fit);
            record.retention_kl = Some(retention);
            record.prior_task_fit = Some(prior_fit);
            record.terminal_entropy = Some(entropy);
            record.greedy_match = Some(greedy);
        }
        Err(Error::Diverged { step, .. }) => record.status = format!("diverged at step {step}"),
        Err(e) => record.status = format!("error: {e}"),
    }
    record
}

/// Fine-tunes the task-A base on task B for every
/// `(draw, rule, learning rate, epochs)` cell. Writes `tradeoff.csv`,
/// `tradeoff_matched.csv` and `tradeoff.svg`; the plot is built by reading
/// `tradeoff.csv` back.
pub fn run_tradeoff(config: &ExperimentConfig) -> Result<Vec<TradeoffRecord>> {
    let section = &config.tradeoff;
    if section.rules.is_empty()
        || section.learning_rates.is_empty()
        || section.epochs.is_empty()
        || section.draws == 0
    {
        return Err(Error::Config(
            "tradeoff needs rules, learning_rates, epochs and draws >= 1".into(),
        ));
    }
    let rules = section
        .rules
        .iter()
        .map(|r| Ok((r.parse::<WeightRule>()?, r.clone())))
        .collect::<Result<Vec<_>>>()?;
    let pool = config.thread_pool()?;
    let records = pool.install(|| -> Result<Vec<TradeoffRecord>> {
        let draws = (0..section.draws)
            .into_par_iter()
            .map(|d| two_task_draw(&section.task, &mut rng_for(config.seed, 1000 + d as u64)))
            .collect::<Result<Vec<_>>>()?;
        let mut cells = Vec::new();
        for d in 0..section.draws {
            for (rule, name) in &rules {
                for &lr in &section.learning_rates {
                    for &epochs in &section.epochs {
                        cells.push(Cell {
                            draw: d,
                            rule: *rule,
                            rule_name: name.clone(),
                            learning_rate: lr,
                            epochs,
                        });
                    }
                }
            }
        }
        Ok(cells
            .par_iter()
            .map(|c| run_cell(config, &draws[c.draw], c))
            .collect())
    })?;

    ensure_dir(&config.out)?;
    config.write_resolved()?;
    let csv_path = config.out.join("tradeoff.csv");
    write_csv(
        &csv_path,
        "tradeoff",
        &HEADER,
        records.iter().map(|r| {
            vec![
                r.draw.to_string(),
                r.seed.to_string(),
                r.rule.clone(),
                r.learning_rate.to_string(),
                r.epochs.to_string(),
                r.steps.to_string(),
                r.status.clone(),
                fmt_opt(r.new_task_fit),
                fmt_opt(r.retention_kl),
                fmt_opt(r.prior_task_fit),
                fmt_opt(r.terminal_entropy),
                fmt_opt(r.greedy_match),
            ]
        }),
    )?;
    let mut summary_rows = Vec::new();
    for i in 0..rules.len() {
        for j in 0..rules.len() {
            if i == j {
                continue;
            }
            let (a, b) = (&rules[i].1, &rules[j].1);
            let s = matched_comparisons(&records, a, b, section.match_tolerance);
            for (draw, comparisons, wins) in &s.per_draw {
                summary_rows.push(vec![
                    a.clone(),
                    b.clone(),
                    draw.to_string(),
                    comparisons.to_string(),
                    wins.to_string(),
                ]);
            }
            summary_rows.push(vec![
                a.clone(),
                b.clone(),
                "all".into(),
                s.comparisons.to_string(),
                s.wins.to_string(),
            ]);
        }
    }
    write_csv(
        &config.out.join("tradeoff_matched.csv"),
        "tradeoff-matched",
        &["rule", "versus", "draw", "comparisons", "wins"],
        summary_rows,
    )?;
    let svg = tradeoff_svg_from_csv(&csv_path, section.plot_draw)?;
    write_text(&config.out.join("tradeoff.svg"), &svg)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSummary {
    pub comparisons: usize,
    /// Comparisons where rule `a` reaches a new-task KL at most rule `b`'s.
    pub wins: usize,
    /// `(draw, comparisons, wins)` for draws with at least one comparison.
    pub per_draw: Vec<(usize, usize, usize)>,
}

impl MatchedSummary {
    pub fn fraction(&self) -> Option<f64> {
        (self.comparisons > 0).then(|| self.wins as f64 / self.comparisons as f64)
    }
}

/// Pairs every successful `a` cell with every successful `b` cell of the same
/// draw whose retention KLs agree within `tolerance` relative to the larger,
/// and counts the pairs where `a` fits task B at least as well.
pub fn matched_comparisons(
    records: &[TradeoffRecord],
    a: &str,
    b: &str,
    tolerance: f64,
) -> MatchedSummary {
    let mut per_draw = Vec::new();
    let draws = records.iter().map(|r| r.draw).max().map_or(0, |m| m + 1);
    for d in 0..draws {
        let pick = |rule: &str| -> Vec<(f64, f64)> {
            records
                .iter()
                .filter(|r| r.draw == d && r.rule == rule && r.is_ok())
                .filter_map(|r| Some((r.retention_kl?, r.new_task_fit?)))
                .collect()
        };
        let (cells_a, cells_b) = (pick(a), pick(b));
        let mut comparisons = 0;
        let mut wins = 0;
        for &(ra, na) in &cells_a {
            for &(rb, nb) in &cells_b {
                if (ra - rb).abs() <= tolerance * ra.max(rb) {
                    comparisons += 1;
                    wins += usize::from(na <= nb);
                }
            }
        }
        if comparisons > 0 {
            per_draw.push((d, comparisons, wins));
        }
    }
    MatchedSummary {
        comparisons: per_draw.iter().map(|x| x.1).sum(),
        wins: per_draw.iter().map(|x| x.2).sum(),
        per_draw,
    }
}

/// Points not dominated in both coordinates (lower is better in each),
/// sorted by the first coordinate.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut frontier = Vec::new();
    let mut best = f64::INFINITY;
    for p in sorted {
        if p.1 < best {
            best = p.1;
            frontier.push(p);
        }
    }
    frontier
}

/// Scatter of `(retention_kl, new_task_fit)` for one draw, one color per
/// rule, with each rule's Pareto frontier drawn as a line. Reads only the CSV.
pub fn tradeoff_svg_from_csv(path: &Path, draw: usize) -> Result<String> {
    let (header, rows) = read_schema_csv(path, "tradeoff")?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 2,
                msg: format!("missing column {name}"),
            })
    };
    let (c_draw, c_rule, c_status, c_ret, c_new) = (
        col("draw")?,
        col("rule")?,
        col("status")?,
        col("retention_kl")?,
        col("new_task_fit")?,
    );
    let mut rules: Vec<String> = Vec::new();
    let mut points: Vec<Vec<(f64, f64)>> = Vec::new();
    for row in &rows {
        if row[c_draw] != draw.to_string() || row[c_status] != "ok" {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: 0,
                msg: format!("{s}: {e}"),
            })
        };
        let idx = match rules.iter().position(|r| *r == row[c_rule]) {
            Some(i) => i,
            None => {
                rules.push(row[c_rule].clone());
                points.push(Vec::new());
                rules.len() - 1
            }
        };
        points[idx].push((parse(&row[c_ret])?, parse(&row[c_new])?));
    }
    let mut plot = Plot::new(
        &format!("Learning vs forgetting, task draw {draw}"),
        "retention: KL(pi || base) on task A",
        "new-task fit: KL(expert_B || pi)",
    );
    for (i, (rule, pts)) in rules.iter().zip(&points).enumerate() {
        plot.add(rule, pts.clone(), Marker::Dots, i);
        plot.add(
            &format!("{rule} frontier"),
            pareto_frontier(pts),
            Marker::Line,
            i,
        );
    }
    Ok(plot.render())
}
