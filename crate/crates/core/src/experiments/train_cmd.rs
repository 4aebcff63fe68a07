use std::fs::File;
use std::io::{BufReader, BufWriter};

use super::config::ExperimentConfig;
use super::output::{ensure_dir, rng_for};
use crate::error::{Error, Result};
use crate::tabular::{
    policy_metrics, train, PolicyMetrics, SequenceDataset, TabularPolicy, TrainConfig, TrainTrace,
};
use crate::tasks::imitation_task;
use crate::weighting::WeightRule;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub initial: TabularPolicy,
    pub policy: TabularPolicy,
    pub trace: TrainTrace,
    pub metrics: PolicyMetrics,
}

fn write_trace(config: &ExperimentConfig, trace: &TrainTrace) -> Result<()> {
    trace.write_csv(BufWriter::new(File::create(config.out.join("trace.csv"))?))
}

/// Trains one policy. Writes `trace.csv`, `policy.txt`, `initial_policy.txt`
/// and `dataset.txt`. On divergence the partial trace is still written and
/// the [`Error::Diverged`] is returned.
pub fn run_train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    let section = &config.train;
    let rule: WeightRule = section.rule.parse()?;
    let (initial, dataset) = match (&section.dataset, &section.policy) {
        (Some(data), Some(policy)) => (
            TabularPolicy::read_text(BufReader::new(File::open(policy)?))?,
            SequenceDataset::read_text(BufReader::new(File::open(data)?))?,
        ),
        (None, None) => {
            let task = imitation_task(&section.task, &mut rng_for(config.seed, 0))?;
            (task.init, task.dataset)
        }
        _ => {
            return Err(Error::Config(
                "train.dataset and train.policy must be given together".into(),
            ))
        }
    };
    let train_config = TrainConfig {
        batch_size: section.batch_size,
        seed: config.seed,
        q_clip_hi: section.q_clip_hi,
        ..TrainConfig::new(rule, section.learning_rate, section.epochs)
    };

    ensure_dir(&config.out)?;
    config.write_resolved()?;
    initial.write_text(BufWriter::new(File::create(
        config.out.join("initial_policy.txt"),
    )?))?;
    dataset.write_text(BufWriter::new(File::create(
        config.out.join("dataset.txt"),
    )?))?;
    let run = match train(&initial, &dataset, &train_config) {
        Ok(run) => run,
        Err(Error::Diverged { step, trace }) => {
            write_trace(config, &trace)?;
            return Err(Error::Diverged { step, trace });
        }
        Err(e) => return Err(e),
    };
    write_trace(config, &run.trace)?;
    run.policy
        .write_text(BufWriter::new(File::create(config.out.join("policy.txt"))?))?;
    let probes = dataset.contexts(initial.context_map());
    let metrics = policy_metrics(&run.policy, &initial, &dataset, &probes)?;
    Ok(TrainOutcome {
        initial,
        policy: run.policy,
        trace: run.trace,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &std::path::Path) -> ExperimentConfig {
        let mut config = ExperimentConfig {
            out: dir.to_path_buf(),
            ..ExperimentConfig::default()
        };
        config.train.epochs = 20;
        config
    }

    #[test]
    fn writes_trace_with_one_row_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_train(&config(dir.path())).unwrap();
        assert_eq!(outcome.trace.len(), 20);
        let text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert_eq!(text.lines().count(), 2 + 20);
        let saved = TabularPolicy::read_text(BufReader::new(
            File::open(dir.path().join("policy.txt")).unwrap(),
        ))
        .unwrap();
        assert_eq!(saved, outcome.policy);
    }

    #[test]
    fn zero_epochs_returns_input_policy() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path());
        c.train.epochs = 0;
        let outcome = run_train(&c).unwrap();
        assert_eq!(outcome.policy, outcome.initial);
        assert!(outcome.trace.is_empty());
    }

    #[test]
    fn files_round_trip_into_a_second_run() {
        let dir = tempfile::tempdir().unwrap();
        let first = run_train(&config(dir.path())).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let mut c = config(dir2.path());
        c.train.dataset = Some(dir.path().join("dataset.txt"));
        c.train.policy = Some(dir.path().join("initial_policy.txt"));
        let second = run_train(&c).unwrap();
        assert_eq!(first.policy, second.policy);
    }

    #[test]
    fn divergence_flushes_partial_trace() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path());
        c.train.rule = "sft".into();
        c.train.learning_rate = 1e308;
        assert!(matches!(run_train(&c), Err(Error::Diverged { .. })));
        assert!(dir.path().join("trace.csv").exists());
    }
}
