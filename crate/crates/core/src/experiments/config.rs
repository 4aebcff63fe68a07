use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::PopulationSpec;
use crate::error::{Error, Result};
use crate::tabular::DEFAULT_Q_CLIP_HI;
use crate::tasks::{ImitationTaskSpec, TwoTaskSpec};
use crate::weighting::DEFAULT_P_BAR;

/// Everything every command reads. Each command uses its own section plus
/// `seed`, `out` and `jobs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads for sweeps; 0 uses every core.
    pub jobs: usize,
    pub verify: VerifyConfig,
    pub weight_curves: CurvesConfig,
    pub population_sweep: SweepConfig,
    pub train: TrainCmdConfig,
    pub tradeoff: TradeoffConfig,
    pub estimate_pbar: PBarConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            jobs: 0,
            verify: VerifyConfig::default(),
            weight_curves: CurvesConfig::default(),
            population_sweep: SweepConfig::default(),
            train: TrainCmdConfig::default(),
            tradeoff: TradeoffConfig::default(),
            estimate_pbar: PBarConfig::default(),
        }
    }
}

/// Command-line values that replace the file's.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path`, or the defaults when `None`, then applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match path {
            Some(p) => Self::from_toml_str(&std::fs::read_to_string(p)?)?,
            None => Self::default(),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(out) = &overrides.out {
            config.out.clone_from(out);
        }
        if let Some(jobs) = overrides.jobs {
            config.jobs = jobs;
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Writes the fully resolved config to `<out>/config.resolved.toml`.
    pub fn write_resolved(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        std::fs::write(self.out.join("config.resolved.toml"), self.to_toml_string())?;
        Ok(())
    }

    pub(crate) fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random `(pair, u)` draws for the closed-form check.
    pub closed_form_samples: usize,
    pub closed_form_alphabet: [usize; 2],
    pub closed_form_u: [f64; 2],
    /// Pairs for the oracle grid search and the convexity check.
    pub oracle_pairs: usize,
    pub oracle_grid: [f64; 2],
    pub oracle_grid_step: f64,
    pub convexity_step: f64,
    /// Populations for each population-level check.
    pub populations: usize,
    pub population_size: usize,
    pub alphabet_sizes: Vec<usize>,
    /// Range of the generator's target mean expert probability.
    pub mean_p: [f64; 2],
    /// `d` for the `C*` check.
    pub c_star_d: f64,
    pub c_star_bound_factor: f64,
    pub c_star_perturbation: f64,
    /// The ratio-bound populations use `d = ratio_d_factor * p̄ * e^-6`.
    pub ratio_d_factor: f64,
    pub ratio_constant: f64,
    /// `d` for the dominance check; skipped when `d > p̄ / e^2`.
    pub dominance_d: f64,
    /// Lower bound on `q` in the dominance populations, keeping `1/q` inside the overflow guard.
    pub dominance_min_q: f64,
    pub g_grid: [f64; 2],
    pub g_step: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            closed_form_samples: 1000,
            closed_form_alphabet: [2, 50],
            closed_form_u: [-8.0, 8.0],
            oracle_pairs: 100,
            oracle_grid: [-10.0, 10.0],
            oracle_grid_step: 1e-3,
            convexity_step: 1e-2,
            populations: 100,
            population_size: 200,
            alphabet_sizes: vec![5, 20, 100],
            mean_p: [0.6, 0.95],
            c_star_d: 0.01,
            c_star_bound_factor: 5.0,
            c_star_perturbation: 0.05,
            ratio_d_factor: 0.5,
            ratio_constant: 10.0,
            dominance_d: 0.05,
            dominance_min_q: 0.002,
            g_grid: [0.01, 0.988],
            g_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesConfig {
    pub rules: Vec<String>,
    /// Interior grid `i / (n + 1)`, `i = 1..=n`.
    pub grid_points: usize,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        Self {
            rules: vec![
                "sft".into(),
                "dft".into(),
                format!("infosft({DEFAULT_P_BAR})"),
            ],
            grid_points: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Bare `infosft` is calibrated at each population's mean `p`; bare
    /// `oracle` uses each pair's own `p`.
    pub rules: Vec<String>,
    pub d_grid: Vec<f64>,
    pub populations_per_cell: usize,
    /// Target mean expert probability; sets the expert concentration.
    pub mean_p: f64,
    /// `max_q` is replaced by each `d`; the expert concentration by `mean_p`.
    pub population: PopulationSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rules: vec![
                "sft".into(),
                "dft".into(),
                "infosft".into(),
                "oracle".into(),
            ],
            d_grid: vec![0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            populations_per_cell: 10,
            mean_p: 0.9,
            population: PopulationSpec {
                min_q: 0.0015,
                ..PopulationSpec::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    /// Dataset file; a synthetic imitation task is drawn when absent.
    pub dataset: Option<PathBuf>,
    /// Initial policy file; required with `dataset`.
    pub policy: Option<PathBuf>,
    pub task: ImitationTaskSpec,
    pub rule: String,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub q_clip_hi: f64,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            policy: None,
            task: ImitationTaskSpec::default(),
            rule: "infosft".into(),
            learning_rate: 5.0,
            epochs: 1000,
            batch_size: 0,
            q_clip_hi: DEFAULT_Q_CLIP_HI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradeoffConfig {
    pub task: TwoTaskSpec,
    pub rules: Vec<String>,
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
    pub batch_size: usize,
    /// Independent task draws.
    pub draws: usize,
    pub q_clip_hi: f64,
    /// Relative retention tolerance for matched comparisons.
    pub match_tolerance: f64,
    /// Draw shown in the scatter plot.
    pub plot_draw: usize,
}

/// `count` points from `lo` to `hi`, evenly spaced in log scale.
pub(crate) fn geomspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

impl Default for TradeoffConfig {
    fn default() -> Self {
        Self {
            task: TwoTaskSpec::default(),
            rules: vec!["sft".into(), "dft".into(), "infosft".into()],
            learning_rates: geomspace(0.05, 20.0, 24),
            epochs: vec![1, 2],
            batch_size: 2,
            draws: 20,
            q_clip_hi: DEFAULT_Q_CLIP_HI,
            match_tolerance: 0.05,
            plot_draw: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PBarConfig {
    /// Policy file; a uniform policy over `alphabet_size` is used when absent.
    pub policy: Option<PathBuf>,
    pub alphabet_size: usize,
    pub order: usize,
    /// Dataset file whose prompts are used; otherwise `prompts`.
    pub dataset: Option<PathBuf>,
    pub prompts: Vec<Vec<usize>>,
    pub num_samples: usize,
    pub max_len: usize,
    pub temperature: f64,
}

impl Default for PBarConfig {
    fn default() -> Self {
        Self {
            policy: None,
            alphabet_size: 10,
            order: 1,
            dataset: None,
            prompts: (0..10).map(|t| vec![t]).collect(),
            num_samples: 200,
            max_len: 8,
            temperature: 1.0,
        }
    }
}
