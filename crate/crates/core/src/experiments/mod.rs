//! The six experiment commands. Each one is a pure function of its
//! [`ExperimentConfig`] and writes schema-versioned CSV, SVG and text files
//! into the configured output directory.

mod config;
mod curves;
mod output;
mod pbar;
mod svg;
mod sweep;
mod tradeoff;
mod train_cmd;
mod verify;

pub use config::{
    CurvesConfig, ExperimentConfig, Overrides, PBarConfig, SweepConfig, TradeoffConfig,
    TrainCmdConfig, VerifyConfig,
};
pub use curves::{run_weight_curves, CurveSet};
pub use output::{read_schema_csv, rng_for, schema_line};
pub use pbar::run_estimate_pbar;
pub use svg::{Marker, Plot, Series};
pub use sweep::{run_population_sweep, SweepRow, SweepRule};
pub use tradeoff::{
    matched_comparisons, pareto_frontier, run_tradeoff, tradeoff_svg_from_csv, MatchedSummary,
    TradeoffRecord,
};
pub use train_cmd::{run_train, TrainOutcome};
pub use verify::{run_verify, CheckResult, CheckStatus, VerifyReport};
