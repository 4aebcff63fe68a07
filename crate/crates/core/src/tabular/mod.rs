//! Tabular next-token policies and the weighted supervised trainer.

mod dataset;
pub mod objective;
mod policy;
mod sampling;
mod train;

pub use dataset::{ScoredToken, Sequence, SequenceDataset};
pub use objective::{
    entropy_decomposition_check, frozen_objective, prob_table, token_terms,
    weighted_loss_and_gradient, TokenTerm, WeightedObjective, DEFAULT_Q_CLIP_HI,
};
pub use policy::{ContextMap, TabularPolicy};
pub use sampling::{
    estimate_p_bar, generate, PBarEstimate, PBarSettings, Predicate, PromptEstimate,
};
pub use train::{
    policy_metrics, train, PolicyMetrics, TraceRecord, TrainConfig, TrainRun, TrainTrace,
    TRACE_SCHEMA,
};
