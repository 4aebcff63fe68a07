use thiserror::Error;

use crate::tabular::TrainTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar was passed outside the domain of the function evaluating it.
    #[error("domain error in {op}: {value} is outside {domain}")]
    Domain {
        op: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// `p[i] > 0` while `r[i] == 0`: the first argument is not absolutely
    /// continuous with respect to the second.
    #[error("support mismatch at index {index}: p = {p} but r = 0")]
    SupportMismatch { index: usize, p: f64 },

    #[error("resample budget exhausted: {attempts} draws without satisfying {constraint}")]
    ResampleBudget { attempts: usize, constraint: String },

    #[error("coefficient u = {0} exceeds the overflow guard |u| <= 700")]
    Overflow(f64),

    #[error("pair {index}: {source}")]
    Pair {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("bisection bracket [{lo}, {hi}] does not contain a sign change (g(lo) = {g_lo}, g(hi) = {g_hi})")]
    Bracket {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sequence {0} has no response tokens")]
    EmptyResponse(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Training produced a non-finite loss or parameter. Carries the trace
    /// recorded up to (not including) the failing step.
    #[error("training diverged at step {step}")]
    Diverged { step: usize, trace: Box<TrainTrace> },

    #[error("every sampled response was rejected by the correctness predicate")]
    AllFiltered,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_pair(self, index: usize) -> Self {
        Error::Pair {
            index,
            source: Box::new(self),
        }
    }
}
