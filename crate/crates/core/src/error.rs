use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("chain diverged at step {step}: {reason}")]
    ChainDivergence { step: usize, reason: String },

    #[error("invalid prune operation #{index} ({op}): {reason}")]
    InvalidOp {
        index: usize,
        op: String,
        reason: String,
    },

    #[error("flow conservation violated at task `{task}`: inflow {inflow}, outflow {outflow}")]
    Infeasible {
        task: String,
        inflow: f64,
        outflow: f64,
    },

    #[error("invalid labelling: {0}")]
    InvalidLabelling(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
