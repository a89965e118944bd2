use std::path::PathBuf;

use thiserror::Error;

use crate::model::{MemoryViolation, RequestId, Time, Tokens};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("memory limit must be at least 1 token")]
    ZeroMemoryLimit,

    #[error("duplicate request id {0}")]
    DuplicateId(RequestId),

    #[error("request {id}: prefill and decode lengths must be >= 1 (got s={s}, o={o})")]
    InvalidRequest { id: RequestId, s: Tokens, o: Tokens },

    #[error("request {id}: peak footprint s+o={peak} exceeds memory limit {memory_limit}")]
    ExceedsMemory {
        id: RequestId,
        peak: Tokens,
        memory_limit: Tokens,
    },

    #[error("unknown request id {0}")]
    UnknownRequest(RequestId),

    #[error("request {0} has no start time")]
    MissingStart(RequestId),

    #[error("memory limit violated: {0}")]
    MemoryViolation(MemoryViolation),

    #[error("F-metric is undefined for an empty batch")]
    EmptyBatch,

    #[error("order is not a permutation of the instance: {0}")]
    NotAPermutation(String),

    #[error("batch {index} does not fit in memory when co-started")]
    InfeasibleBatch { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("pool of {size} requests exceeds the {limit}-request limit of the {what}")]
    PoolTooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("exact DP table of {cells} cells exceeds budget {budget}; use the scaled DP selector")]
    DpBudget { cells: u128, budget: u128 },

    #[error("selector returned no batch for a pool of {0} requests")]
    EmptySelection(usize),

    #[error("local swap exceeded {0} sweeps without converging")]
    SwapIterationCap(usize),

    #[error("horizon {horizon} is shorter than the longest decode length {max_o}")]
    HorizonTooShort { horizon: Time, max_o: Tokens },

    #[error("LP has {cells} variables, over the budget of {budget}")]
    LpBudget { cells: u128, budget: u128 },

    #[error("LP is infeasible within horizon {0}; increase the horizon")]
    LpInfeasible(Time),

    #[error("LP solver failed: {0}")]
    LpNumerical(String),

    #[error("exact oracle refused: {0}")]
    OracleGuard(String),

    #[error("generator: {0}")]
    Generator(String),

    #[error("{path}:{line}: {msg}")]
    Trace {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
