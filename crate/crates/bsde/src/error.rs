//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Numeric failures
//! (non-convergence, non-finite values) are kept separate from structural
//! failures (bad documents, dimension mismatches) so callers can map them to
//! distinct exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("horizon must be at least 1")]
    HorizonZero,

    #[error("negative probability {value} in kernel row for atom {path}")]
    NegativeProbability { path: String, value: f64 },

    #[error("kernel row for atom {path} sums to {sum}, more than 1e-9 away from 1")]
    RowSumOutOfTolerance { path: String, sum: f64 },

    #[error("no kernel row supplied for non-terminal atom {path}")]
    MissingKernelRow { path: String },

    #[error("time {time} is outside 0..={horizon}")]
    TimeOutOfRange { time: usize, horizon: usize },

    #[error("atom {path} at time {time} is terminal")]
    TerminalAtom { path: String, time: usize },

    #[error("process does not provide values at time {time}")]
    MissingChildValue { time: usize },

    #[error("state {state} is outside the support at atom {path}")]
    OffSupportIndex { state: usize, path: String },

    #[error("conditional mean must vanish, got a mean of norm {norm}")]
    NonzeroConditionalMean { norm: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("root finding did not converge: {0}")]
    RootFindDivergence(String),

    #[error("driver produced a non-finite value at atom {path}, t = {time}")]
    NonFiniteDriverValue { path: String, time: usize },

    #[error("driver is not normalized: {0}")]
    DriverNotNormalized(String),

    #[error("driver depends on y: {0}")]
    DriverDependsOnY(String),

    #[error("balancedness probe failed: {0}")]
    BalancednessProbeFailed(String),

    #[error("oracle inconsistent: {0}")]
    OracleInconsistent(String),

    #[error("zero-hedging/endpoint pair is inconsistent: {0}")]
    InconsistentPair(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("could not parse document: {0}")]
    Document(String),

    #[error("solve failed at atom {path}, t = {time}: {source}")]
    SolveAt {
        path: String,
        time: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps a step-level failure with the atom it occurred at.
    pub(crate) fn at(self, path: String, time: usize) -> Error {
        Error::SolveAt {
            path,
            time,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
