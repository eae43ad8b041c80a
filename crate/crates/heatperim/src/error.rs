//! Error type shared across the crate.

use thiserror::Error;

/// Errors in space construction, solver runs, and experiment plumbing.
#[derive(Error, Debug)]
pub enum Error {
    #[error("point index {index} out of range for space of {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("metric axiom violated: {0}")]
    MetricViolation(String),
    #[error("proximity graph disconnected: {components} components (sizes {sizes:?})")]
    Disconnected { components: usize, sizes: Vec<usize> },
    #[error("point {point} is not covered by the net (sum of bump functions is zero)")]
    NotCovered { point: usize },
    #[error("no admissible probe: every probe denominator vanished")]
    NoAdmissibleProbe,
    #[error("Krylov exponential did not converge within the iteration budget (residual {residual:.3e})")]
    KrylovNoConvergence { residual: f64 },
    #[error("eigensolver failed at vertex {vertex}: {detail}")]
    Eigensolver { vertex: usize, detail: String },
    #[error("infeasible terminal configuration: {0}")]
    InfeasibleCut(String),
    #[error("ladder error: {0}")]
    Ladder(String),
    #[error("insufficient samples in the decay regime d^2/t in [1,10]: found {found}")]
    InsufficientSamples { found: usize },
    #[error("unknown builder '{0}'")]
    UnknownBuilder(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure in stage '{stage}': {detail}")]
    Numerical { stage: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
