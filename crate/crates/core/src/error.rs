//! Error type shared by every module.

use thiserror::Error;

/// Grid location attached to numerical failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(i={}, j={}, k={})", self.i, self.j, self.k)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shooting did not converge: {0}")]
    NonConvergence(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("field must be positive above the wall; found {value:e} at {at}")]
    NonPositiveField { value: f64, at: Location },

    #[error("u fell below the floor {floor:e}: min {min:e} at {at}")]
    DegenerateU { min: f64, floor: f64, at: Location },

    #[error("characteristics cross at x-station {station} (paths {a} and {b})")]
    CrossingDetected { station: usize, a: usize, b: usize },

    #[error("boundary data breaks envelope `{check}` (margin {margin:e})")]
    EnvelopeViolation { check: String, margin: f64 },

    #[error("quasi-linearization diverged at slab {slab}, line {line}: change {change:e} after {iters} sweeps")]
    InnerDivergence {
        slab: usize,
        line: usize,
        iters: usize,
        change: f64,
    },

    #[error("admissibility lost at slab {slab}: {reason}")]
    AdmissibilityLost { slab: usize, reason: String },

    #[error("Picard loop stalled after {iterations} iterations (last delta {last_delta:e})")]
    PicardStall { iterations: usize, last_delta: f64 },

    #[error("state and background live on different grids")]
    GridMismatch,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("snapshot header mismatch: {0}")]
    VersionMismatch(String),

    #[error("unknown plot quantity `{0}`")]
    UnknownQuantity(String),

    #[error("maximum-principle hypothesis `{which}` fails (margin {margin:e} at {at})")]
    HypothesisFailed {
        which: String,
        margin: f64,
        at: Location,
    },

    #[error("maximum-principle conclusion fails: f = {value:e} at {at}")]
    ConclusionFailed { value: f64, at: Location },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code class used by the CLI: 2 for usage/parse problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::InvalidInput(_)
            | Error::UnknownQuantity(_)
            | Error::VersionMismatch(_)
            | Error::GridMismatch
            | Error::DomainError(_)
            | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
