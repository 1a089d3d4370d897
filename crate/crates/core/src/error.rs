//! Error type shared by all estimation and simulation routines.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A bandwidth (or denominator bandwidth) was not strictly positive.
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),

    /// An unknown preset model id was requested.
    #[error("unknown preset model id {0} (expected 1..=4)")]
    InvalidModel(u32),

    /// A parameter failed validation; the message names the parameter.
    #[error("{0}")]
    InvalidParameter(String),

    /// Euler-Maruyama produced a non-finite state.
    #[error("simulation diverged on path {path} at time {time:.6}")]
    SimulationDiverged { path: usize, time: f64 },

    /// The density floor resolved to zero (identically-zero density under a
    /// data-driven floor), so the drift ratio is undefined everywhere.
    #[error("degenerate density: floor value is zero on the evaluation grid")]
    DegenerateDensity,

    /// The kernel-sum denominator of the weight representation vanished.
    #[error("degenerate weights: kernel denominator vanished at x = {x}")]
    DegenerateWeights { x: f64 },

    /// Leave-one-out constructions need at least two paths.
    #[error("leave-one-out requires at least 2 paths, got {0}")]
    InsufficientPaths(usize),

    /// No bandwidth on the grid produced a finite criterion value.
    #[error("bandwidth selection failed: no finite criterion value on the grid")]
    SelectionFailed,

    /// An error raised inside a Monte-Carlo replication, tagged with its index.
    #[error("replication {rep}: {source}")]
    Replication {
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    /// An ensemble CSV file could not be parsed.
    #[error("malformed ensemble CSV: {0}")]
    MalformedCsv(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the index of the replication that produced it.
    pub fn in_replication(self, rep: usize) -> Error {
        Error::Replication {
            rep,
            source: Box::new(self),
        }
    }
}
