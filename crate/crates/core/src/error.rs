use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("imaginary-time relaxation did not converge after {steps} steps (energies {energies:?}, residuals {residuals:?})")]
    NotConverged {
        steps: usize,
        energies: Vec<f64>,
        residuals: Vec<f64>,
    },

    #[error("continuum sum not converged: box doubling changed {pair:?} by {relative_change:.3e} (limit {limit:.1e})")]
    ContinuumNotConverged {
        pair: (usize, usize),
        relative_change: f64,
        limit: f64,
    },

    #[error("non-finite amplitude at step {step} (t = {time:.3} au)")]
    NonFinite { step: usize, time: f64 },

    #[error("norm drift {drift:.3e} at step {step} exceeds {limit:.1e} with the absorber off")]
    NormDrift { step: usize, drift: f64, limit: f64 },

    #[error("two-level integration: step halving changed the amplitudes by {deviation:.3e} at dt = {dt:.3e}")]
    StepHalving { dt: f64, deviation: f64 },

    #[error("detuning calibration rejected: {0}")]
    Calibration(String),

    #[error("scan maximum at the edge of the frequency range (omega = {omega:.6e}); widen the range")]
    PeakAtEdge { omega: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Numerical failures (as opposed to bad input) map to exit code 1 in the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::ContinuumNotConverged { .. }
                | Error::NonFinite { .. }
                | Error::NormDrift { .. }
                | Error::StepHalving { .. }
                | Error::Calibration(_)
                | Error::PeakAtEdge { .. }
        )
    }
}
