//! Error type shared across the crate, with process exit codes for the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config syntax: {0}")]
    ConfigSyntax(String),

    #[error("config semantics: {0}")]
    ConfigSemantics(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("grid too small for the initial packet: {0}")]
    GridTooSmall(String),

    #[error("grid under-resolved: packet width {sigma} < 4 x spacing {spacing}")]
    GridUnderResolved { sigma: f64, spacing: f64 },

    #[error("basis mismatch: expected {expected} basis")]
    BasisMismatch { expected: &'static str },

    #[error("sector mismatch: {0}")]
    SectorMismatch(String),

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("boundary flux {flux:.3e} exceeds {limit:.3e} of trace at t = {t}")]
    BoundaryFlux { flux: f64, limit: f64, t: f64 },

    #[error("insufficient decay in series: max log-drop {max_drop:.3} < 0.5")]
    InsufficientDecay { max_drop: f64 },

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("trace too small: {0:.3e}")]
    TraceTooSmall(f64),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code contract: 0 success, 2 config syntax, 3 config
    /// semantics/stability, 4 numerical instability, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigSyntax(_) => 2,
            Error::ConfigSemantics(_)
            | Error::InvalidParams(_)
            | Error::GridTooSmall(_)
            | Error::GridUnderResolved { .. }
            | Error::BasisMismatch { .. }
            | Error::SectorMismatch(_)
            | Error::TraceTooSmall(_) => 3,
            Error::Instability(_) | Error::BoundaryFlux { .. } => 4,
            Error::InsufficientDecay { .. } | Error::FitFailed(_) => 3,
            Error::Io(_) => 5,
        }
    }
}
