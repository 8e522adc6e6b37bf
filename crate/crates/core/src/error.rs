use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("unknown keys: {}", .0.join(", "))]
    Unknown(Vec<String>),
    #[error("{key} must be strictly positive, got {value}")]
    NonPositive { key: String, value: f64 },
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("quadrature did not converge: error estimate {achieved:e} exceeds tolerance {requested:e}")]
    QuadratureNotConverged { achieved: f64, requested: f64 },
    #[error("least-squares fit failed: {0}")]
    Fit(String),
    #[error("transfer function {0} has a pole at the origin; cannot evaluate at Ω = 0")]
    PoleAtOrigin(String),
    #[error("closed loop unstable ({0}); set allow_unstable to simulate anyway")]
    UnstableLoop(String),
    #[error("integration grid too narrow: {0}")]
    GridTooNarrow(String),
    #[error("series too short: need {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("non-finite state at step {step}: theta = {theta}, rate = {rate}")]
    NonFinite { step: usize, theta: f64, rate: f64 },
    #[error("band center {center_hz} Hz is below the frequency resolution {resolution_hz} Hz")]
    BandBelowResolution { center_hz: f64, resolution_hz: f64 },
    #[error("empty band: no grid bins in [{lo_hz}, {hi_hz}] Hz")]
    EmptyBand { lo_hz: f64, hi_hz: f64 },
    #[error("simulation settings: {0}")]
    SimSettings(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for errors that originate in configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidParameter { .. } | Error::Io(_) | Error::Csv(_))
    }
}
