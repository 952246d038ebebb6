use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid head dimension {d}: {reason}")]
    InvalidDimension { d: usize, reason: &'static str },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: u64, hi: u64 },

    #[error("invalid schedule spec `{spec}`: {reason}")]
    InvalidSpec { spec: String, reason: String },

    #[error(
        "unattainable: no base up to {base_max:e} keeps B non-negative on [1, {length}] at d={d}"
    )]
    Unattainable {
        length: u64,
        d: usize,
        base_max: f64,
    },

    #[error("failed to read schedule file {path}: {source}")]
    ScheduleFile {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimension { .. } => "invalid_dimension",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidRange { .. } => "invalid_range",
            Error::InvalidSpec { .. } => "invalid_spec",
            Error::Unattainable { .. } => "unattainable",
            Error::ScheduleFile { .. } => "schedule_file",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
