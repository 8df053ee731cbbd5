//! Process-level error classification; each variant maps to an exit code.

use std::fmt;

#[derive(Debug)]
pub enum AppError {
    /// exit 2
    Config(String),
    /// exit 3
    Data(String),
    /// exit 4
    Numeric(String),
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "configuration error: {}", m),
            AppError::Data(m) => write!(f, "data error: {}", m),
            AppError::Numeric(m) => write!(f, "numerical failure: {}", m),
        }
    }
}

impl std::error::Error for AppError {}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Data(_) => 3,
            AppError::Numeric(_) => 4,
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> AppError {
        AppError::Data(format!("{}: {}", context, e))
    }
}

impl From<brbvs_core::SimError> for AppError {
    fn from(e: brbvs_core::SimError) -> Self {
        match e {
            brbvs_core::SimError::InvalidConfig(m) => AppError::Config(m),
            other => AppError::Numeric(other.to_string()),
        }
    }
}

impl From<brbvs_core::FitError> for AppError {
    fn from(e: brbvs_core::FitError) -> Self {
        AppError::Numeric(e.to_string())
    }
}

impl From<brbvs_core::LikelihoodError> for AppError {
    fn from(e: brbvs_core::LikelihoodError) -> Self {
        AppError::Numeric(e.to_string())
    }
}

impl From<brbvs_core::BrbvsError> for AppError {
    fn from(e: brbvs_core::BrbvsError) -> Self {
        match e {
            brbvs_core::BrbvsError::InvalidParams(m) => AppError::Config(m),
            other => AppError::Numeric(other.to_string()),
        }
    }
}

impl From<brbvs_core::DatasetError> for AppError {
    fn from(e: brbvs_core::DatasetError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<brbvs_core::benchmark::BenchError> for AppError {
    fn from(e: brbvs_core::benchmark::BenchError) -> Self {
        AppError::Numeric(e.to_string())
    }
}
