use thiserror::Error;

use crate::resources::Violation;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum LosrError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid system type: {0}")]
    InvalidType(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("resource failed validation: {}", format_violations(.0))]
    InvalidResource(Vec<Violation>),

    #[error("invalid correlation table: {0}")]
    InvalidTable(String),

    #[error("invalid assemblage: {0}")]
    InvalidAssemblage(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("decoder does not invert encoder on probe set (max error {0:.3e})")]
    UnverifiedDecoder(f64),

    #[error("invalid analyzer: {0}")]
    InvalidAnalyzer(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, LosrError>;
