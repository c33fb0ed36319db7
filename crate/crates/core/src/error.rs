use thiserror::Error;

use crate::types::Violation;

pub type Result<T> = std::result::Result<T, FusionError>;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid response matrix: {}", format_violations(.0))]
    InvalidResponses(Vec<Violation>),

    #[error("probability {0} outside [0, 1]")]
    Domain(f64),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{what} is not column-stochastic: {detail}")]
    NotStochastic { what: &'static str, detail: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
