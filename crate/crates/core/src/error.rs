use thiserror::Error;

use crate::network::StructuralError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network failed validation:\n{}", format_errors(.0))]
    Invalid(Vec<StructuralError>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contingency spec rejected: {0}")]
    Contingency(String),

    #[error("singular KKT system (pivot ratio {ratio:.3e}, dimension {dim})")]
    SingularKkt { ratio: f64, dim: usize },

    #[error("iterate diverged at iteration {iter}: {detail}")]
    Diverged { iter: usize, detail: String },

    #[error("{0}")]
    Unsupported(String),

    #[error("invalid parameter selector: {0}")]
    Selector(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn format_errors(errors: &[StructuralError]) -> String {
    errors
        .iter()
        .map(|e| format!("  - {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;
