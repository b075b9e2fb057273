use thiserror::Error;

use crate::cm::EmbeddabilityReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("vertex index {index} out of range for {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("distance data is not embeddable in R^{dimension}: condition ({}) fails", report.first_failed_condition)]
    NotEmbeddable { dimension: usize, report: EmbeddabilityReport },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no nondegenerate {size}-point subset: every candidate base simplex vanishes")]
    NoBaseSimplex { size: usize },

    #[error("determinant ratio {ratio} over the base simplex is not positive")]
    AlphaInfeasible { ratio: f64 },

    #[error("reconstruction residual {residual:e} exceeds the limit {limit:e}")]
    Reconstruction { residual: f64, limit: f64 },

    #[error("internal consistency error: {0}")]
    Inconsistent(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
