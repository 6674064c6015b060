use thiserror::Error;

use crate::sparse::SparseError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("output node is not a scalar")]
    NotScalar,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("location ({x}, {y}) lies outside the mesh")]
    OutsideMesh { x: f64, y: f64 },
    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),
    #[error("rational approximation failed: {0}")]
    Rational(String),
    #[error("prior construction failed: {0}")]
    Prior(String),
    #[error("model evaluation failed at parameters {params:?}: {source}")]
    Evaluation {
        params: Vec<f64>,
        #[source]
        source: Box<Error>,
    },
    #[error("non-finite log-posterior at initialization")]
    NonFiniteStart,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
