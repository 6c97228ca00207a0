use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("projection onto {path} is ambiguous for point ({x:.3}, {y:.3})")]
    AmbiguousProjection { path: String, x: f64, y: f64 },
    #[error("uncertainty: {0}")]
    Uncertainty(String),
    #[error("invalid step: lethargy became {0}")]
    InvalidStep(f64),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("QP infeasible ({status}); most violated row: {row}")]
    Infeasible {
        status: String,
        row: String,
        dump: Option<Box<String>>,
    },
    #[error("solver: {0}")]
    Solver(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
