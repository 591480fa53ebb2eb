use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("quadrature did not converge: achieved relative error {achieved:.3e} after {subdivisions} subdivisions")]
    Quadrature { achieved: f64, subdivisions: usize },
    #[error("degenerate truncation: region has negligible probability mass ({0:.3e})")]
    DegenerateTruncation(f64),
    #[error("observation {0} has zero density under every component")]
    ZeroResponsibility(usize),
    #[error("component {component} collapsed: {reason}")]
    Collapsed { component: usize, reason: String },
    #[error("initialization failed: {0}")]
    Init(String),
    #[error("all {n} starts failed: {causes}")]
    AllStartsFailed { n: usize, causes: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
