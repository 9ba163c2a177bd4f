use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("exponent {0} outside the open interval (0, 1)")]
    ExponentOutOfRange(f64),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("point {x} is singular for this kernel quantity: {reason}")]
    SingularInput { x: f64, reason: &'static str },

    #[error("quadrature did not converge: {0}")]
    QuadratureNonconvergence(String),

    #[error("quadrature node {x} lies within {tol:e} of the boundary")]
    NodeTooCloseToBoundary { x: f64, tol: f64 },

    #[error("coefficient support violation: {0}")]
    SupportViolation(String),

    #[error("exterior datum violates its support constraint: {0}")]
    InvalidExteriorDatum(String),

    #[error("observation point {x} is closer than one cell to the closed domain")]
    ObservationTooClose { x: f64 },

    #[error("eigenvalue condition failed: sigma_min = {sigma_min:e}, threshold = {threshold:e}")]
    SingularSystem { sigma_min: f64, threshold: f64 },

    #[error("ill-posed regime: {0}")]
    IllPosed(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no step passed the eigenvalue guard after {halvings} halvings")]
    GuardFailureUnrecoverable { halvings: usize },

    #[error("misfit increased on {0} consecutive accepted steps")]
    Divergence(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
