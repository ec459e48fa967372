use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vec3 of a non-pure quaternion (scalar part {0})")]
    NotPure(f64),
    #[error("quaternion norm {0} is not within tolerance of 1")]
    NotUnit(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown trajectory id `{0}`")]
    UnknownTrajectory(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
