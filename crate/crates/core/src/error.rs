use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid angular kernel: {0}")]
    InvalidAngularKernel(String),
    #[error("invalid restitution model: {0}")]
    InvalidRestitution(String),
    #[error("invalid collision kernel: {0}")]
    InvalidKernel(String),
    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("integral does not converge: {0}")]
    NonIntegrable(String),
    #[error("weights make the integral infinite: {0}")]
    InvalidWeights(String),
    #[error("infeasible exponents: {0}")]
    InfeasibleExponents(String),
    #[error("elastic restitution is not allowed here")]
    ElasticNotAllowed,
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
