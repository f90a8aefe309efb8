use thiserror::Error;

/// Errors produced by the model, the analysis routines and the simulator.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("relative error on `{name}` makes its nominal value non-positive ({value})")]
    InvalidFraction { name: String, value: f64 },
    #[error("cable force is zero, direction undefined")]
    ZeroForce,
    #[error("thrust direction has no vertical component")]
    DegenerateThrust,
    #[error("attitude undefined: zero internal force and zero xi give a continuum of equilibria")]
    UndefinedAttitude,
    #[error("sensitivities require a non-zero internal force")]
    DegenerateInternalForce,
    #[error("non-finite state at t = {time} s ({what})")]
    NonFiniteState { time: f64, what: String },
    #[error("stability verdict {found} disagrees with the expected {expected} for branch {branch}")]
    StabilityDiscrepancy {
        branch: String,
        expected: String,
        found: String,
    },
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
