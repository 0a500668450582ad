use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent arguments (dimension mismatch, empty sample,
    /// kernel mismatch, out-of-range parameter).
    #[error("invalid input: {0}")]
    Input(String),
    /// An iterative routine failed to converge or a factorization broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// No eigenvalue of an embedded covariance survived the floor.
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    /// A value lies outside the domain of a function, e.g. `det2` with `γ ≤ -1`.
    #[error("domain error: {0}")]
    Domain(String),
    /// An explicit feature map was requested for a kernel without one.
    #[error("unsupported oracle: {0}")]
    UnsupportedOracle(String),
    /// The data cannot support the request, e.g. all points identical.
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    /// A distribution spec whose rejection sampler essentially never accepts.
    #[error("pathological distribution spec: {0}")]
    Pathological(String),
    /// A textual spec (kernel or distribution grammar) could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
