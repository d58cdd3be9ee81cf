use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions or parameters that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed caller input (NaN losses, wrong sequence length, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A learner whose every member has been eliminated.
    #[error("empty model: every member of the policy class has infinite loss")]
    EmptyModel,

    /// The expert is not consistent with the policy class or the supplied data.
    #[error("realizability violation: {0}")]
    Realizability(String),

    /// An exact enumeration that would exceed the path budget.
    #[error("enumeration of {requested} weighted paths exceeds the limit of {limit}")]
    Size { requested: f64, limit: f64 },

    /// One or more constraint failures, listed individually.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}
