use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("solver failed after {iterations} iterations: {reason} (residual {residual:e})")]
    Solver {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("invalid state: {0}")]
    State(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
