use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric error: {what} (residual {residual:e})")]
    Numeric { what: String, residual: f64 },
    #[error("constraint violated at site {site}: {detail}")]
    Constraint { site: usize, detail: String },
    #[error("impossible constraint: both admissible pieces have zero mass")]
    Impossible,
    #[error("unreliable estimate at bridge {bridge}: effective sample size {ess:.1} < 10 (partial log-probability {partial:.4})")]
    Unreliable {
        bridge: usize,
        ess: f64,
        partial: f64,
    },
    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
