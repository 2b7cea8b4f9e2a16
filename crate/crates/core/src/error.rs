use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument to {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("{0} has no analytic backward")]
    NoBackward(String),

    #[error("scene placement infeasible: {0}")]
    Infeasible(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Shape {
        op,
        detail: detail.into(),
    })
}

pub(crate) fn domain_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Domain {
        op,
        detail: detail.into(),
    })
}

pub(crate) fn format_err<T>(what: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        what,
        detail: detail.into(),
    })
}
