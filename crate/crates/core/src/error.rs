use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("weight `{weight}` is not integrable: {detail}")]
    Integrability { weight: String, detail: String },

    #[error("resource limit exceeded: {what} would need {requested}, limit is {limit}")]
    Resource {
        what: &'static str,
        requested: u64,
        limit: u64,
    },

    #[error("self-map violation: phi({re}, {im}) has modulus {modulus} > 1")]
    SelfMapViolation { re: f64, im: f64, modulus: f64 },

    #[error("non-finite integrand value {value} at node ({re}, {im})")]
    NonFinite { re: f64, im: f64, value: f64 },

    #[error("degenerate basepoint ({re}, {im}): {detail}")]
    DegenerateBasepoint { re: f64, im: f64, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Integrability { .. } => "integrability",
            Error::Resource { .. } => "resource",
            Error::SelfMapViolation { .. } => "self_map_violation",
            Error::NonFinite { .. } => "non_finite",
            Error::DegenerateBasepoint { .. } => "degenerate_basepoint",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
