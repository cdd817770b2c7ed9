use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("crossing-time supremum diverges: value {value} near m = {m}")]
    UnboundedTau0 { m: f64, value: f64 },

    #[error(
        "Picard iteration did not converge in window {window} after {iterations} iterations \
         (last delta {last_delta:e})"
    )]
    NonConvergence {
        window: usize,
        iterations: usize,
        last_delta: f64,
    },

    #[error("history lookup at t = {t} outside the stored range [{lo}, {hi}]")]
    LookupOutOfWindow { t: f64, lo: f64, hi: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("warmup failed: {0}")]
    Warmup(String),

    #[error("malformed table: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(what: &'static str, value: f64, domain: &'static str) -> Error {
    Error::Domain {
        what,
        value,
        domain,
    }
}
