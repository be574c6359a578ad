use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite position or velocity at ring {ring}")]
    NonFinite { ring: usize },

    #[error(
        "profile support exceeds the box: fraction {overflow_fraction:.3e} of |mass| lies outside"
    )]
    SupportOverflow { overflow_fraction: f64 },

    #[error("eps = {eps} is under-resolved: need at least nr = {required_nr}, nz = {required_nz} on this box")]
    UnderResolved {
        eps: f64,
        required_nr: usize,
        required_nz: usize,
    },

    #[error("grid does not cover the cloud with the required margin; need box {required:?}")]
    GridTooSmall { required: [f64; 4] },

    #[error("Picard iteration did not converge after {} iterates (last monitor {:e})", .monitor.len(), .monitor.last().copied().unwrap_or(f64::NAN))]
    PicardNotConverged { monitor: Vec<f64> },

    #[error("bound `{property}` violated at {point:?}: value {value:e} > bound {bound:e}")]
    BoundViolation {
        property: &'static str,
        point: [f64; 3],
        value: f64,
        bound: f64,
    },

    #[error("kernel bound scan did not converge: {0}")]
    ScanNotConverged(String),

    #[error("test function rejected: {0}")]
    TestFunction(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable tag for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::NonFinite { .. } => "non_finite",
            Error::SupportOverflow { .. } => "support_overflow",
            Error::UnderResolved { .. } => "under_resolved",
            Error::GridTooSmall { .. } => "grid_too_small",
            Error::PicardNotConverged { .. } => "picard_not_converged",
            Error::BoundViolation { .. } => "bound_violation",
            Error::ScanNotConverged(_) => "scan_not_converged",
            Error::TestFunction(_) => "test_function",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
