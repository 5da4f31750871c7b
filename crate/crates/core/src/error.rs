use std::path::PathBuf;

use crate::lattice::{Order, SiteIndex};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("state has order {found:?} but operation requires {expected:?}")]
    OrderMismatch { expected: Order, found: Order },

    #[error("non-finite value at step {step} (t = {time}) on site {site}")]
    IntegrationBlowup {
        step: u64,
        time: f64,
        site: SiteIndex,
    },

    #[error("incompatible inputs: {0}")]
    Mismatch(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("analysis failed: {0}")]
    Analysis(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            field,
            reason: reason.into(),
        }
    }
}
