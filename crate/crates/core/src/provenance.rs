//! Run identification stamped onto every exported table.

use serde::{Deserialize, Serialize};

/// Crate version recorded in outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Hex digest of the run configuration.
    pub config_hash: String,
    pub version: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self { config_hash: config_hash.into(), version: VERSION.to_string() }
    }

    /// Placeholder for library callers without a configuration.
    pub fn unhashed() -> Self {
        Self::new("none")
    }
}

impl Default for Provenance {
    fn default() -> Self {
        Self::unhashed()
    }
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(e.to_string())
}
