// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by data loading, model evaluation, and solver configuration.
#[derive(Debug, Error)]
pub enum Error {
    /// Structurally malformed input: ragged CSV rows, unparseable fields,
    /// non-finite values, empty data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A value or parameter violates a model domain.
    #[error("domain violation: {0}")]
    Domain(String),

    /// A value in tabular input violates a model domain. Row and column are
    /// 1-based to match the source file.
    #[error("domain violation at row {row}, column {col}: {message}")]
    DomainAt {
        row: usize,
        col: usize,
        message: String,
    },

    /// Inconsistent or out-of-range configuration (penalty, dispersion,
    /// pruning strategy).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A requested combination is not implemented, e.g. ball-based pruning
    /// for a non-Gaussian model.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Filesystem failure wrapped with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn input(message: impl Into<String>) -> Self {
        Error::Input(message.into())
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub fn domain_at(row: usize, col: usize, message: impl Into<String>) -> Self {
        Error::DomainAt {
            row,
            col,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub fn unsupported(message: impl Into<String>) -> Self {
        Error::Unsupported(message.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
