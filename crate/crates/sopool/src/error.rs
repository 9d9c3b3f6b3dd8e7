//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    Shape {
        op: &'static str,
        lhs: String,
        rhs: String,
    },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("batch normalization needs at least 2 rows in train mode, got {0}")]
    DegenerateBatch(usize),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("parse error in {file}: {reason}")]
    Parse { file: String, reason: String },
    #[error("data integrity error: {0}")]
    Integrity(String),
    #[error("stratification error: class {class} has {count} members, need at least {k}")]
    Stratification {
        class: usize,
        count: usize,
        k: usize,
    },
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("enumeration budget exceeded: {0}")]
    Budget(String),
    #[error("results schema mismatch: found version {found}, expected {expected}")]
    Schema { found: u32, expected: u32 },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(
        op: &'static str,
        lhs: impl std::fmt::Display,
        rhs: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
