use std::io;

use thiserror::Error;

/// Everything that can go wrong while building, loading or checking a design.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The object is malformed (bad partition, repeated point, id out of range).
    /// Distinct from a coverage failure, which is reported through `CoverageReport`.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("catalog format error at line {line}: {msg}")]
    CatalogFormat { line: usize, msg: String },

    #[error("catalog entry `{id}` failed verification: {detail}")]
    CatalogIntegrity { id: String, detail: String },

    #[error("unknown catalog entry `{0}`")]
    UnknownEntry(String),

    #[error("no ingredient available for {0}")]
    UnsatisfiedIngredient(String),

    #[error("construction `{step}` produced an invalid design: {detail}")]
    ConstructionIntegrity { step: String, detail: String },

    #[error("cannot plan v={v}: {reason}")]
    Planning { v: usize, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("design file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
