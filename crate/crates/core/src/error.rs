use std::io;

use thiserror::Error;

/// Errors that abort an operation. Recoverable conditions (a page with broken
/// markup, a coordinate that fails validation) are not errors; they degrade to
/// absent values and are tallied by the caller.
#[derive(Debug, Error)]
pub enum Error {
    /// The dump is not well-formed XML. `offset` is the byte position the
    /// reader had consumed when the failure surfaced.
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    /// A JSON-lines input had an undecodable line. Lines are 1-based.
    #[error("line {line}: {source}")]
    JsonLine {
        line: u64,
        #[source]
        source: serde_json::Error,
    },

    /// Bad configuration: unreadable config files, schema violations,
    /// inconsistent options. Distinguished so the CLI can exit with a
    /// dedicated status code.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("vector length {got} does not match table dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A candidate label contains a token absent from the embedding table.
    #[error("token {0:?} is not in the embedding table")]
    TokenNotInTable(String),

    /// The merge map does not cover a keyword that reached the manifest.
    #[error("keyword {0:?} has no merged class")]
    UnmappedKeyword(String),

    /// Local east/north offsets are ill-conditioned this close to a pole.
    #[error("latitude {0} is too close to a pole for tile planning")]
    PolarLatitude(f64),

    #[error("cannot fit section weights on an empty corpus")]
    EmptyCorpus,
}

impl Error {
    /// Process exit code for CLI use: configuration problems exit 2, every
    /// other fatal error exits 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
