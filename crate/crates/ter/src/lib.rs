//! Document-level event extraction via token-event-role matrices.
//!
//! A document's events are represented as one grid per event type: rows are
//! tokens (duplicated where one token fills several roles of the same
//! event), columns are event slots, and cells hold role tags. A stacked
//! bidirectional LSTM encodes every (token, event) pair and one softmax
//! channel per event type predicts its grid; decoding the predicted grids
//! back into argument records is direct cell reading, with no entity
//! recognition or event-chain stage in between.

pub mod channels;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod evaldecode;
pub mod nncore;
pub mod ontology;
pub mod par;
pub mod pipeline;
pub mod terstruct;

use thiserror::Error as ThisError;

/// Crate-wide error type.
///
/// Variants are grouped by who is at fault: [`Error::Invalid`] (and the
/// parse wrappers) mean the inputs or configuration are bad, while
/// [`Error::Runtime`] means the computation itself failed. The CLI maps the
/// former to exit code 1 and the latter to exit code 2.
#[derive(Debug, ThisError)]
pub enum Error {
    /// Bad input data or configuration.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Failure during computation (non-finite values, unwritable outputs).
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed TOML: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for validation problems, 2 for
    /// runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Io(_) | Error::Json(_) | Error::Toml(_) => 1,
            Error::Runtime(_) => 2,
        }
    }
}
