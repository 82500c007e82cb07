use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected {expected} bytes, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-canonical scalar encoding")]
    NonCanonicalScalar,

    #[error("invalid group element encoding")]
    InvalidPoint,

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("integrity tag mismatch")]
    Integrity,

    #[error("linear system has no unique solution")]
    Singular,

    #[error("subset enumeration of {0} entries exceeds the size guard")]
    TooLarge(u128),

    #[error("commitment unavailable: {0}")]
    Unavailable(String),

    #[error("counter reservation failed: {0}")]
    CounterPersistence(String),

    #[error("key is locked by another signer")]
    KeyBusy,

    #[error(transparent)]
    Io(#[from] io::Error),
}
