use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph parameters: {0}")]
    InvalidParams(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("destination node {0} is unreachable from the source")]
    Unreachable(usize),

    #[error("brute-force enumeration refused: {paths} paths exceed the cap of {cap}")]
    EnumerationCap { paths: u128, cap: u128 },

    #[error("token {0:?} is not in the vocabulary")]
    OutOfVocab(String),

    #[error("token id {0} is not in the vocabulary")]
    UnknownId(u32),

    #[error("cannot encode an empty trace")]
    EmptyTrace,

    #[error("syntax errors while decoding: {0}")]
    Syntax(String),

    #[error("{0}")]
    Corpus(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
