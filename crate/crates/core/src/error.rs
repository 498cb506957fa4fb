use crate::types::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid churn event: {0}")]
    Event(String),
    #[error("malformed state document at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("false identifier {id} referenced by {context}")]
    FalseIdentifier { id: NodeId, context: String },
    #[error("inconsistent state: {0}")]
    InvalidState(String),
    #[error("invalid p-forest: {0}")]
    InvalidForest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
