use thiserror::Error;

use crate::milp::SolveStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("variable group `{0}` is not registered in this model")]
    MissingVariables(&'static str),

    #[error("{what} ended with status {status:?}")]
    NotOptimal { what: String, status: SolveStatus },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid coordinate: {0}")]
    Geo(String),

    #[error("robust transformation: {0}")]
    Robust(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
