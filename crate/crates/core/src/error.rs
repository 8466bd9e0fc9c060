use thiserror::Error;

/// Errors surfaced by the floorplan pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("component geometry outside canvas: {0}")]
    OutOfCanvas(String),
    #[error("dimension mismatch: {0}")]
    BadDims(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("{0} visible doors exceed the {1} prepared query embeddings")]
    TooManyDoors(usize, usize),
    #[error("{preds} predictions cannot cover {gts} ground-truth components")]
    TooFewQueries { preds: usize, gts: usize },
    #[error("no matched pairs to average over")]
    NoMatches,
    #[error("no room masks to snap doors onto")]
    NoRooms,
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("unknown component type label {0:?}")]
    UnknownLabel(String),
    #[error("invalid floorplan: {0}")]
    InvalidPlan(String),
    #[error("weight bundle: {0}")]
    BadWeights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
