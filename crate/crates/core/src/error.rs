use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("degenerate polygon: zero area or fewer than 3 vertices")]
    DegeneratePolygon,
    #[error("point ({x}, {y}) lies outside the crop region")]
    OutsideCrop { x: f64, y: f64 },
    #[error("line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("feature layout hash mismatch: weights built for {found}, engine expects {expected}")]
    LayoutMismatch { expected: String, found: String },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("weight file: {0}")]
    Weights(String),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("ablation needs at least one feature group")]
    EmptyGroupSet,
    #[error("no frames available for temporal filtering")]
    NoFrames,
    #[error("confusion counts are all zero")]
    EmptyCounts,
    #[error("frame {got} arrived after frame {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
