use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("{op}: incompatible shapes {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },

    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("variable belongs to a different tape")]
    ForeignVariable,

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: usize },

    #[error("function is not differentiable at coordinate {index} (one-sided slopes {left} vs {right})")]
    NonDifferentiable { index: usize, left: f64, right: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no configuration fits {target} parameters (reachable range {min}..={max})")]
    BudgetInfeasible { target: usize, min: usize, max: usize },

    #[error("coordinate {value} at flat index {index} is outside [{lo}, {hi}]")]
    CoordOutOfRange {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("grid has no samples")]
    EmptyGrid,

    #[error("metric trace is empty")]
    EmptyTrace,

    #[error("unknown transform `{0}`")]
    UnknownTransform(String),

    #[error("image {rows}x{cols} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        rows: usize,
        cols: usize,
        window: usize,
    },

    #[error("axis pick out of range: {0}")]
    AxisOutOfRange(String),

    #[error("payload is {actual} bytes, descriptor implies {expected}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("missing sidecar descriptor {0}")]
    MissingSidecar(PathBuf),

    #[error("unknown dtype `{0}`")]
    UnknownDtype(String),

    #[error("not a checkpoint file (bad magic)")]
    BadMagic,

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("block `{block}` has shape {found:?}, expected {expected:?}")]
    BlockShape {
        block: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("missing block `{0}`")]
    MissingBlock(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
