use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SenseError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid Zadoff-Chu root {root} for length {length}")]
    InvalidRoot { root: usize, length: usize },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("non-positive input: {0}")]
    NonPositiveInput(&'static str),

    #[error("invalid counts: {0}")]
    InvalidCounts(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid has no points inside the prior box")]
    EmptyGrid,

    #[error("initial point lies outside the prior box")]
    InitOutsidePrior,

    #[error("search bounds too narrow: {0}")]
    BoundsTooNarrow(String),

    #[error("singular normal equations")]
    SingularNormalEquations,

    #[error("iteration diverged: {0}")]
    Diverged(String),

    #[error("singular Fisher information matrix")]
    SingularFisher,

    #[error("all fusion weights are zero")]
    AllZeroWeights,

    #[error("empty input list")]
    EmptyList,
}

pub type Result<T> = std::result::Result<T, SenseError>;
