use thiserror::Error;

/// Errors raised by the toolkit. Vertex and row indices in messages are
/// 1-based; the fields themselves hold 0-based indices.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("adjacency entry ({}, {}) is {value}, expected 0 or 1", .row + 1, .col + 1)]
    NonBinaryEntry { row: usize, col: usize, value: i64 },

    #[error("adjacency mask is not square (row {} has {len} entries, expected {n})", .row + 1)]
    NonSquare { row: usize, len: usize, n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("vertex {} is out of range for a graph on {n} vertices", .vertex + 1)]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("design graph lacks the self-loop at vertex {}", .vertex + 1)]
    MissingSelfLoop { vertex: usize },

    #[error("plant graph has isolated node(s) {0:?} (1-based)")]
    IsolatedNodes(Vec<usize>),

    #[error("weights must be strictly positive, got {value} at index {}", .index + 1)]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),

    #[error("family indices must differ (i = j = {})", .0 + 1)]
    SameIndex(usize),

    #[error("family parameter r must be nonzero")]
    ZeroParameter,

    #[error("Riccati value iteration did not converge in {max_iter} iterations (last change {last_change:e}, residual {residual:e})")]
    NoConvergence {
        max_iter: usize,
        last_change: f64,
        residual: f64,
    },

    #[error("B~ᵀ X B~ is numerically singular")]
    SingularInnerMatrix,

    #[error("A is not nilpotent of degree two (max |A²| = {0:e})")]
    NotNilpotent(f64),

    #[error("input gain b_ii is zero")]
    ZeroGain,

    #[error("zI - A_K is singular at z = {re} + {im}i")]
    SingularResolvent { re: f64, im: f64 },

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("ratio is indeterminate: J_strategy = {numerator:e} but J_centralized = 0")]
    IndeterminateRatio { numerator: f64 },

    #[error("eps_b must be strictly positive, got {0}")]
    NonPositiveEpsilon(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
