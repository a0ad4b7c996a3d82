use thiserror::Error;

/// Invalid model parameter, rejected at construction.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameter `{field}`: {message}")]
pub struct ParamError {
    pub field: &'static str,
    pub message: String,
}

impl ParamError {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self { field, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CloudError {
    #[error("axis {axis}: extent must be positive and finite, got {extent}")]
    DegenerateExtent { axis: usize, extent: f64 },
    #[error("axis {axis}: need at least 2 nodes, got {count}")]
    TooFewNodes { axis: usize, count: usize },
    #[error("grids of dimension {0} are not supported (1 to 3)")]
    Dimension(usize),
    #[error("stencil size {n_s} outside 1..={n_nodes}")]
    StencilSize { n_s: usize, n_nodes: usize },
    #[error("boundary node {node} is not covered by any boundary segment")]
    UncoveredBoundary { node: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("shape parameter must be positive, got {0}")]
    ShapeParameter(f64),
    #[error("local interpolation matrix of stencil {stencil} is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { stencil: usize, pivot: usize },
    #[error("node {node} lacks its axis-{axis} neighbour required by the interior operator")]
    MissingNeighbor { node: usize, axis: usize },
    #[error("axis neighbour {neighbor} of node {node} is outside the node's stencil; increase n_s")]
    NeighborOutsideStencil { node: usize, neighbor: usize },
    #[error("boundary node {node} has a zero outward normal")]
    ZeroNormal { node: usize },
    #[error("expected {expected} rows, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("matrix is {rows}x{cols}, right-hand side has {rhs} entries")]
    Dimension { rows: usize, cols: usize, rhs: usize },
    #[error("row {row} has no nonzero entries")]
    EmptyRow { row: usize },
    #[error("matrix is singular or factorization broke down (worst row {row}, residual {residual:e})")]
    Singular { row: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("Picard iteration did not converge in {iterations} iterations at t = {t} h; increment norms {history:?}")]
    NonConvergence { t: f64, iterations: usize, history: Vec<f64> },
    #[error("linear solve failed at t = {t} h, Picard iteration {iteration}")]
    LinearSolve {
        t: f64,
        iteration: usize,
        #[source]
        source: SolveError,
    },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("non-finite pressure head at node {node}, t = {t} h")]
    NonFinite { node: usize, t: f64 },
}

impl StepError {
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, StepError::NonConvergence { .. } | StepError::NonFinite { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("time steps must be strictly decreasing")]
    NotDecreasing,
    #[error("error values must be positive, got {0:e}")]
    NonPositive(f64),
}
