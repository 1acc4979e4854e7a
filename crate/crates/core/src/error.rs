use thiserror::Error;

/// Errors surfaced by the numerical core.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension {0} out of range (1..=4)")]
    DimensionOutOfRange(usize),

    #[error("resolution {0} too small on axis {1} (need >= 3)")]
    ResolutionTooSmall(usize, usize),

    #[error("box has non-positive extent on axis {0}")]
    DegenerateBox(usize),

    #[error("mask does not fit inside the box on axis {0}")]
    MaskOutsideBox(usize),

    #[error("periodic boundary mode is incompatible with a mask")]
    PeriodicWithMask,

    #[error("mask leaves no interior nodes")]
    EmptyInterior,

    #[error("active node count {count} exceeds cap {cap}")]
    TooManyNodes { count: usize, cap: usize },

    #[error("non-finite sample at node {node} component {component}")]
    NonFiniteSample { node: usize, component: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("Jacobi eigenvalue iteration failed to converge after {0} sweeps")]
    JacobiNoConvergence(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    #[error("flow blew up at t = {t} (step {step}): {reason}")]
    BlowUp { t: f64, step: usize, reason: String },

    #[error("inner linear solve did not converge within {max_inner} iterations (residual {residual})")]
    InnerSolveDiverged { max_inner: usize, residual: f64 },

    #[error("rescaled point {0:?} falls outside the source domain")]
    TargetOutsideSource(Vec<f64>),

    #[error("radius {0} leaves the domain reachable from the center")]
    RadiusLeavesDomain(f64),

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("cannot reach area-decreasing margin {0}")]
    UnsatisfiableMargin(f64),

    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
