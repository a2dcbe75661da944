//! Crate-wide error type.
//!
//! Variants are grouped by the stage that raises them so the CLI can map them
//! onto exit codes: [`Error::is_validation`] marks bad inputs (exit 2),
//! everything else is a numerical failure (exit 3).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // -- grid --
    #[error("grid size must be an odd integer >= 17, got {n}")]
    InvalidGridSize { n: usize },
    #[error("grid half-width must be positive and finite, got {value}")]
    InvalidHalfWidth { value: f64 },
    #[error("sampled value at ({x}, {y}) is not finite")]
    NonFiniteSample { x: f64, y: f64 },
    #[error("grid too small for interior differences (n = {n} < 3)")]
    GridTooSmall { n: usize },
    #[error("point ({x}, {y}) lies outside the grid square")]
    OutOfDomain { x: f64, y: f64 },
    #[error("interpolation cell at ({x}, {y}) touches undefined values")]
    UndefinedRegion { x: f64, y: f64 },

    // -- operators --
    #[error(
        "matrix is not monotone-stencil admissible: |a12| = {a12_abs} exceeds a diagonal \
         entry (a11 = {a11}, a22 = {a22})"
    )]
    NonMonotoneStencil { a11: f64, a22: f64, a12_abs: f64 },
    #[error(
        "ellipticity violated: eigenvalues [{eig_min}, {eig_max}] not inside \
         [{lambda}, {big_lambda}]"
    )]
    EllipticityViolated {
        eig_min: f64,
        eig_max: f64,
        lambda: f64,
        big_lambda: f64,
    },
    #[error("smoothing width must be positive, got {eps}")]
    InvalidSmoothingWidth { eps: f64 },
    #[error("reduced problems require m >= 1, got {m}")]
    InvalidAnisotropy { m: f64 },

    // -- solver --
    #[error("tolerance must be positive, got {tol}")]
    InvalidTolerance { tol: f64 },
    #[error(
        "relaxation did not reach tolerance {tol} within {sweeps} sweeps \
         (last residual {residual})"
    )]
    IterationCapExceeded { tol: f64, sweeps: usize, residual: f64 },
    #[error("policy iteration exceeded {max_updates} policy updates (residual {residual})")]
    PolicyCapExceeded { max_updates: usize, residual: f64 },
    #[error("boundary trace grid does not match the requested solve grid")]
    GridMismatch,

    // -- two-phase --
    #[error("direction ({x}, {y}) is not a unit vector")]
    NonUnitNormal { x: f64, y: f64 },
    #[error("flux law must be evaluated at b >= 0, got {b}")]
    NegativeSlope { b: f64 },
    #[error("flux law failed certification: {reason}")]
    FluxLawRejected { reason: String },
    #[error("tangent two-plane requested at a node where u = 0")]
    TangentAtZero,
    #[error("tangent two-plane requested on the boundary ring")]
    TangentOnBoundary,
    #[error("comparison window contains no nodes inside the validity region")]
    EmptyWindow,
    #[error("profile step underflow: range {span} cannot be resolved")]
    StepUnderflow { span: f64 },
    #[error("neither side of the region boundary dominates; no comparison hypothesis")]
    NoBoundaryDomination,

    // -- free boundary --
    #[error("one-sided derivative has only {valid} valid samples (need >= {needed})")]
    NotEnoughSamples { valid: usize, needed: usize },
    #[error("every free-boundary vertex was skipped by the jump survey")]
    EmptyJumpSurvey,
    #[error("vertex ({segment}, {index}) does not exist on the free boundary")]
    NoSuchVertex { segment: usize, index: usize },

    // -- regularity --
    #[error("radius {radius} exceeds half the grid half-width {half_width}")]
    RadiusTooLarge { radius: f64, half_width: f64 },
    #[error("no admissible radii: all entries below the 8h resolution floor or outside the grid")]
    NoAdmissibleRadii,
    #[error("point ({x}, {y}) is not within one cell of the free boundary (|u| = {value})")]
    NotOnFreeBoundary { x: f64, y: f64, value: f64 },
    #[error("expansion fit is ill conditioned: only {nodes} nodes in the smallest ball (need >= 40)")]
    IllConditionedFit { nodes: usize },
    #[error("interface normal ({x}, {y}) is not grid axis aligned")]
    MisalignedInterface { x: f64, y: f64 },
    #[error("least-squares system is singular")]
    SingularSystem,

    // -- manufactured --
    #[error("manufactured catalog entry '{name}' rejected: {reason}")]
    OracleRejected { name: String, reason: String },

    // -- reporting / config --
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("convergence study needs a manufactured boundary with a closed-form truth")]
    NoManufacturedTruth,
    #[error("convergence study needs at least 3 grid sizes, got {got}")]
    TooFewResolutions { got: usize },
    #[error("stage '{stage}' failed: {source}")]
    StageFailed {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        use Error::*;
        match self {
            InvalidGridSize { .. }
            | InvalidHalfWidth { .. }
            | GridTooSmall { .. }
            | InvalidSmoothingWidth { .. }
            | InvalidAnisotropy { .. }
            | InvalidTolerance { .. }
            | NonMonotoneStencil { .. }
            | EllipticityViolated { .. }
            | NonUnitNormal { .. }
            | NegativeSlope { .. }
            | InvalidConfig { .. }
            | NoManufacturedTruth
            | TooFewResolutions { .. } => true,
            StageFailed { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
