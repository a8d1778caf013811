use thiserror::Error;

/// Errors raised by the lab. Validation failures of a conductivity are not
/// errors; they are reported as data by [`crate::conductivity::validate_class`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("interfaces {lower} and {upper} cross or touch near x' = ({x1:.4}, {x2:.4})")]
    CrossingInterfaces {
        lower: usize,
        upper: usize,
        x1: f64,
        x2: f64,
    },
    #[error("degenerate element {element} (signed volume {volume:e})")]
    DegenerateElement { element: usize, volume: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point {point:?} lies outside every subdomain")]
    OutsideDomain { point: [f64; 3] },
    #[error("singular kernel evaluation: source and target coincide")]
    Singularity,
    #[error("point lies on the interface; request a one-sided gradient")]
    OnInterface,
    #[error("matrix is not symmetric positive definite (eigenvalue {eigenvalue:e})")]
    NotSpd { eigenvalue: f64 },
    #[error("non-differentiable sample at {point:?}")]
    NonDifferentiable { point: Vec<f64> },
    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("conjugate gradient stagnated after {iterations} iterations (relative residual {residual:e})")]
    CgStagnation {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("singular interior block: {0}")]
    SingularBlock(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),
    #[error("source point too close to the boundary (distance {distance:.4}, need {required:.4})")]
    SourceTooClose { distance: f64, required: f64 },
    #[error("split Green's function requires a flat local interface; use the mollified method")]
    CurvedInterface,
    #[error("radius {radius:.4} below resolution guard {guard:.4}")]
    BelowResolution { radius: f64, guard: f64 },
    #[error("point inside the excluded region U: {0:?}")]
    InsideExcluded([f64; 3]),
    #[error("augmentation block overlaps the domain")]
    Overlap,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
