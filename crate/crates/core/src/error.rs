use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chart spec: {0}")]
    InvalidSpec(String),

    #[error("singular metric at node {node} (det = {det:e})")]
    SingularMetric { node: usize, det: f64 },

    #[error("metric is not positive definite at node {node}")]
    NotPositiveDefinite { node: usize },

    #[error("slot {slot} out of range for valence ({up},{down})")]
    SlotOutOfRange { slot: usize, up: usize, down: usize },

    #[error("mask selects no nodes")]
    EmptyMask,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported dimension {0}")]
    DimensionUnsupported(usize),

    #[error("parse error at byte {offset}: expected {}", expected.join(" | "))]
    Parse {
        offset: usize,
        expected: Vec<String>,
    },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("vector must be nonzero")]
    ZeroVector,

    #[error("w must have zero mean on the circle (mean = {mean:e})")]
    NonZeroMean { mean: f64 },

    #[error("U-flat is not closed: residual {residual:e} exceeds {tolerance:e}")]
    ClosednessViolated { residual: f64, tolerance: f64 },

    #[error("W is not g-symmetric: residual {residual:e} exceeds {tolerance:e}")]
    AsymmetricW { residual: f64, tolerance: f64 },

    #[error("warping function must be positive (min = {min:e})")]
    NonPositiveWarp { min: f64 },

    #[error("W0 must have the form c n⊗n with unit n: {0}")]
    BadW0Shape(String),

    #[error("invalid generator input: {0}")]
    InvalidInput(String),

    #[error("constraint `{name}` violated: {residual:e} > {tolerance:e}")]
    ConstraintViolation {
        name: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("u degenerate at t = {t}: min u = {min_u:e}")]
    DegenerateU { t: f64, min_u: f64 },

    #[error("step rejected at t = {t}: {reason}")]
    StepRejected { t: f64, reason: String },

    #[error("blow-up at t = {t}: {field} norm {value:e}")]
    Blowup { t: f64, field: String, value: f64 },

    #[error("lapse must be positive (min = {min:e} at t = {t})")]
    NonPositiveLapse { t: f64, min: f64 },

    #[error("signature error: {0}")]
    Signature(String),

    #[error("Dirac current is not real: imaginary part {imag:e}")]
    NonRealCurrent { imag: f64 },

    #[error("grid dump format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
