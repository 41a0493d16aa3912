use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported sphere dimension n = {0} (supported: 1, 2)")]
    UnsupportedDimension(usize),
    #[error("resolution {0} rejected: must be even and at least 8 (antipodal closure needs an even node count)")]
    BadResolution(usize),
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered at node {0}")]
    NonFinite(usize),
    #[error("support function must be positive everywhere; h({node}) = {value}")]
    NonPositiveSupport { node: usize, value: f64 },
    #[error("convexity failure: radii-of-curvature matrix not positive definite (worst node {node}, eigenvalue {eigenvalue:.6e}, trace {trace:.6e})")]
    ConvexityLoss {
        node: usize,
        eigenvalue: f64,
        trace: f64,
    },
    #[error("origin is not interior to the polar construction (h* -> 0 near node {0})")]
    PolarBlowup(usize),
    #[error("step rejected {rejections} times in a row at t = {t:.6e}, dt = {dt:.3e}; aborting (stiffness or blow-up proximity)")]
    MaxRejections { t: f64, dt: f64, rejections: u32 },
    #[error("p = {p} is invalid here: {reason}")]
    InvalidExponent { p: f64, reason: String },
    #[error("phi parse error at position {pos}: {msg}")]
    PhiParse { pos: usize, msg: String },
    #[error("phi must be positive on the grid; min phi = {0:.6e}")]
    NonPositivePhi(f64),
    #[error("phi must be even for this run (max |phi(u)-phi(-u)| = {0:.3e})")]
    EvennessViolation(f64),
    #[error("recentering failed: barycenter map lost invertibility; last iterate v = ({0:.6e}, {1:.6e}, {2:.6e})")]
    NoAdmissibleTranslation(f64, f64, f64),
    #[error("initial body spec '{spec}' unconstructible: {reason}")]
    Unconstructible { spec: String, reason: String },
    #[error("diagnostics trajectory too short: need at least 3 accepted steps, got {0}")]
    TooFewSteps(usize),
    #[error("mesh export requires n = 2")]
    MeshDimension,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
