use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid structural parameters: {0}")]
    InvalidParams(String),
    #[error("invalid radii triple: {0}")]
    InvalidTriple(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("operator not supported here: {0}")]
    UnsupportedOperator(String),
    #[error("solution blew up at r = {r}: |u| = {u}, |u'| = {du}")]
    BlowUp { r: f64, u: f64, du: f64 },
    #[error("shooting could not bracket the target: {0}")]
    NoBracket(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("ball leaves the domain: {0}")]
    OutsideDomain(String),
    #[error("no nodes inside the requested ball or shell (r = {0})")]
    EmptyNodeSet(f64),
    #[error("profile is not monotone: {0}")]
    NonMonotone(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("calibration family is empty")]
    EmptyFamily,
    #[error("lambda* is unconstrained (\"all\") for {0}")]
    UnconstrainedLambda(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported output format `{0}`")]
    UnsupportedFormat(String),
    #[error("verification gate failed: {0}")]
    GateFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
