use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient resolution: {nodes} nodes, need at least {required}")]
    InsufficientResolution { nodes: usize, required: usize },

    #[error("non-Kähler input at node {node}: A = {a:e}, B = {b:e}")]
    NonKahler { node: usize, a: f64, b: f64 },

    #[error("invalid defining function at node {node}: {reason}")]
    InvalidDefiningFunction { node: usize, reason: String },

    #[error("non-positive logarithm argument {value:e} at node {node}")]
    LogArgument { node: usize, value: f64 },

    #[error("unsupported dimension n = {n}: {what}")]
    UnsupportedDimension { n: usize, what: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("requested time {requested} maps beyond the available horizon {horizon}")]
    OutOfRange { requested: f64, horizon: f64 },

    #[error(
        "Newton failure at t = {t:e} (last dt = {dt:e}) after {halvings} step halvings: \
         residual {residual:e} after {iterations} iterations"
    )]
    StepFailure { t: f64, dt: f64, halvings: usize, iterations: usize, residual: f64 },

    #[error("elliptic Newton solve diverged: residual history {history:?}")]
    OracleDivergence { history: Vec<f64> },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("scenario errors:\n  {}", .0.join("\n  "))]
    Scenario(Vec<String>),

    #[error("malformed trajectory file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
