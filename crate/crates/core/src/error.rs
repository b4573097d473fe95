use thiserror::Error;

use crate::model::Regime;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("state overflowed to a non-finite value at step {step}")]
    Overflow { step: usize },

    #[error("singular design: D = {det:e} is not above the threshold {threshold:e}")]
    SingularDesign { det: f64, threshold: f64 },

    #[error("the path carries no recorded Brownian increments")]
    MissingNoise,

    #[error("sigma is zero; the likelihood ratio is undefined")]
    ZeroSigma,

    #[error("no normal limit with a random rate exists in the {0} regime")]
    NoNlrr(Regime),

    #[error("regime {regime} is inconsistent with roots p = {p}, q = {q}")]
    InconsistentRegime { regime: Regime, p: String, q: String },

    #[error("Brownian grid too coarse: {grid_n} < {min}")]
    GridTooSmall { grid_n: usize, min: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("all {reps} replications failed at T = {horizon}")]
    AllReplicationsFailed { reps: usize, horizon: f64 },

    #[error("{0}")]
    Config(String),

    #[error("malformed CSV at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than by the inputs'
    /// shape; the CLI maps these to exit code 3.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::Overflow { .. }
                | Error::SingularDesign { .. }
                | Error::AllReplicationsFailed { .. }
        )
    }
}
