use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("integration exceeded {max_steps} steps at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },

    #[error("energy mismatch: mechanical energy {found} differs from c = {expected} by {diff} (tol {tol})")]
    EnergyMismatch {
        found: f64,
        expected: f64,
        diff: f64,
        tol: f64,
    },

    #[error("axis condition violated: max |Gamma| = {max_gamma} at t = {t} (tol {tol})")]
    AxisConditionViolated { max_gamma: f64, t: f64, tol: f64 },

    #[error("plane not invariant: off-plane residual {residual} exceeds {tol}")]
    PlaneNotInvariant { residual: f64, tol: f64 },

    #[error("no return in window ({lo}, {hi}] for alpha = {alpha}")]
    NoReturnInWindow { lo: f64, hi: f64, alpha: f64 },

    #[error("grid too coarse: unresolved root cluster near t = {t}")]
    GridTooCoarse { t: f64 },

    #[error("shooting did not converge after {iterations} iterations (|miss| = {miss})")]
    NoConvergence { iterations: usize, miss: f64 },

    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("unknown scenario '{id}'; available: {available}")]
    UnknownScenario { id: String, available: String },

    #[error("invalid parameter: {msg}")]
    InvalidParameter { msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
