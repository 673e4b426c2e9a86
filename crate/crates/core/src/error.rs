use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),

    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),

    #[error("environment failure: {0}")]
    Env(String),

    #[error("grid budget of {budget} cells cannot reach margin {requested:.6e}; smallest feasible margin is {feasible:.6e}")]
    GridBudget {
        budget: usize,
        requested: f64,
        feasible: f64,
    },

    #[error("{0}")]
    Validator(String),

    #[error("training aborted at iteration {iteration}: {reason}")]
    TrainingAborted { iteration: usize, reason: String },
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
