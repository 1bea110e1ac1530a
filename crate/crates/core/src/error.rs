use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("evaluation of {function} failed at state {state:?} (oscillator {oscillator:?})")]
    Evaluation {
        function: &'static str,
        state: [f64; 5],
        oscillator: Option<usize>,
    },

    #[error("step size underflow at t = {t} (h = {h:e}); state = {state:?}")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },

    #[error("step budget of {steps} exhausted at t = {t}")]
    StepBudget { t: f64, steps: usize },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("Newton iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("singular passage: {0}")]
    SingularPassage(String),

    #[error("missing upstream artifact from stage `{0}`")]
    Dependency(String),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// True when the root cause is a violated modelling assumption.
    pub fn is_assumption(&self) -> bool {
        match self {
            Error::Assumption(_) | Error::SingularPassage(_) => true,
            Error::Stage { source, .. } => source.is_assumption(),
            _ => false,
        }
    }
}
