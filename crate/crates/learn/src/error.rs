#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("hyperparameter `{key}`: {message}")]
    Hyperparams { key: &'static str, message: String },
    #[error("rollout buffer holds {have} transitions, an update needs {need}")]
    BufferTooSmall { have: usize, need: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] freshedge_core::Error),
}

impl From<LearnError> for freshedge_core::Error {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Core(e) => e,
            other => freshedge_core::Error::Policy {
                name: "learned".into(),
                message: other.to_string(),
            },
        }
    }
}
