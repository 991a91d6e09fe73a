use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("experiment spec: {0}")]
    Spec(String),
    #[error("environment variable {var}: {message}")]
    EnvVar { var: String, message: String },
    #[error("{}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] freshedge_core::Error),
    #[error(transparent)]
    Learn(#[from] freshedge_learn::LearnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
