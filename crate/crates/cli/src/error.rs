use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] bae_oed::Error),

    #[error("cannot write manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

impl CliError {
    /// 2 usage, 3 input format, 4 numerical, 5 subprocess.
    pub fn exit_code(&self) -> i32 {
        use bae_oed::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Manifest(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) | E::KExceedsSensors { .. } | E::CombinatorialBlowup { .. } => 2,
                E::Format { .. } | E::DimensionMismatch { .. } | E::NonFiniteValue { .. } | E::Io { .. } => 3,
                E::NotPositiveDefinite { .. } | E::SolverFailure(_) | E::InsufficientSamples { .. } => 4,
                E::SubprocessFailure { .. } | E::Timeout { .. } => 5,
            },
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
