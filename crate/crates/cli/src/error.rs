use driftlab::anon::AnonError;
use driftlab::compensate::CompensationError;
use driftlab::eval::EvalError;
use driftlab::models::ModelError;
use driftlab::ndmath::MathError;
use driftlab::world::WorldError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage order: {0}")]
    StageOrder(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("provenance: {0}")]
    Provenance(String),
    #[error("malformed artifact {file}: {reason}")]
    Artifact { file: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::StageOrder(_) => 3,
            Self::Numerical(_) => 4,
            Self::Provenance(_) => 5,
            Self::Artifact { .. } | Self::Io(_) | Self::Csv(_) | Self::Json(_) => 1,
        }
    }

    pub(crate) fn artifact(file: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Artifact {
            file: file.into(),
            reason: reason.into(),
        }
    }
}

impl From<WorldError> for CliError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::Config(m) => Self::Config(m),
            WorldError::Fingerprint { .. } => {
                Self::Provenance(format!("{e}; rerun `driftlab world`"))
            }
            WorldError::Io(e) => Self::Io(e),
            WorldError::Math(e) => e.into(),
            other => Self::artifact("world", other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Divergence { .. } => Self::Numerical(e.to_string()),
            ModelError::Provenance { .. } => {
                Self::Provenance(format!("{e}; rerun `driftlab train`"))
            }
            ModelError::Io(e) => Self::Io(e),
            ModelError::Math(e) => e.into(),
            other => Self::artifact("models", other.to_string()),
        }
    }
}

impl From<AnonError> for CliError {
    fn from(e: AnonError) -> Self {
        match e {
            AnonError::Config(m) => Self::Config(m),
            AnonError::LambdaOutOfRange(_) => Self::Config(e.to_string()),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<CompensationError> for CliError {
    fn from(e: CompensationError) -> Self {
        match e {
            CompensationError::Config(m) => Self::Config(m),
            CompensationError::Model(e) => e.into(),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MissingEmbedding { .. } => Self::artifact("runs", e.to_string()),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<MathError> for CliError {
    fn from(e: MathError) -> Self {
        Self::Numerical(e.to_string())
    }
}
