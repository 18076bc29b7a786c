use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("unknown output metric `{0}`")]
    UnknownOutput(String),

    #[error("{0}")]
    Domain(String),

    #[error("alternative {id} is not geometrically feasible: {reason}")]
    Infeasible { id: u32, reason: String },

    #[error("scaler misuse: {0}")]
    ScalerMisuse(String),

    #[error("artifact version mismatch: found `{found}`, expected `{expected}`")]
    VersionMismatch { found: String, expected: String },

    #[error("artifact content hash mismatch for {0}")]
    HashMismatch(PathBuf),

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    /// Generation stopped part-way; rows up to `completed` are checkpointed and
    /// the same call can be retried to resume.
    #[error("generation interrupted after {completed} rows: {source}")]
    Interrupted {
        completed: usize,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag, used by the CLI and HTTP layers.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownFamily(_) => "unknown_family",
            Error::UnknownOutput(_) => "unknown_output",
            Error::Domain(_) => "domain",
            Error::Infeasible { .. } => "infeasible",
            Error::ScalerMisuse(_) => "scaler_misuse",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::HashMismatch(_) => "hash_mismatch",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Interrupted { .. } => "interrupted",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
