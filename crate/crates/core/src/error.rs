use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("surface form {surface:?} maps to both {first} and {second}")]
    ConflictingSurface {
        surface: String,
        first: String,
        second: String,
    },

    #[error("term {term:?} is listed with classes {first} and {second}")]
    ConflictingClass {
        term: String,
        first: String,
        second: String,
    },

    #[error("invalid synthetic corpus spec: {0}")]
    PlantSpec(String),

    #[error("cannot merge co-occurrence matrices: {0}")]
    Merge(String),

    #[error("unknown term {0:?}")]
    UnknownTerm(String),

    #[error("invalid query: {0}")]
    Query(String),

    #[error("PCA failed: {0}")]
    Pca(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing artifact {artifact} (run `{stage}` first)")]
    MissingArtifact { stage: &'static str, artifact: String },

    #[error("artifact {artifact} failed verification: {reason}")]
    StaleArtifact { artifact: String, reason: String },

    #[error("malformed artifact {artifact}: {message}")]
    Artifact { artifact: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case identifier for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Record { .. } => "malformed_record",
            Error::ConflictingSurface { .. } => "conflicting_surface",
            Error::ConflictingClass { .. } => "conflicting_class",
            Error::PlantSpec(_) => "invalid_plant_spec",
            Error::Merge(_) => "merge",
            Error::UnknownTerm(_) => "unknown_term",
            Error::Query(_) => "invalid_query",
            Error::Pca(_) => "pca",
            Error::Config(_) => "config",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::StaleArtifact { .. } => "stale_artifact",
            Error::Artifact { .. } => "malformed_artifact",
            Error::Json(_) => "json",
        }
    }

    /// The pipeline stage that must run to fix a missing artifact.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::MissingArtifact { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn artifact(artifact: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Artifact {
            artifact: artifact.into(),
            message: message.into(),
        }
    }
}
