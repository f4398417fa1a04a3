use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("embedding is not unit norm (norm = {norm})")]
    NonUnitEmbedding { norm: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("unknown degradation kind `{0}`")]
    UnknownDegradation(String),

    #[error("rank deficient: {found} independent directions for a rank-{requested} fit")]
    RankDeficient { requested: usize, found: usize },

    #[error("fold mismatch: recognizer fitted on fold {fitted} cannot score fold {scored}")]
    FoldMismatch { fitted: u8, scored: u8 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for this error: 1 for configuration problems,
    /// 2 for missing or unreadable artifacts, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingArtifact(_) | Error::Format { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
            Error::NonFinite { .. } => 3,
            _ => 1,
        }
    }

    /// Short stable name for machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonUnitEmbedding { .. } => "non_unit_embedding",
            Error::InvalidInput(_) => "invalid_input",
            Error::ZeroVector => "zero_vector",
            Error::UnknownDegradation(_) => "unknown_degradation",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::FoldMismatch { .. } => "fold_mismatch",
            Error::Empty(_) => "empty",
            Error::NonFinite { .. } => "non_finite",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::InvalidConfig("x".into()).exit_code(), 1);
        assert_eq!(Error::MissingArtifact("a".into()).exit_code(), 2);
        let nan = Error::NonFinite {
            epoch: 0,
            batch: 0,
            detail: String::new(),
        };
        assert_eq!(nan.exit_code(), 3);
        assert_eq!(nan.kind(), "non_finite");
    }
}
