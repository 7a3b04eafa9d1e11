use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Core {
        stage: &'static str,
        #[source]
        source: microt_core::Error,
    },
    #[error("{stage}: {}: {source}", path.display())]
    Io {
        stage: &'static str,
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{stage}: {}: {message}", path.display())]
    Format {
        stage: &'static str,
        path: PathBuf,
        message: String,
    },
    #[error("{stage}: {}: {source}", path.display())]
    Csv {
        stage: &'static str,
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{stage}: missing artifact {}", path.display())]
    MissingArtifact { stage: &'static str, path: PathBuf },
    #[error("config: {0}")]
    Config(String),
}

impl PipelineError {
    /// Stage the failure belongs to.
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Core { stage, .. }
            | PipelineError::Io { stage, .. }
            | PipelineError::Format { stage, .. }
            | PipelineError::Csv { stage, .. }
            | PipelineError::MissingArtifact { stage, .. } => stage,
            PipelineError::Config(_) => "config",
        }
    }

    /// Re-tags the error with the stage that hit it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            PipelineError::Core { source, .. } => PipelineError::Core { stage, source },
            PipelineError::Io { path, source, .. } => PipelineError::Io { stage, path, source },
            PipelineError::Format { path, message, .. } => PipelineError::Format { stage, path, message },
            PipelineError::Csv { path, source, .. } => PipelineError::Csv { stage, path, source },
            PipelineError::MissingArtifact { path, .. } => PipelineError::MissingArtifact { stage, path },
            e @ PipelineError::Config(_) => e,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Attaches a stage name to core errors.
pub(crate) trait CoreContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> CoreContext<T> for microt_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| PipelineError::Core { stage, source })
    }
}
