//! File formats, dataset ingestion, configuration and the staged
//! command-line pipeline around `microt-core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod ingest;
pub mod pipeline;
pub mod report;

pub use config::PipelineConfig;
pub use error::{PipelineError, Result};
pub use pipeline::{Pipeline, STAGES};
