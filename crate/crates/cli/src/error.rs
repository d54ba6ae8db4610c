use std::process::ExitCode;

use slideqa_core::assessment::AssessError;
use slideqa_core::bench::BenchError;
use slideqa_core::density::DensityError;
use slideqa_core::features::FeatureError;
use slideqa_core::infer::InferError;
use slideqa_core::pipeline::PipelineError;
use slideqa_core::slide_io::SlideIoError;
use thiserror::Error;

/// Top-level failure, tagged with the exit-code class it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Model(_) => 4,
            CliError::Internal(_) => 5,
        })
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<SlideIoError> for CliError {
    fn from(e: SlideIoError) -> Self {
        match e {
            SlideIoError::TileSize { .. } | SlideIoError::Stride { .. } => CliError::Usage(e.to_string()),
            SlideIoError::TileIndex { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<InferError> for CliError {
    fn from(e: InferError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Model(inner) => inner.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<DensityError> for CliError {
    fn from(e: DensityError) -> Self {
        match e {
            DensityError::Opacity(_) => CliError::Usage(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<AssessError> for CliError {
    fn from(e: AssessError) -> Self {
        match e {
            AssessError::Io { .. } => CliError::Io(e.to_string()),
            AssessError::EmptyGrid => CliError::Internal(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::SlideIo(e) => e.into(),
            PipelineError::Model(e) => e.into(),
            PipelineError::Density(e) => e.into(),
            PipelineError::Assessment(e) => e.into(),
            PipelineError::Pool(msg) => CliError::Internal(msg),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Setup(_) => CliError::Usage(e.to_string()),
            BenchError::EngineFailed { .. } => CliError::Model(e.to_string()),
        }
    }
}
