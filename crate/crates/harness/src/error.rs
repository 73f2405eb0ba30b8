use neuroarm_core::acquisition::{AcquisitionError, RecordingFileError};
use neuroarm_core::csp::CspError;
use neuroarm_core::transport::TransportError;
use neuroarm_models::ModelError;
use std::path::Path;

/// Failure of a harness command. The variant decides the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Runtime(_) => 3,
        }
    }

    pub fn missing(what: &str, path: &Path) -> Self {
        HarnessError::Config(format!("{what} not found: {}", path.display()))
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<TransportError> for HarnessError {
    fn from(e: TransportError) -> Self {
        HarnessError::Runtime(format!("transport: {e}"))
    }
}

impl From<RecordingFileError> for HarnessError {
    fn from(e: RecordingFileError) -> Self {
        HarnessError::Runtime(format!("recording: {e}"))
    }
}

impl From<AcquisitionError> for HarnessError {
    fn from(e: AcquisitionError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<CspError> for HarnessError {
    fn from(e: CspError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Runtime(format!("json: {e}"))
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
