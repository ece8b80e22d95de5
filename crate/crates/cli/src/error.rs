use std::path::PathBuf;

use voxtwin_core::EngineError;
use voxtwin_core::radiometry::{InWindow, RadiometryError};
use voxtwin_core::transfer::TransferError;
use voxtwin_core::volume_io::VolumeIoError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Load {
        path: PathBuf,
        #[source]
        source: VolumeIoError,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("tissue peak outside its window (csf {}, gm {}, wm {})", .0.csf, .0.gm, .0.wm)]
    OutOfWindow(InWindow),
    #[error("GPU required: {0}")]
    GpuRequired(String),
}

impl From<RadiometryError> for CliError {
    fn from(e: RadiometryError) -> Self {
        CliError::Engine(e.into())
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Engine(EngineError::Radiometry(RadiometryError::InsufficientModes { .. })) => 2,
            CliError::OutOfWindow(_) => 3,
            CliError::GpuRequired(_) => 4,
            _ => 1,
        }
    }
}
