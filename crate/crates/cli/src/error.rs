use std::fmt;

use meshstyle::checkpoint::CheckpointError;
use meshstyle::dataset::DatasetError;
use meshstyle::evaluation::EvalError;
use meshstyle::{MeshError, ModelError, TrainError};

/// Stable process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Usage = 1,
    Data = 2,
    Runtime = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub status: ExitStatus,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { status: ExitStatus::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { status: ExitStatus::Data, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { status: ExitStatus::Runtime, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Config(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::VertexCount { .. } | ModelError::Template { .. } | ModelError::Mesh(_) => {
                Self::data(e.to_string())
            }
            _ => Self::runtime(e.to_string()),
        }
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            EvalError::TemplateMismatch { .. } | EvalError::CountMismatch { .. } => {
                Self::data(e.to_string())
            }
            _ => Self::runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Self::usage(e.to_string()),
            TrainError::Dataset(d) => d.into(),
            TrainError::Eval(d) => d.into(),
            TrainError::Checkpoint(_)
            | TrainError::TemplateMismatch { .. }
            | TrainError::NotResumable
            | TrainError::Io { .. } => Self::data(e.to_string()),
            TrainError::Loss { .. } | TrainError::NonFinite(_) => Self::runtime(e.to_string()),
        }
    }
}

pub fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::data(format!("cannot access {}: {e}", path.display()))
}
