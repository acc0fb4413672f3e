//! Backend selection shared by the `eval` command and the service.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use cropseg::backend::{load_external_backend, ConstantBackend, NoiseConfig, NoisyOracleBackend, OracleBackend};
use cropseg::{Backend, BackendError, BinaryMask, ModelSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    /// Returns the registered ground truth.
    Oracle,
    /// Ground truth degraded by blur and spurious blobs.
    Noisy,
    /// Always predicts background.
    Empty,
    /// Exported model run through the tensor runtime.
    External,
}

pub const BACKEND_NAMES: [&str; 4] = ["oracle", "noisy", "empty", "external"];

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Oracle => "oracle",
            BackendKind::Noisy => "noisy",
            BackendKind::Empty => "empty",
            BackendKind::External => "external",
        }
    }

    pub fn needs_ground_truth(self) -> bool {
        matches!(self, BackendKind::Oracle | BackendKind::Noisy)
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(BackendKind::Oracle),
            "noisy" => Ok(BackendKind::Noisy),
            "empty" => Ok(BackendKind::Empty),
            "external" => Ok(BackendKind::External),
            other => Err(format!("unknown backend {other:?}; expected one of {}", BACKEND_NAMES.join(", "))),
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Paths of an exported model and its io spec.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPaths {
    pub model: PathBuf,
    pub io_spec: PathBuf,
}

impl ModelPaths {
    /// The io spec defaults to `io.json` next to the model.
    pub fn new(model: PathBuf, io_spec: Option<PathBuf>) -> Self {
        let io_spec = io_spec.unwrap_or_else(|| model.with_file_name("io.json"));
        Self { model, io_spec }
    }

    pub fn load(&self, series: ModelSeries) -> Result<Arc<dyn Backend>, BackendError> {
        Ok(Arc::new(load_external_backend(&self.model, &self.io_spec, series)?))
    }
}

/// Builds a ground-truth-driven backend. `External` is loaded separately
/// because it is shared across samples.
pub fn reference_backend(kind: BackendKind, gt: Option<&BinaryMask>, noise: NoiseConfig) -> Option<Arc<dyn Backend>> {
    match kind {
        BackendKind::Oracle => Some(Arc::new(OracleBackend::new(gt?.clone()))),
        BackendKind::Noisy => Some(Arc::new(NoisyOracleBackend::new(gt?.clone(), noise))),
        BackendKind::Empty => Some(Arc::new(ConstantBackend::empty())),
        BackendKind::External => None,
    }
}
