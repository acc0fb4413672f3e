//! Service configuration: defaults, then the TOML file, then command-line flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use cropseg::backend::NoiseConfig;
use cropseg::ModelSeries;
use serde::Deserialize;

use crate::backends::{BackendKind, ModelPaths};

/// Contents of the `--config` file. Every key is optional.
///
/// ```toml
/// host = "127.0.0.1"
/// port = 8080
/// backend = "oracle"
/// series = "s2"
/// model = "models/segmentor.onnx"
/// io_spec = "models/io.json"
/// session_ttl_secs = 1800
/// max_upload_mb = 64
/// noise_blur_radius = 2.0
/// noise_blob_rate = 0.2
/// seed = 0
/// ```
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub backend: Option<String>,
    pub series: Option<String>,
    pub model: Option<PathBuf>,
    pub io_spec: Option<PathBuf>,
    pub session_ttl_secs: Option<u64>,
    pub max_upload_mb: Option<usize>,
    pub noise_blur_radius: Option<f64>,
    pub noise_blob_rate: Option<f64>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fills every unset key from `other`.
    pub fn or(self, other: FileConfig) -> FileConfig {
        FileConfig {
            host: self.host.or(other.host),
            port: self.port.or(other.port),
            backend: self.backend.or(other.backend),
            series: self.series.or(other.series),
            model: self.model.or(other.model),
            io_spec: self.io_spec.or(other.io_spec),
            session_ttl_secs: self.session_ttl_secs.or(other.session_ttl_secs),
            max_upload_mb: self.max_upload_mb.or(other.max_upload_mb),
            noise_blur_radius: self.noise_blur_radius.or(other.noise_blur_radius),
            noise_blob_rate: self.noise_blob_rate.or(other.noise_blob_rate),
            seed: self.seed.or(other.seed),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Used when a request does not name a backend.
    pub default_backend: BackendKind,
    /// Used when a request does not name a series.
    pub default_series: ModelSeries,
    /// Required for the external backend.
    pub model: Option<ModelPaths>,
    pub session_ttl: Duration,
    pub max_upload_bytes: usize,
    /// Noise for the noisy backend; the seed is mixed with the session id.
    pub noise: NoiseConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            default_backend: BackendKind::Oracle,
            default_series: ModelSeries::S2,
            model: None,
            session_ttl: Duration::from_secs(30 * 60),
            max_upload_bytes: 64 << 20,
            noise: NoiseConfig::default(),
        }
    }
}

impl TryFrom<FileConfig> for ServiceConfig {
    type Error = anyhow::Error;

    fn try_from(f: FileConfig) -> anyhow::Result<Self> {
        let d = ServiceConfig::default();
        let default_backend = match f.backend {
            Some(b) => b.parse().map_err(anyhow::Error::msg)?,
            None => d.default_backend,
        };
        let default_series = match f.series {
            Some(s) => s.parse().map_err(anyhow::Error::msg)?,
            None => d.default_series,
        };
        let model = f.model.map(|m| ModelPaths::new(m, f.io_spec));
        if default_backend == BackendKind::External && model.is_none() {
            anyhow::bail!("the external backend needs a model path");
        }
        Ok(ServiceConfig {
            host: f.host.unwrap_or(d.host),
            port: f.port.unwrap_or(d.port),
            default_backend,
            default_series,
            model,
            session_ttl: f.session_ttl_secs.map(Duration::from_secs).unwrap_or(d.session_ttl),
            max_upload_bytes: f.max_upload_mb.map(|mb| mb << 20).unwrap_or(d.max_upload_bytes),
            noise: NoiseConfig {
                blur_radius: f.noise_blur_radius.unwrap_or(d.noise.blur_radius),
                blob_rate: f.noise_blob_rate.unwrap_or(d.noise.blob_rate),
                seed: f.seed.unwrap_or(d.noise.seed),
            },
        })
    }
}
