use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::DetectConfig;
use crate::eval::Scheme;
use crate::ingest::DEFAULT_SAMPLE_RATE_HZ;
use crate::rx::RxConfig;
use crate::trainprep::PrepConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    pub sample_rate_hz: f64,
    pub frame_cmd: Option<String>,
    pub work_dir: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
}

impl Default for IngestSettings {
    fn default() -> Self {
        Self { sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ, frame_cmd: None, work_dir: None, sidecar: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Magenta-blob detector built into the binary.
    Synthetic,
    /// External adapter process speaking the line protocol.
    #[default]
    Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterSettings {
    pub backend: BackendKind,
    pub command: Option<String>,
    pub timeout_s: f64,
    pub work_dir: Option<PathBuf>,
}

impl Default for AdapterSettings {
    fn default() -> Self {
        Self { backend: BackendKind::Command, command: None, timeout_s: 60.0, work_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub scheme: Scheme,
    pub threshold: f64,
    pub iou_threshold: f64,
    pub gt_coverage_threshold: f64,
    pub resamples: usize,
    pub level: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            scheme: Scheme::Voc2012,
            threshold: 0.5,
            iou_threshold: 0.5,
            gt_coverage_threshold: 0.25,
            resamples: 10_000,
            level: 0.95,
        }
    }
}

/// Contents of a `sartriage.toml` file. Flags override it; it overrides
/// built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub workers: Option<usize>,
    pub log_level: Option<String>,
    pub ingest: IngestSettings,
    pub rx: RxConfig,
    pub detect: DetectConfig,
    pub adapter: AdapterSettings,
    pub eval: EvalSettings,
    pub prep: PrepConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: PipelineConfig = toml::from_str("workers = 3\n[rx]\nresize_to = 512\n").unwrap();
        assert_eq!(cfg.workers, Some(3));
        assert_eq!(cfg.rx.resize_to, 512);
        assert_eq!(cfg.rx.dbscan_eps, 14.4815);
        assert_eq!(cfg.detect, DetectConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("[rx]\nresize = 512\n").is_err());
        assert!(toml::from_str::<PipelineConfig>("colour = 1\n").is_err());
    }
}
