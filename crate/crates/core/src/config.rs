//! Pipeline configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregateConfig;
use crate::associate::TfaConfig;
use crate::error::{Error, Result};
use crate::similarity::SimilarityConfig;
use crate::track::SortConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_ks")]
    pub rank_ks: Vec<usize>,
    #[serde(default = "default_fpirs")]
    pub fpir_targets: Vec<f64>,
    /// Minimum IoU for a detection to take a truth box's identity.
    #[serde(default = "default_truth_iou")]
    pub truth_iou: f64,
}

fn default_ks() -> Vec<usize> {
    vec![1, 5, 10, 20]
}
fn default_fpirs() -> Vec<f64> {
    vec![0.1, 0.01]
}
fn default_truth_iou() -> f64 {
    0.5
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rank_ks: default_ks(),
            fpir_targets: default_fpirs(),
            truth_iou: default_truth_iou(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank_ks.contains(&0) {
            return Err(Error::Config("rank K values must be >= 1".into()));
        }
        if self.fpir_targets.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("FPIR targets must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.truth_iou) {
            return Err(Error::Config("truth_iou must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Overrides the manifest's tracklet filtering switch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtering: Option<bool>,
    /// Overrides the manifest's detection score floor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    #[serde(default)]
    pub aggregate: AggregateConfig,
    #[serde(default)]
    pub sort: SortConfig,
    #[serde(default)]
    pub tfa: TfaConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            manifest: manifest.into(),
            out_dir: default_out(),
            filtering: None,
            score_floor: None,
            workers: None,
            similarity: SimilarityConfig::default(),
            aggregate: AggregateConfig::default(),
            sort: SortConfig::default(),
            tfa: TfaConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Parses a TOML file. Relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::parse(path, line, e.message().to_string())
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.manifest.is_relative() {
            cfg.manifest = base.join(&cfg.manifest);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.similarity.validate()?;
        self.aggregate.validate()?;
        self.sort.validate()?;
        self.tfa.validate()?;
        self.eval.validate()?;
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(())
    }
}
