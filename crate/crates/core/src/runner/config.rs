use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::CorpusSpec;
use crate::error::{Error, Result};
use crate::localization::InferenceConfig;
use crate::metrics::thumos_thresholds;
use crate::motiongraph::GraphConfig;
use crate::network::{GuidanceInput, NetworkConfig};
use crate::objective::LossConfig;

/// Environment variable that sets the default output root.
pub const OUTPUT_ROOT_ENV: &str = "MOTIONLOC_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Embedding width; 0 means `2·d`.
    pub hidden: usize,
    pub gcn_layers: usize,
    pub kernel: usize,
    pub gcn_relu: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 0,
            gcn_layers: 2,
            kernel: 3,
            gcn_relu: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-4,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: CorpusSpec,
    pub graph: GraphConfig,
    pub loss: LossConfig,
    pub model: ModelConfig,
    pub guidance: GuidanceInput,
    pub training: TrainingConfig,
    pub inference: InferenceConfig,
    pub eval_iou: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSpec::default(),
            graph: GraphConfig::default(),
            loss: LossConfig::default(),
            model: ModelConfig::default(),
            guidance: GuidanceInput::Motion,
            training: TrainingConfig::default(),
            inference: InferenceConfig::default(),
            eval_iou: thumos_thresholds(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            feature_dim: self.corpus.feature_dim,
            num_classes: self.corpus.num_classes,
            hidden: self.model.hidden,
            gcn_layers: self.model.gcn_layers,
            kernel: self.model.kernel,
            guidance: self.guidance,
            gcn_relu: self.model.gcn_relu,
        }
    }

    /// Validates every sub-configuration except the epoch count.
    pub fn validate_components(&self) -> Result<()> {
        self.corpus.validate()?;
        self.graph.validate()?;
        self.loss.validate()?;
        self.network().validate()?;
        self.inference.validate()?;
        if self.training.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.training.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.eval_iou.is_empty() || !self.eval_iou.iter().all(|t| (0.0..1.0).contains(t)) {
            return Err(Error::Config("eval_iou must be a non-empty list in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_components()?;
        if self.training.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}, column {}", e.line(), e.column()),
            detail: e.to_string(),
        })
    }

    /// Applies a JSON merge patch (RFC 7386) and re-parses.
    pub fn with_patch(&self, patch: &serde_json::Value) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        merge_patch(&mut value, patch);
        Ok(serde_json::from_value(value)?)
    }

    /// `output_dir`, else `$MOTIONLOC_OUT`, else `runs`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(default_output_root)
    }
}

pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn merge_patch(target: &mut serde_json::Value, patch: &serde_json::Value) {
    use serde_json::Value;
    match patch {
        Value::Object(entries) => {
            if !target.is_object() {
                *target = Value::Object(Default::default());
            }
            let obj = target.as_object_mut().expect("object");
            for (k, v) in entries {
                if v.is_null() {
                    obj.remove(k);
                } else {
                    merge_patch(obj.entry(k.clone()).or_insert(Value::Null), v);
                }
            }
        }
        other => *target = other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, back);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"training": {"epochs": 3}, "guidance": "appearance"}"#).unwrap();
        assert_eq!(cfg.training.epochs, 3);
        assert_eq!(cfg.training.batch_size, 16);
        assert_eq!(cfg.guidance, GuidanceInput::Appearance);
    }

    #[test]
    fn patch_overrides_nested_fields() {
        let base = ExperimentConfig::default();
        let patched = base
            .with_patch(&serde_json::json!({"graph": {"mode": "dense"}, "loss": {"kind": "xe"}}))
            .unwrap();
        assert_eq!(patched.graph.mode, crate::motiongraph::GraphMode::Dense);
        assert_eq!(patched.loss.kind, crate::objective::LossKind::Xe);
        assert_eq!(patched.graph.gamma, base.graph.gamma);
    }

    #[test]
    fn zero_epochs_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.training.epochs = 0;
        assert!(cfg.validate().is_err());
        cfg.validate_components().unwrap();
    }
}
