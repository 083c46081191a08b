//! Experiment configuration and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use avvp_core::canonical::to_canonical_json;
use avvp_core::data::DatasetConfig;
use avvp_core::leap::BlockSelect;

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Leap,
    Mmil,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Generate synthetically from a config (deterministic in its seed).
    Generate { config: DatasetConfig },
    /// Load a previously written dataset directory.
    Load { dir: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Generate {
            config: DatasetConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelEmbeddingSource {
    /// Unit-norm rows from the generator, seeded from the experiment seed.
    #[default]
    Seeded,
    /// Load from a text file: class name then the vector, one class per line.
    File { path: PathBuf },
}

fn default_leap_blocks() -> usize {
    2
}
fn default_lambda() -> f64 {
    1.0
}
fn default_epochs() -> usize {
    20
}
fn default_batch_size() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    1e-4
}
fn default_threshold() -> f64 {
    0.5
}
fn default_hidden() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub decoder: DecoderKind,
    /// Number of label-projection blocks (ignored by the baseline decoder).
    #[serde(default = "default_leap_blocks")]
    pub leap_blocks: usize,
    /// Which block's outputs feed the heads.
    #[serde(default)]
    pub block_select: BlockSelect,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Binarization threshold for inference and the hard union.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub seed: u64,
    /// Shared hidden width of the encoder and decoder.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Sinusoidal position terms in the encoder.
    #[serde(default)]
    pub positional: bool,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default)]
    pub label_embeddings: LabelEmbeddingSource,
    /// Default output path, used when the CLI's `--out` is omitted
    /// (a directory for `train`, a report file for `eval`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A LEAP model with every knob at its default.
    pub fn leap_defaults(seed: u64) -> Self {
        ExperimentConfig {
            decoder: DecoderKind::Leap,
            leap_blocks: default_leap_blocks(),
            block_select: BlockSelect::default(),
            lambda: default_lambda(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            threshold: default_threshold(),
            seed,
            hidden: default_hidden(),
            positional: false,
            dataset: DatasetSource::default(),
            label_embeddings: LabelEmbeddingSource::default(),
            report_path: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Validation(m));
        if self.epochs < 1 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1".into());
        }
        if self.leap_blocks < 1 {
            return fail("leap_blocks must be >= 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            ));
        }
        if self.lambda < 0.0 {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.learning_rate <= 0.0 {
            return fail(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.hidden == 0 {
            return fail("hidden width must be positive".into());
        }
        if let DatasetSource::Generate { config } = &self.dataset {
            config
                .validate()
                .map_err(|e| HarnessError::Validation(e.to_string()))?;
        }
        Ok(())
    }

    /// Hex digest of the canonical config JSON; pins reports to configs.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = to_canonical_json(&value);
        let digest = Sha256::digest(canonical.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(ExperimentConfig::leap_defaults(1).validate().is_ok());
    }

    #[test]
    fn bad_threshold_rejected() {
        let mut c = ExperimentConfig::leap_defaults(1);
        c.threshold = 1.0;
        assert!(matches!(c.validate(), Err(HarnessError::Validation(_))));
    }

    #[test]
    fn hash_changes_with_config() {
        let a = ExperimentConfig::leap_defaults(1);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.lambda = 0.5;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let text = r#"{"decoder": "leap", "seed": 3}"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.leap_blocks, 2);
        assert_eq!(config.lambda, 1.0);
        assert_eq!(config.epochs, 20);
        assert_eq!(config.batch_size, 32);
        assert_eq!(config.learning_rate, 1e-4);
        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&config).unwrap()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"decoder": "leap", "seed": 3, "learning_rte": 0.1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }
}
