//! Parameter snapshots. A checkpoint restores into a freshly initialized
//! model of the same architecture and reproduces forward outputs bit-exactly
//! (JSON floats round-trip losslessly).

use std::path::Path;

use serde::{Deserialize, Serialize};

use avvp_core::adam::AdamState;
use avvp_core::matrix::Matrix;

use crate::model::Model;
use crate::HarnessError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub artifact_version: String,
    pub config_hash: String,
    pub epoch: usize,
    pub params: Vec<(String, Matrix)>,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn snapshot(model: &Model, adam: &AdamState, epoch: usize, config_hash: &str) -> Self {
        Checkpoint {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            epoch,
            params: model
                .named()
                .into_iter()
                .map(|(n, m)| (n, m.clone()))
                .collect(),
            adam: adam.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Copy stored parameters into `model`, matching by name and shape.
    pub fn restore(&self, model: &mut Model) -> Result<(), HarnessError> {
        let mut targets = model.named_mut();
        if targets.len() != self.params.len() {
            return Err(HarnessError::Validation(format!(
                "checkpoint has {} parameters, model expects {}",
                self.params.len(),
                targets.len()
            )));
        }
        for ((stored_name, stored), (name, target)) in self.params.iter().zip(targets.iter_mut()) {
            if stored_name != name {
                return Err(HarnessError::Validation(format!(
                    "checkpoint parameter {stored_name:?} does not match model parameter {name:?}"
                )));
            }
            if stored.shape() != target.shape() {
                return Err(HarnessError::Validation(format!(
                    "parameter {name}: checkpoint shape {:?} does not match model shape {:?}",
                    stored.shape(),
                    target.shape()
                )));
            }
            **target = stored.clone();
        }
        Ok(())
    }
}
