//! Self-describing checkpoint container (JSON, versioned header).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdapterState, BackboneConfig, ClassHead, Encoder};
use crate::error::{Error, Result};
use crate::model::Hyperparams;

pub const CHECKPOINT_FORMAT: &str = "stylemetric-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Adaptive-moment optimizer state over the flattened trainable parameters
/// (adapters first, then class weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(num_parameters: usize) -> Self {
        OptimizerState {
            step: 0,
            first_moment: vec![0.0; num_parameters],
            second_moment: vec![0.0; num_parameters],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub backbone: BackboneConfig,
    /// Checksum of the frozen base weights the adapters were trained against.
    pub base_checksum: String,
    pub hyperparams: Hyperparams,
    pub iteration: u64,
    /// Identity ids in class-index order.
    pub classes: Vec<String>,
    pub adapters: AdapterState,
    pub head: ClassHead,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        encoder: &Encoder,
        hyperparams: Hyperparams,
        iteration: u64,
        classes: Vec<String>,
        adapters: AdapterState,
        head: ClassHead,
        optimizer: Option<OptimizerState>,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            backbone: encoder.config().clone(),
            base_checksum: encoder.base_checksum(),
            hyperparams,
            iteration,
            classes,
            adapters,
            head,
            optimizer,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoints always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", header.format)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} not supported (expected {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.classes.len() != ckpt.head.num_classes() {
            return Err(Error::Checkpoint(format!(
                "{} class ids for {} class weights",
                ckpt.classes.len(),
                ckpt.head.num_classes()
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Rebuilds the toy encoder and checks it matches the recorded base weights.
    pub fn encoder(&self) -> Result<Encoder> {
        let encoder = Encoder::from_config(&self.backbone)?;
        self.check_encoder(&encoder)?;
        Ok(encoder)
    }

    pub fn check_encoder(&self, encoder: &Encoder) -> Result<()> {
        let sum = encoder.base_checksum();
        if sum != self.base_checksum {
            return Err(Error::Checkpoint(format!(
                "base weight checksum {sum} does not match checkpoint {}",
                self.base_checksum
            )));
        }
        self.adapters.check_layers(&encoder.adapted_layers())
    }
}
