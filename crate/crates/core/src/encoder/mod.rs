//! Frozen embedding backbones with trainable low-rank adapters.
//!
//! A [`Backbone`] maps one input feature vector to a raw embedding, optionally
//! through an [`AdapterState`], and can back-propagate an embedding gradient
//! into adapter gradients. Base weights are never written. [`Encoder`] wraps a
//! backbone with batched, normalized embedding.

mod adapter;
pub mod checkpoint;
mod config;
mod head;
mod mlp;
mod transformer;

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use adapter::{init_adapters, AdapterState, LayerShape, Linear, LoraLayer};
pub use checkpoint::{Checkpoint, OptimizerState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{Architecture, BackboneConfig, SizeTier};
pub use head::ClassHead;
pub use mlp::ToyMlp;
pub use transformer::ToyTransformer;

use crate::error::{Error, Result};
use crate::model::{EmbeddingMatrix, ZERO_NORM};

pub trait Backbone: Send + Sync {
    fn config(&self) -> &BackboneConfig;

    /// Layers that carry adapters, in [`AdapterState::layers`] order.
    fn adapted_layers(&self) -> Vec<LayerShape>;

    /// Raw (unnormalized) embedding. `None` runs the frozen base path.
    fn forward(&self, input: ArrayView1<'_, f64>, adapters: Option<&AdapterState>) -> Result<Array1<f64>>;

    /// Adds `d (grad_output . forward(input)) / d adapters` into `grads`.
    fn backward(
        &self,
        input: ArrayView1<'_, f64>,
        adapters: &AdapterState,
        grad_output: ArrayView1<'_, f64>,
        grads: &mut AdapterState,
    ) -> Result<()>;

    /// Every frozen parameter, in a fixed order.
    fn base_parameters(&self) -> Vec<f64>;
}

#[derive(Clone)]
pub struct Encoder {
    backbone: Arc<dyn Backbone>,
}

impl std::fmt::Debug for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Encoder")
            .field("config", self.backbone.config())
            .finish()
    }
}

impl Encoder {
    /// Wraps any backbone, including externally provided ones.
    pub fn new(backbone: Arc<dyn Backbone>) -> Self {
        Encoder { backbone }
    }

    /// Builds one of the toy backbones. `external` configs must go through [`Encoder::new`].
    pub fn from_config(config: &BackboneConfig) -> Result<Self> {
        let backbone: Arc<dyn Backbone> = match config.architecture {
            Architecture::ToyMlp => Arc::new(ToyMlp::new(config.clone())?),
            Architecture::ToyTransformer => Arc::new(ToyTransformer::new(config.clone())?),
            Architecture::External => {
                return Err(Error::Unsupported(
                    "external backbones must be supplied through Encoder::new".into(),
                ))
            }
        };
        Ok(Encoder { backbone })
    }

    pub fn config(&self) -> &BackboneConfig {
        self.backbone.config()
    }

    pub fn backbone(&self) -> &dyn Backbone {
        self.backbone.as_ref()
    }

    pub fn adapted_layers(&self) -> Vec<LayerShape> {
        self.backbone.adapted_layers()
    }

    pub fn init_adapters(&self, rank: usize, scale: f64, seed: u64) -> Result<AdapterState> {
        init_adapters(&self.adapted_layers(), rank, scale, seed)
    }

    /// SHA-256 over the bit patterns of every frozen parameter.
    pub fn base_checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for v in self.backbone.base_parameters() {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    fn check_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<()> {
        if inputs.nrows() == 0 {
            return Err(Error::Precondition("empty batch".into()));
        }
        let want = self.config().input_dim;
        if inputs.ncols() != want {
            return Err(Error::Shape(format!(
                "inputs have {} features, backbone expects {want}",
                inputs.ncols()
            )));
        }
        Ok(())
    }

    /// Raw embeddings, one row per input row, order preserved.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>, adapters: Option<&AdapterState>) -> Result<Array2<f64>> {
        self.check_batch(inputs)?;
        if let Some(a) = adapters {
            a.check_layers(&self.adapted_layers())?;
        }
        let rows: Vec<Array1<f64>> = (0..inputs.nrows())
            .into_par_iter()
            .map(|i| self.backbone.forward(inputs.row(i), adapters))
            .collect::<Result<_>>()?;
        let dim = self.config().embed_dim;
        let mut out = Array2::zeros((rows.len(), dim));
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Shape(format!("backbone produced {} values, expected {dim}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("activation for input row {i}")));
            }
            out.row_mut(i).assign(&row);
        }
        Ok(out)
    }

    /// Embeddings through the adapted path; `normalize` gives unit rows.
    pub fn embed_batch(
        &self,
        inputs: ArrayView2<'_, f64>,
        adapters: &AdapterState,
        normalize: bool,
    ) -> Result<Array2<f64>> {
        let raw = self.forward_batch(inputs, Some(adapters))?;
        if normalize {
            normalize_in_place(raw)
        } else {
            Ok(raw)
        }
    }

    /// Unit embeddings through the frozen base weights only.
    pub fn embed_reference_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        normalize_in_place(self.forward_batch(inputs, None)?)
    }

    /// Id-keyed form of [`Encoder::embed_batch`]; `features` rows are backbone inputs.
    pub fn embed(&self, features: &EmbeddingMatrix, adapters: &AdapterState, normalize: bool) -> Result<EmbeddingMatrix> {
        let out = self.embed_batch(features.vectors().view(), adapters, normalize)?;
        EmbeddingMatrix::new(features.ids().to_vec(), out)
    }

    pub fn embed_reference(&self, features: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        let out = self.embed_reference_batch(features.vectors().view())?;
        EmbeddingMatrix::new(features.ids().to_vec(), out)
    }
}

fn normalize_in_place(mut m: Array2<f64>) -> Result<Array2<f64>> {
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if n < ZERO_NORM {
            return Err(Error::NonFinite(format!("embedding row {i} has zero norm")));
        }
        row /= n;
    }
    Ok(m)
}
