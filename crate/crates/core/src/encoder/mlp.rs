use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adapter::{AdapterState, LayerShape, Linear};
use super::{Backbone, BackboneConfig};
use crate::error::Result;

const FC1: usize = 0;
const PROJ: usize = 1;

/// `z = proj(tanh(fc1(x)))`, both layers adapted.
#[derive(Debug, Clone)]
pub struct ToyMlp {
    config: BackboneConfig,
    fc1: Linear,
    proj: Linear,
}

impl ToyMlp {
    pub fn new(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed);
        let width = config.width();
        let fc1 = Linear::random(config.input_dim, width, &mut rng);
        let proj = Linear::random(width, config.embed_dim, &mut rng);
        Ok(ToyMlp { config, fc1, proj })
    }

    fn layer<'a>(adapters: Option<&'a AdapterState>, i: usize) -> Option<(&'a super::LoraLayer, f64)> {
        adapters.map(|a| (&a.layers[i], a.scale))
    }
}

impl Backbone for ToyMlp {
    fn config(&self) -> &BackboneConfig {
        &self.config
    }

    fn adapted_layers(&self) -> Vec<LayerShape> {
        vec![self.fc1.shape("fc1"), self.proj.shape("proj")]
    }

    fn forward(&self, input: ArrayView1<'_, f64>, adapters: Option<&AdapterState>) -> Result<Array1<f64>> {
        let h = self.fc1.forward(input, Self::layer(adapters, FC1)).mapv(f64::tanh);
        Ok(self.proj.forward(h.view(), Self::layer(adapters, PROJ)))
    }

    fn backward(
        &self,
        input: ArrayView1<'_, f64>,
        adapters: &AdapterState,
        grad_output: ArrayView1<'_, f64>,
        grads: &mut AdapterState,
    ) -> Result<()> {
        let h = self.fc1.forward(input, Self::layer(Some(adapters), FC1)).mapv(f64::tanh);
        let gh = self.proj.backward(
            h.view(),
            &adapters.layers[PROJ],
            adapters.scale,
            grad_output,
            &mut grads.layers[PROJ],
        );
        let g_pre = gh * &h.mapv(|v| 1.0 - v * v);
        self.fc1.backward(
            input,
            &adapters.layers[FC1],
            adapters.scale,
            g_pre.view(),
            &mut grads.layers[FC1],
        );
        Ok(())
    }

    fn base_parameters(&self) -> Vec<f64> {
        self.fc1.parameters().chain(self.proj.parameters()).copied().collect()
    }
}
