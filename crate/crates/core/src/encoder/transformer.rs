use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adapter::{AdapterState, LayerShape, Linear, LoraLayer};
use super::{Backbone, BackboneConfig};
use crate::error::Result;

const Q: usize = 0;
const K: usize = 1;
const V: usize = 2;
const O: usize = 3;
const PROJ: usize = 4;

/// One single-head self-attention block with a residual connection, mean
/// pooling and a projection head. The input is split into `tokens` equal
/// slices. Query, key, value, output and the final projection are adapted;
/// the token embedding is not.
#[derive(Debug, Clone)]
pub struct ToyTransformer {
    config: BackboneConfig,
    token_embed: Linear,
    proj_q: Linear,
    proj_k: Linear,
    proj_v: Linear,
    proj_o: Linear,
    proj: Linear,
}

struct Activations {
    tokens: Array2<f64>,
    embedded: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
    context: Array2<f64>,
    pooled: Array1<f64>,
}

fn layer(adapters: Option<&AdapterState>, i: usize) -> Option<(&LoraLayer, f64)> {
    adapters.map(|a| (&a.layers[i], a.scale))
}

fn map_rows(x: &Array2<f64>, f: impl Fn(ArrayView1<'_, f64>) -> Array1<f64>, out_dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), out_dim));
    for (mut dst, src) in out.rows_mut().into_iter().zip(x.rows()) {
        dst.assign(&f(src));
    }
    out
}

impl ToyTransformer {
    pub fn new(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed);
        let width = config.width();
        let token_dim = config.input_dim / config.tokens;
        Ok(ToyTransformer {
            token_embed: Linear::random(token_dim, width, &mut rng),
            proj_q: Linear::random(width, width, &mut rng),
            proj_k: Linear::random(width, width, &mut rng),
            proj_v: Linear::random(width, width, &mut rng),
            proj_o: Linear::random(width, width, &mut rng),
            proj: Linear::random(width, config.embed_dim, &mut rng),
            config,
        })
    }

    fn activations(&self, input: ArrayView1<'_, f64>, adapters: Option<&AdapterState>) -> Activations {
        let t = self.config.tokens;
        let width = self.config.width();
        let tokens = input
            .to_owned()
            .into_shape_with_order((t, self.config.input_dim / t))
            .expect("input length checked by caller");
        let embedded = map_rows(&tokens, |x| self.token_embed.forward(x, None), width);
        let q = map_rows(&embedded, |e| self.proj_q.forward(e, layer(adapters, Q)), width);
        let k = map_rows(&embedded, |e| self.proj_k.forward(e, layer(adapters, K)), width);
        let v = map_rows(&embedded, |e| self.proj_v.forward(e, layer(adapters, V)), width);

        let mut attn = q.dot(&k.t()) / (width as f64).sqrt();
        for mut row in attn.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|s| (s - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        let context = attn.dot(&v);
        let out = map_rows(&context, |c| self.proj_o.forward(c, layer(adapters, O)), width);
        let hidden = &embedded + &out;
        let pooled = hidden.mean_axis(Axis(0)).expect("at least one token").mapv(f64::tanh);
        Activations {
            tokens,
            embedded,
            q,
            k,
            v,
            attn,
            context,
            pooled,
        }
    }
}

impl Backbone for ToyTransformer {
    fn config(&self) -> &BackboneConfig {
        &self.config
    }

    fn adapted_layers(&self) -> Vec<LayerShape> {
        vec![
            self.proj_q.shape("attn_q"),
            self.proj_k.shape("attn_k"),
            self.proj_v.shape("attn_v"),
            self.proj_o.shape("attn_o"),
            self.proj.shape("proj"),
        ]
    }

    fn forward(&self, input: ArrayView1<'_, f64>, adapters: Option<&AdapterState>) -> Result<Array1<f64>> {
        let act = self.activations(input, adapters);
        Ok(self.proj.forward(act.pooled.view(), layer(adapters, PROJ)))
    }

    fn backward(
        &self,
        input: ArrayView1<'_, f64>,
        adapters: &AdapterState,
        grad_output: ArrayView1<'_, f64>,
        grads: &mut AdapterState,
    ) -> Result<()> {
        let scale = adapters.scale;
        let act = self.activations(input, Some(adapters));
        let t = act.tokens.nrows();
        let width = self.config.width();

        let g_pooled = self.proj.backward(
            act.pooled.view(),
            &adapters.layers[PROJ],
            scale,
            grad_output,
            &mut grads.layers[PROJ],
        );
        // every token's residual output receives the same share of the pooled gradient
        let g_hidden = (g_pooled * &act.pooled.mapv(|p| 1.0 - p * p)) / t as f64;

        let mut g_context = Array2::zeros((t, width));
        for j in 0..t {
            let g = self.proj_o.backward(
                act.context.row(j),
                &adapters.layers[O],
                scale,
                g_hidden.view(),
                &mut grads.layers[O],
            );
            g_context.row_mut(j).assign(&g);
        }

        let g_attn = g_context.dot(&act.v.t());
        let g_v = act.attn.t().dot(&g_context);
        let mut g_scores = Array2::zeros((t, t));
        for j in 0..t {
            let a = act.attn.row(j);
            let ga = g_attn.row(j);
            let inner = a.dot(&ga);
            g_scores
                .slice_mut(s![j, ..])
                .assign(&(&a * &ga.mapv(|g| g - inner)));
        }
        let inv_sqrt = 1.0 / (width as f64).sqrt();
        let g_q = g_scores.dot(&act.k) * inv_sqrt;
        let g_k = g_scores.t().dot(&act.q) * inv_sqrt;

        for j in 0..t {
            let e = act.embedded.row(j);
            self.proj_q
                .backward(e, &adapters.layers[Q], scale, g_q.row(j), &mut grads.layers[Q]);
            self.proj_k
                .backward(e, &adapters.layers[K], scale, g_k.row(j), &mut grads.layers[K]);
            self.proj_v
                .backward(e, &adapters.layers[V], scale, g_v.row(j), &mut grads.layers[V]);
        }
        Ok(())
    }

    fn base_parameters(&self) -> Vec<f64> {
        [
            &self.token_embed,
            &self.proj_q,
            &self.proj_k,
            &self.proj_v,
            &self.proj_o,
            &self.proj,
        ]
        .iter()
        .flat_map(|l| l.parameters().copied())
        .collect()
    }
}
