//! Low-rank adapters and the adapted linear layer.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name and shape of a linear layer that receives an adapter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// `delta(x) = scale * up . (down . x)`, with `down: rank x in` and `up: out x rank`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraLayer {
    pub name: String,
    pub down: Array2<f64>,
    pub up: Array2<f64>,
}

impl LoraLayer {
    pub fn shape(&self) -> LayerShape {
        LayerShape {
            name: self.name.clone(),
            in_dim: self.down.ncols(),
            out_dim: self.up.nrows(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterState {
    pub rank: usize,
    pub scale: f64,
    pub layers: Vec<LoraLayer>,
}

impl AdapterState {
    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        AdapterState {
            rank: self.rank,
            scale: self.scale,
            layers: self
                .layers
                .iter()
                .map(|l| LoraLayer {
                    name: l.name.clone(),
                    down: Array2::zeros(l.down.raw_dim()),
                    up: Array2::zeros(l.up.raw_dim()),
                })
                .collect(),
        }
    }

    /// `scale * up . down` for one layer.
    pub fn composite_delta(&self, layer: usize) -> Array2<f64> {
        let l = &self.layers[layer];
        l.up.dot(&l.down) * self.scale
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.down.len() + l.up.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend(l.down.iter());
            out.extend(l.up.iter());
        }
        out
    }

    /// Overwrites parameters from `flat`, in [`AdapterState::flatten`] order.
    pub fn assign(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(Error::Shape(format!(
                "{} values for {} adapter parameters",
                flat.len(),
                self.num_parameters()
            )));
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            for v in l.down.iter_mut().chain(l.up.iter_mut()) {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Checks that the adapters fit `layers` and carry `rank`.
    pub fn check_layers(&self, layers: &[LayerShape]) -> Result<()> {
        if self.layers.len() != layers.len() {
            return Err(Error::Shape(format!(
                "{} adapter layers for {} adapted layers",
                self.layers.len(),
                layers.len()
            )));
        }
        for (l, shape) in self.layers.iter().zip(layers) {
            let ok = l.name == shape.name
                && l.down.dim() == (self.rank, shape.in_dim)
                && l.up.dim() == (shape.out_dim, self.rank);
            if !ok {
                return Err(Error::Shape(format!(
                    "adapter `{}` ({:?}, {:?}) does not fit layer `{}` {}->{} at rank {}",
                    l.name,
                    l.down.dim(),
                    l.up.dim(),
                    shape.name,
                    shape.in_dim,
                    shape.out_dim,
                    self.rank
                )));
            }
        }
        Ok(())
    }
}

/// Down-projections drawn from `N(0, 1/in_dim)`, up-projections zero, so the
/// adapted network starts out identical to the frozen one.
pub fn init_adapters(layers: &[LayerShape], rank: usize, scale: f64, seed: u64) -> Result<AdapterState> {
    if rank == 0 {
        return Err(Error::Precondition("adapter rank must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(layers.len());
    for shape in layers {
        if rank > shape.in_dim.min(shape.out_dim) {
            return Err(Error::Precondition(format!(
                "rank {rank} exceeds dimensions of layer `{}` ({}x{})",
                shape.name, shape.out_dim, shape.in_dim
            )));
        }
        let normal = Normal::new(0.0, (1.0 / shape.in_dim as f64).sqrt()).expect("positive std");
        let down = Array2::from_shape_simple_fn((rank, shape.in_dim), || normal.sample(&mut rng));
        out.push(LoraLayer {
            name: shape.name.clone(),
            down,
            up: Array2::zeros((shape.out_dim, rank)),
        });
    }
    Ok(AdapterState {
        rank,
        scale,
        layers: out,
    })
}

/// Frozen `y = W x + b`, optionally with a low-rank delta.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn random(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (1.0 / in_dim as f64).sqrt()).expect("positive std");
        Linear {
            weight: Array2::from_shape_simple_fn((out_dim, in_dim), || normal.sample(rng)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn shape(&self, name: &str) -> LayerShape {
        LayerShape {
            name: name.to_string(),
            in_dim: self.weight.ncols(),
            out_dim: self.weight.nrows(),
        }
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>, adapter: Option<(&LoraLayer, f64)>) -> Array1<f64> {
        let mut y = self.weight.dot(&x) + &self.bias;
        if let Some((lora, scale)) = adapter {
            let hidden = lora.down.dot(&x);
            y.scaled_add(scale, &lora.up.dot(&hidden));
        }
        y
    }

    /// Accumulates adapter gradients for upstream gradient `gy` at input `x` and
    /// returns the gradient with respect to `x`.
    pub fn backward(
        &self,
        x: ArrayView1<'_, f64>,
        lora: &LoraLayer,
        scale: f64,
        gy: ArrayView1<'_, f64>,
        grad: &mut LoraLayer,
    ) -> Array1<f64> {
        let hidden = lora.down.dot(&x);
        let g_hidden = lora.up.t().dot(&gy) * scale;
        add_outer(&mut grad.up, scale, gy, hidden.view());
        add_outer(&mut grad.down, 1.0, g_hidden.view(), x);
        self.weight.t().dot(&gy) + lora.down.t().dot(&g_hidden)
    }

    pub(crate) fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }
}

/// `m += alpha * a b^T`.
pub(crate) fn add_outer(m: &mut Array2<f64>, alpha: f64, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) {
    for (mut row, &ai) in m.rows_mut().into_iter().zip(a) {
        row.scaled_add(alpha * ai, &b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shapes() -> Vec<LayerShape> {
        vec![
            LayerShape { name: "a".into(), in_dim: 12, out_dim: 10 },
            LayerShape { name: "b".into(), in_dim: 10, out_dim: 9 },
        ]
    }

    #[test]
    fn zero_delta_at_init() {
        let state = init_adapters(&shapes(), 8, 0.125, 1).unwrap();
        for i in 0..state.layers.len() {
            assert!(state.composite_delta(i).iter().all(|&v| v == 0.0));
        }
        state.check_layers(&shapes()).unwrap();
    }

    #[test]
    fn seeded_determinism() {
        let a = init_adapters(&shapes(), 4, 0.25, 7).unwrap();
        let b = init_adapters(&shapes(), 4, 0.25, 7).unwrap();
        let c = init_adapters(&shapes(), 4, 0.25, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.layers[0].down, c.layers[0].down);
    }

    #[test]
    fn rank_too_large() {
        assert!(init_adapters(&shapes(), 10, 0.1, 0).is_err());
        assert!(init_adapters(&shapes(), 0, 0.1, 0).is_err());
    }

    #[test]
    fn flatten_assign() {
        let mut s = init_adapters(&shapes(), 2, 0.5, 3).unwrap();
        let mut flat = s.flatten();
        flat.iter_mut().for_each(|v| *v += 1.0);
        s.assign(&flat).unwrap();
        assert_eq!(s.flatten(), flat);
        assert!(s.assign(&flat[1..]).is_err());
    }

    #[test]
    fn linear_backward_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lin = Linear::random(5, 4, &mut rng);
        let mut lora = init_adapters(&[lin.shape("l")], 2, 0.5, 2).unwrap();
        lora.layers[0].up.iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * i as f64 - 0.3);
        let x = Array1::from(vec![0.3, -0.2, 0.9, 0.1, -0.5]);
        let gy = Array1::from(vec![1.0, -2.0, 0.5, 0.25]);
        let mut grad = lora.zeros_like();
        let gx = lin.backward(x.view(), &lora.layers[0], 0.5, gy.view(), &mut grad.layers[0]);
        let f = |x: &Array1<f64>, l: &AdapterState| lin.forward(x.view(), Some((&l.layers[0], 0.5))).dot(&gy);
        let h = 1e-6;
        for k in 0..5 {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            assert!(((f(&xp, &lora) - f(&xm, &lora)) / (2.0 * h) - gx[k]).abs() < 1e-8);
        }
        let flat = lora.flatten();
        let g = grad.flatten();
        for k in 0..flat.len() {
            let mut p = lora.clone();
            let mut fp = flat.clone();
            fp[k] += h;
            p.assign(&fp).unwrap();
            let mut m = lora.clone();
            let mut fm = flat.clone();
            fm[k] -= h;
            m.assign(&fm).unwrap();
            assert!(((f(&x, &p) - f(&x, &m)) / (2.0 * h) - g[k]).abs() < 1e-8);
        }
    }
}
