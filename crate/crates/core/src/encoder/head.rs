use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ZERO_NORM;

/// Raw class centers, one row per training identity. Losses normalize the rows
/// before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHead {
    weights: Array2<f64>,
}

impl ClassHead {
    pub fn from_weights(weights: Array2<f64>) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::Shape(format!("class head {:?} is empty", weights.dim())));
        }
        for (c, row) in weights.rows().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if !n.is_finite() || n < ZERO_NORM {
                return Err(Error::NonFinite(format!("class {c} weight norm {n}")));
            }
        }
        Ok(ClassHead { weights })
    }

    /// Standard-normal rows, seeded.
    pub fn random(num_classes: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Array2::from_shape_simple_fn((num_classes, dim), || StandardNormal.sample(&mut rng));
        Self::from_weights(weights)
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().copied().collect()
    }

    pub fn assign(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "{} values for {} class weights",
                flat.len(),
                self.weights.len()
            )));
        }
        self.weights.iter_mut().zip(flat).for_each(|(w, &v)| *w = v);
        Ok(())
    }
}
