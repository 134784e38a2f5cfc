//! Pull-back of adapted embeddings toward the frozen reference embeddings.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RegularizationLoss {
    pub loss: f64,
    pub per_sample: Array1<f64>,
    pub grad_embeddings: Array2<f64>,
}

/// Mean over rows of `||z_hat_i - z_ref_i||^2`.
pub fn embedding_reg_loss(z_hat: ArrayView2<'_, f64>, z_hat_ref: ArrayView2<'_, f64>) -> Result<RegularizationLoss> {
    if z_hat.dim() != z_hat_ref.dim() {
        return Err(Error::Shape(format!(
            "adapted {:?} vs reference {:?}",
            z_hat.dim(),
            z_hat_ref.dim()
        )));
    }
    let batch = z_hat.nrows();
    if batch == 0 {
        return Err(Error::Precondition("empty batch".into()));
    }
    let diff = &z_hat - &z_hat_ref;
    let per_sample = diff.map_axis(Axis(1), |r| r.dot(&r));
    Ok(RegularizationLoss {
        loss: per_sample.mean().expect("nonempty batch"),
        per_sample,
        grad_embeddings: diff * (2.0 / batch as f64),
    })
}
