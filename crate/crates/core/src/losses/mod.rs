//! Training objective over unit-norm embeddings, with analytic gradients.
//!
//! Every loss returns its value, the per-sample terms and the gradient with
//! respect to the unit embeddings `z_hat`. [`normalize_rows_backward`] carries
//! that gradient back to the raw embeddings. The angular loss also returns the
//! gradient with respect to the raw (unnormalized) class weights.

mod angular;
mod contrastive;
pub mod gradcheck;
mod regularization;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use angular::{angular_margin_loss, cosine_logits, AngularMarginLoss, ARCCOS_CLAMP_EPS};
pub use contrastive::{supcon_loss, ContrastiveLoss};
pub use gradcheck::{finite_difference_check, finite_difference_check_with, GradCheck, Stencil};
pub use regularization::{embedding_reg_loss, RegularizationLoss};

use crate::encoder::ClassHead;
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ZERO_NORM};

/// Tolerance on `| ||row|| - 1 |` for inputs that must be unit vectors.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ang: f64,
    pub l_scon: f64,
    pub l_reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(l_ang: f64, l_scon: f64, l_reg: f64, lambda_scon: f64, lambda_reg: f64) -> Self {
        LossBreakdown {
            l_ang,
            l_scon,
            l_reg,
            total: l_ang + lambda_scon * l_scon + lambda_reg * l_reg,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.l_ang, self.l_scon, self.l_reg, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// The full objective's value and gradients.
#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub breakdown: LossBreakdown,
    /// d total / d z_hat, same shape as the embeddings.
    pub grad_embeddings: Array2<f64>,
    /// d total / d w (raw class weights), same shape as the head.
    pub grad_class_weights: Array2<f64>,
}

/// `l_ang + lambda_scon * l_scon + lambda_reg * l_reg`.
pub fn total_loss(
    z_hat: ArrayView2<'_, f64>,
    z_hat_ref: ArrayView2<'_, f64>,
    labels: &[usize],
    head: &ClassHead,
    hp: &Hyperparams,
) -> Result<TotalLoss> {
    let ang = angular_margin_loss(z_hat, labels, head, hp.margin_m, hp.scale_alpha)?;
    let scon = supcon_loss(z_hat, labels, hp.temperature_tau)?;
    let reg = embedding_reg_loss(z_hat, z_hat_ref)?;
    let breakdown = LossBreakdown::combine(ang.loss, scon.loss, reg.loss, hp.lambda_scon, hp.lambda_reg);
    if !breakdown.is_finite() {
        return Err(Error::NonFinite(format!("loss {breakdown:?}")));
    }
    let grad_embeddings =
        ang.grad_embeddings + &(scon.grad_embeddings * hp.lambda_scon) + &(reg.grad_embeddings * hp.lambda_reg);
    Ok(TotalLoss {
        breakdown,
        grad_embeddings,
        grad_class_weights: ang.grad_class_weights,
    })
}

/// Row-wise l2 normalization, returning the unit rows and the original norms.
pub fn normalize_rows(z: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms: Array1<f64> = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(i) = norms.iter().position(|&n| !n.is_finite() || n < ZERO_NORM) {
        return Err(Error::NonFinite(format!("row {i} has norm {}", norms[i])));
    }
    let unit = &z / &norms.view().insert_axis(Axis(1));
    Ok((unit, norms))
}

/// Back-propagates `grad` w.r.t. unit rows to the raw rows:
/// `(g - u (u . g)) / ||z||`.
pub fn normalize_rows_backward(
    unit: ArrayView2<'_, f64>,
    norms: &Array1<f64>,
    grad: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut out = grad.to_owned();
    for ((mut g, u), &n) in out.rows_mut().into_iter().zip(unit.rows()).zip(norms) {
        let proj = u.dot(&g);
        g.scaled_add(-proj, &u);
        g /= n;
    }
    out
}

pub(crate) fn check_unit_rows(m: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    for (i, row) in m.rows().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if !n.is_finite() {
            return Err(Error::NonFinite(format!("{what} row {i}")));
        }
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Precondition(format!(
                "{what} row {i} has norm {n}, expected unit norm"
            )));
        }
    }
    Ok(())
}
