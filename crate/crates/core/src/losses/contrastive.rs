//! Supervised contrastive loss over in-batch positives.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ContrastiveLoss {
    pub loss: f64,
    pub per_anchor: Array1<f64>,
    pub grad_embeddings: Array2<f64>,
}

/// For each anchor `i`, the mean over positives `p` (same label, `p != i`) of
/// `-log( e^{z_i.z_p / tau} / sum_{a != i} e^{z_i.z_a / tau} )`, averaged over anchors.
///
/// Every anchor must have at least one positive.
pub fn supcon_loss(z_hat: ArrayView2<'_, f64>, labels: &[usize], tau: f64) -> Result<ContrastiveLoss> {
    let batch = z_hat.nrows();
    if labels.len() != batch {
        return Err(Error::Shape(format!("{} labels for {batch} embeddings", labels.len())));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Precondition(format!("temperature must be > 0, got {tau}")));
    }
    let positives: Vec<usize> = (0..batch)
        .map(|i| (0..batch).filter(|&p| p != i && labels[p] == labels[i]).count())
        .collect();
    if let Some(i) = positives.iter().position(|&n| n == 0) {
        return Err(Error::Precondition(format!(
            "anchor {i} (label {}) has no in-batch positive",
            labels[i]
        )));
    }

    let sims = z_hat.dot(&z_hat.t()) / tau;
    let mut per_anchor = Array1::zeros(batch);
    // d loss / d sim (already sim = dot / tau), scaled by 1/B
    let mut grad_sim = Array2::<f64>::zeros((batch, batch));
    for i in 0..batch {
        let row = sims.row(i);
        let max = (0..batch)
            .filter(|&a| a != i)
            .map(|a| row[a])
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..batch).filter(|&a| a != i).map(|a| (row[a] - max).exp()).sum();
        let log_z = max + sum.ln();
        let inv_p = 1.0 / positives[i] as f64;
        let mut li = 0.0;
        for a in (0..batch).filter(|&a| a != i) {
            let q = (row[a] - log_z).exp();
            let pos = labels[a] == labels[i];
            if pos {
                li += inv_p * (log_z - row[a]);
            }
            grad_sim[[i, a]] = (q - if pos { inv_p } else { 0.0 }) / batch as f64;
        }
        per_anchor[i] = li;
    }
    if per_anchor.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::NonFinite("contrastive loss".into()));
    }
    // sim_ia = z_i . z_a / tau contributes to both rows
    let sym = &grad_sim + &grad_sim.t();
    let grad_embeddings = sym.dot(&z_hat) / tau;
    Ok(ContrastiveLoss {
        loss: per_anchor.mean().expect("nonempty batch"),
        per_anchor,
        grad_embeddings,
    })
}
