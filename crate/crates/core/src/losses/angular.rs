//! Additive angular margin softmax over normalized class centers.

use ndarray::{Array1, Array2, ArrayView2};

use super::{check_unit_rows, normalize_rows, normalize_rows_backward};
use crate::encoder::ClassHead;
use crate::error::{Error, Result};

/// Cosines are kept within `[-1 + eps, 1 - eps]` where the margin derivative
/// divides by `sin(theta)`.
pub const ARCCOS_CLAMP_EPS: f64 = 1e-7;

/// Cosine of every (embedding, class center) pair; `z_hat` is `B x d`,
/// `w_hat` is `C x d`, the result is `B x C`.
pub fn cosine_logits(z_hat: ArrayView2<'_, f64>, w_hat: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if z_hat.ncols() != w_hat.ncols() {
        return Err(Error::Shape(format!(
            "embedding dim {} vs class dim {}",
            z_hat.ncols(),
            w_hat.ncols()
        )));
    }
    check_unit_rows(z_hat, "embedding")?;
    check_unit_rows(w_hat, "class weight")?;
    Ok(z_hat.dot(&w_hat.t()).mapv(|c| c.clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone)]
pub struct AngularMarginLoss {
    pub loss: f64,
    pub per_sample: Array1<f64>,
    pub grad_embeddings: Array2<f64>,
    pub grad_class_weights: Array2<f64>,
}

/// `cos(arccos(c) + m)` for `c` in `[-1, 1]`, and its derivative in `c`.
fn margin_cosine(c: f64, margin: f64) -> (f64, f64) {
    let (sin_m, cos_m) = margin.sin_cos();
    let c = c.clamp(-1.0, 1.0);
    let value = c * cos_m - (1.0 - c * c).max(0.0).sqrt() * sin_m;
    let cg = c.clamp(-1.0 + ARCCOS_CLAMP_EPS, 1.0 - ARCCOS_CLAMP_EPS);
    let deriv = cos_m + sin_m * cg / (1.0 - cg * cg).sqrt();
    (value, deriv)
}

/// Mean over the batch of
/// `-log( e^{a cos(theta_y + m)} / (e^{a cos(theta_y + m)} + sum_{c != y} e^{a cos theta_c}) )`.
///
/// `labels` are zero-based class indices into `head`.
pub fn angular_margin_loss(
    z_hat: ArrayView2<'_, f64>,
    labels: &[usize],
    head: &ClassHead,
    margin: f64,
    scale: f64,
) -> Result<AngularMarginLoss> {
    let batch = z_hat.nrows();
    if labels.len() != batch {
        return Err(Error::Shape(format!("{} labels for {batch} embeddings", labels.len())));
    }
    if batch == 0 {
        return Err(Error::Precondition("empty batch".into()));
    }
    let classes = head.num_classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Precondition(format!("label {bad} outside 0..{classes}")));
    }
    if z_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding".into()));
    }
    let (w_hat, w_norms) = normalize_rows(head.weights().view())?;
    let cosines = cosine_logits(z_hat, w_hat.view())?;

    let mut per_sample = Array1::zeros(batch);
    // d loss / d cos, already divided by the batch size
    let mut grad_cos = Array2::zeros((batch, classes));
    let mut logits = vec![0.0; classes];
    for (i, &y) in labels.iter().enumerate() {
        let row = cosines.row(i);
        let (target, target_deriv) = margin_cosine(row[y], margin);
        for (c, logit) in logits.iter_mut().enumerate() {
            *logit = scale * if c == y { target } else { row[c] };
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|&s| (s - max).exp()).sum();
        let log_z = max + sum.ln();
        per_sample[i] = log_z - logits[y];
        for c in 0..classes {
            let p = (logits[c] - log_z).exp();
            let d_logit = if c == y { p - 1.0 } else { p };
            let d_cos = if c == y { scale * target_deriv } else { scale };
            grad_cos[[i, c]] = d_logit * d_cos / batch as f64;
        }
    }
    if per_sample.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::NonFinite("angular loss".into()));
    }

    let grad_embeddings = grad_cos.dot(&w_hat);
    let grad_w_hat = grad_cos.t().dot(&z_hat);
    let grad_class_weights = normalize_rows_backward(w_hat.view(), &w_norms, grad_w_hat.view());
    Ok(AngularMarginLoss {
        loss: per_sample.mean().expect("nonempty batch"),
        per_sample,
        grad_embeddings,
        grad_class_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn head(w: Array2<f64>) -> ClassHead {
        ClassHead::from_weights(w).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let c = cosine_logits(array![[0.6, 0.8]].view(), array![[1.0, 0.0], [0.6, 0.8], [-0.8, 0.6]].view()).unwrap();
        assert!((c[[0, 0]] - 0.6).abs() < 1e-15);
        assert!((c[[0, 1]] - 1.0).abs() < 1e-15);
        assert!(c[[0, 2]].abs() < 1e-15);
    }

    #[test]
    fn non_unit_input_rejected() {
        assert!(cosine_logits(array![[2.0, 0.0]].view(), array![[1.0, 0.0]].view()).is_err());
    }

    #[test]
    fn single_class_is_zero() {
        let z = array![[0.6, 0.8], [1.0, 0.0]];
        let out = angular_margin_loss(z.view(), &[0, 0], &head(array![[0.3, -2.0]]), 0.5, 32.0).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn margin_example_matches_closed_form() {
        let out = angular_margin_loss(
            array![[1.0, 0.0]].view(),
            &[0],
            &head(array![[1.0, 0.0], [0.0, 1.0]]),
            0.5,
            1.0,
        )
        .unwrap();
        let expected = (1.0 + (-(0.5f64).cos()).exp()).ln();
        assert!((out.loss - expected).abs() < 1e-12, "{}", out.loss);
        assert!((out.loss - 0.347_685_444_867_250_7).abs() < 1e-12);
    }

    #[test]
    fn symmetric_logits_give_log_c() {
        // both cosines 0.5 with no margin
        let s = 0.75f64.sqrt();
        let out = angular_margin_loss(
            array![[1.0, 0.0]].view(),
            &[0],
            &head(array![[0.5, s], [0.5, -s]]),
            0.0,
            1.0,
        )
        .unwrap();
        assert!((out.loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let err = angular_margin_loss(array![[1.0, 0.0]].view(), &[2], &head(array![[1.0, 0.0], [0.0, 1.0]]), 0.5, 32.0)
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn margin_cosine_matches_arccos_route() {
        for &c in &[-0.99, -0.3, 0.0, 0.42, 0.999] {
            for &m in &[0.0, 0.5, 1.2] {
                let (v, _) = margin_cosine(c, m);
                assert!((v - ((c as f64).acos() + m).cos()).abs() < 1e-12);
            }
        }
    }
}
