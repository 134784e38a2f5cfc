//! Verification, retrieval, pose-consistency and human-agreement metrics over
//! any set of embeddings. Everything is cosine based, so rescaling embeddings
//! changes no metric.
//!
//! Decision rules: ROC thresholds accept `score > theta`, fixed-threshold
//! accuracy accepts `score >= theta`.

mod agreement;
mod pose;
mod report;
mod retrieval;
mod verification;

use ndarray::{Array1, ArrayView1};

pub use agreement::{agreement_metrics, Agreement, Contingency};
pub use pose::{pose_consistency, pose_consistency_by_identity, PoseReport};
pub use report::{
    export_report, linear_fpr_grid, log_fpr_grid, EvalReport, ACCURACY_THRESHOLDS, FPR_TARGETS, REPORT_FILE,
    ROC_LINEAR_FILE, ROC_LOG_FILE,
};
pub use retrieval::{retrieval_topk_accuracy, LabeledEmbeddings};
pub use verification::{
    accuracy_at_threshold, auroc, format_pairs, load_pairs, parse_pairs, roc_curve, score_pairs, tpr_at_fpr,
    write_pairs, Pair, RocCurve, RocPoint, VerificationScores, PAIR_LIST_HEADER,
};

use crate::error::{Error, Result};
use crate::model::ZERO_NORM;

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// `a . b / (|a| |b|)`, clamped to [-1, 1].
pub fn cosine_similarity(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Err(Error::NonFinite("cosine similarity of a zero vector".into()));
    }
    let c = a.dot(&b) / (na * nb);
    if !c.is_finite() {
        return Err(Error::NonFinite(format!("cosine similarity {c}")));
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// `1 - cos(source, generated)` and its gradient with respect to `generated`,
/// for use as an identity-preservation loss by a downstream generator.
pub fn identity_loss(source: ArrayView1<'_, f64>, generated: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)> {
    let c = cosine_similarity(source, generated)?;
    let (ns, ng) = (norm(source), norm(generated));
    let s_hat = &source / ns;
    let g_hat = &generated / ng;
    // d cos / d g = (s_hat - g_hat cos) / |g|
    let grad = (&g_hat * c - &s_hat) / ng;
    Ok((1.0 - c, grad))
}
