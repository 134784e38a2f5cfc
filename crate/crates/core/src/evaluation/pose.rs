use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{cosine_similarity, LabeledEmbeddings};
use crate::error::{Error, Result};
use crate::model::EmbeddingMatrix;

/// Mean cosine similarity over all unordered pairs of views of one identity.
pub fn pose_consistency(views: &EmbeddingMatrix) -> Result<f64> {
    let n = views.len();
    if n < 2 {
        return Err(Error::Precondition(format!("pose consistency needs >= 2 views, got {n}")));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += cosine_similarity(views.row(i), views.row(j))?;
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseReport {
    pub per_identity: BTreeMap<String, f64>,
    /// Unweighted mean of the per-identity values.
    pub mean: f64,
}

/// Per-identity consistency and their plain mean. Identities with one view are
/// an error.
pub fn pose_consistency_by_identity(views: &LabeledEmbeddings) -> Result<PoseReport> {
    let mut rows: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, identity) in views.embeddings.ids().iter().zip(&views.identities) {
        rows.entry(identity).or_default().push(id);
    }
    if rows.is_empty() {
        return Err(Error::Precondition("no views".into()));
    }
    let mut per_identity = BTreeMap::new();
    for (identity, ids) in rows {
        let value = pose_consistency(&views.embeddings.select(&ids)?)
            .map_err(|e| Error::Precondition(format!("identity `{identity}`: {e}")))?;
        per_identity.insert(identity.to_string(), value);
    }
    let mean = per_identity.values().sum::<f64>() / per_identity.len() as f64;
    Ok(PoseReport { per_identity, mean })
}
