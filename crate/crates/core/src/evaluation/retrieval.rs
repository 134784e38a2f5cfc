use rayon::prelude::*;

use super::cosine_similarity;
use crate::error::{Error, Result};
use crate::model::{EmbeddingMatrix, SampleRecord};

/// Embeddings with an identity label per row.
#[derive(Debug, Clone)]
pub struct LabeledEmbeddings {
    pub embeddings: EmbeddingMatrix,
    pub identities: Vec<String>,
}

impl LabeledEmbeddings {
    pub fn new(embeddings: EmbeddingMatrix, identities: Vec<String>) -> Result<Self> {
        if identities.len() != embeddings.len() {
            return Err(Error::Shape(format!(
                "{} identity labels for {} embeddings",
                identities.len(),
                embeddings.len()
            )));
        }
        Ok(LabeledEmbeddings { embeddings, identities })
    }

    /// Labels each row with the `identity_id` of the sample of the same id.
    pub fn from_samples(embeddings: EmbeddingMatrix, samples: &[SampleRecord]) -> Result<Self> {
        let by_id: std::collections::HashMap<&str, &str> = samples
            .iter()
            .map(|s| (s.sample_id.as_str(), s.identity_id.as_str()))
            .collect();
        let identities = embeddings
            .ids()
            .iter()
            .map(|id| {
                by_id.get(id.as_str()).map(|s| s.to_string()).ok_or_else(|| Error::UnknownId {
                    kind: "sample",
                    id: id.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Self::new(embeddings, identities)
    }

    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }
}

/// Indices of the `k` gallery rows most similar to `query`, skipping `skip`.
/// Equal similarities keep gallery order.
fn top_k(gallery: &EmbeddingMatrix, query: ndarray::ArrayView1<'_, f64>, skip: Option<usize>, k: usize) -> Result<Vec<usize>> {
    let mut sims = Vec::with_capacity(gallery.len());
    for j in 0..gallery.len() {
        if Some(j) != skip {
            sims.push((j, cosine_similarity(query, gallery.row(j))?));
        }
    }
    sims.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("cosines are finite"));
    Ok(sims.into_iter().take(k).map(|(j, _)| j).collect())
}

/// Mean over queries of the fraction of the top-`k` gallery neighbors that
/// share the query's identity. A query whose sample id is in the gallery does
/// not retrieve itself.
pub fn retrieval_topk_accuracy(gallery: &LabeledEmbeddings, queries: &LabeledEmbeddings, k: usize) -> Result<f64> {
    if gallery.is_empty() {
        return Err(Error::Precondition("empty gallery".into()));
    }
    if queries.is_empty() {
        return Err(Error::Precondition("no queries".into()));
    }
    if k == 0 {
        return Err(Error::Precondition("k must be >= 1".into()));
    }
    let hits: Vec<f64> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let id = &queries.embeddings.ids()[q];
            let skip = gallery.embeddings.position(id);
            let available = gallery.len() - usize::from(skip.is_some());
            if k > available {
                return Err(Error::Precondition(format!(
                    "k = {k} exceeds the {available} gallery rows available to query `{id}`"
                )));
            }
            let top = top_k(&gallery.embeddings, queries.embeddings.row(q), skip, k)?;
            let same = top
                .iter()
                .filter(|&&j| gallery.identities[j] == queries.identities[q])
                .count();
            Ok(same as f64 / k as f64)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().sum::<f64>() / hits.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(rows: &[(&str, &str, [f64; 2])]) -> LabeledEmbeddings {
        let m = EmbeddingMatrix::from_rows(rows.iter().map(|(id, _, v)| (id.to_string(), v.to_vec())).collect()).unwrap();
        LabeledEmbeddings::new(m, rows.iter().map(|(_, p, _)| p.to_string()).collect()).unwrap()
    }

    fn gallery() -> LabeledEmbeddings {
        labeled(&[
            ("a1", "A", [1.0, 0.1]),
            ("b1", "B", [0.1, 1.0]),
            ("a2", "A", [1.0, -0.1]),
            ("b2", "B", [-0.1, 1.0]),
        ])
    }

    #[test]
    fn collinear_query_hits() {
        let q = labeled(&[("q", "A", [2.0, 0.0])]);
        assert_eq!(retrieval_topk_accuracy(&gallery(), &q, 2).unwrap(), 1.0);
    }

    #[test]
    fn full_gallery_is_prior() {
        let q = labeled(&[("q", "A", [0.3, 0.7])]);
        assert_eq!(retrieval_topk_accuracy(&gallery(), &q, 4).unwrap(), 0.5);
        assert!(retrieval_topk_accuracy(&gallery(), &q, 5).is_err());
    }

    #[test]
    fn ties_pick_first_gallery_row() {
        let g = labeled(&[("g1", "B", [1.0, 0.0]), ("g2", "A", [1.0, 0.0])]);
        let q = labeled(&[("q", "B", [0.0, 1.0])]);
        assert_eq!(retrieval_topk_accuracy(&g, &q, 1).unwrap(), 1.0);
        let g = labeled(&[("g2", "A", [1.0, 0.0]), ("g1", "B", [1.0, 0.0])]);
        assert_eq!(retrieval_topk_accuracy(&g, &q, 1).unwrap(), 0.0);
    }

    #[test]
    fn self_match_excluded() {
        let g = gallery();
        // each row's nearest other row is its same-identity partner
        assert_eq!(retrieval_topk_accuracy(&g, &g, 1).unwrap(), 1.0);
        assert!(retrieval_topk_accuracy(&g, &g, 4).is_err());
        assert!((retrieval_topk_accuracy(&g, &g, 3).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }
}
