use ndarray::{Array2, ArrayView2};

use crate::calibration::SupervisionSet;
use crate::error::{Error, Result};
use crate::model::EmbeddingMatrix;

/// A supervision set joined with backbone input features, indexed by class.
///
/// Class `c` is the `c`-th identity id in sorted order (the order of a
/// [`SupervisionSet`]); `members[c]` lists that identity's rows of `inputs`.
#[derive(Debug, Clone)]
pub struct TrainingData {
    classes: Vec<String>,
    sample_ids: Vec<String>,
    inputs: Array2<f64>,
    members: Vec<Vec<usize>>,
}

impl TrainingData {
    /// Looks up each sample's feature row by `sample_id`.
    pub fn new(set: &SupervisionSet, features: &EmbeddingMatrix) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::Precondition("supervision set is empty".into()));
        }
        let mut classes = Vec::with_capacity(set.identities.len());
        let mut sample_ids = Vec::with_capacity(set.sample_count());
        let mut members = Vec::with_capacity(set.identities.len());
        let mut inputs = Array2::zeros((set.sample_count(), features.dim()));
        for group in &set.identities {
            let mut rows = Vec::with_capacity(group.samples.len());
            for s in &group.samples {
                let v = features.get(&s.sample_id).ok_or_else(|| Error::UnknownId {
                    kind: "feature row",
                    id: s.sample_id.clone(),
                })?;
                let row = sample_ids.len();
                inputs.row_mut(row).assign(&v);
                sample_ids.push(s.sample_id.clone());
                rows.push(row);
            }
            classes.push(group.identity_id.clone());
            members.push(rows);
        }
        if classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Precondition("supervision identities must be strictly sorted".into()));
        }
        Ok(TrainingData {
            classes,
            sample_ids,
            inputs,
            members,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.members[class]
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn sample_id(&self, row: usize) -> &str {
        &self.sample_ids[row]
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }
}
