//! Identity-balanced minibatches: `batch_identities` distinct identities with
//! `samples_per_identity` distinct samples each.

use rand::seq::index::sample;
use rand::Rng;

use crate::calibration::SupervisionSet;
use crate::error::{Error, Result};
use crate::model::{Hyperparams, SampleRecord};

/// One batch position: class index and sample index within that class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSlot {
    pub class: usize,
    pub member: usize,
}

/// Draws a batch from classes of the given sizes. Classes with fewer than
/// `samples_per_identity` members are never drawn.
pub fn sample_slots<R: Rng + ?Sized>(class_sizes: &[usize], hp: &Hyperparams, rng: &mut R) -> Result<Vec<BatchSlot>> {
    let per = hp.samples_per_identity;
    let eligible: Vec<usize> = class_sizes
        .iter()
        .enumerate()
        .filter(|&(_, &n)| n >= per)
        .map(|(c, _)| c)
        .collect();
    if eligible.len() < hp.batch_identities {
        return Err(Error::Precondition(format!(
            "{} identities have >= {per} samples, batch needs {}",
            eligible.len(),
            hp.batch_identities
        )));
    }
    let mut slots = Vec::with_capacity(hp.batch_size());
    for pick in sample(rng, eligible.len(), hp.batch_identities) {
        let class = eligible[pick];
        for member in sample(rng, class_sizes[class], per) {
            slots.push(BatchSlot { class, member });
        }
    }
    Ok(slots)
}

/// Samples with their class labels, where class `c` is the `c`-th identity of
/// `set` (identity ids are sorted in a supervision set).
pub fn sample_minibatch<'a, R: Rng + ?Sized>(
    set: &'a SupervisionSet,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<Vec<(&'a SampleRecord, usize)>> {
    let sizes: Vec<usize> = set.identities.iter().map(|g| g.samples.len()).collect();
    Ok(sample_slots(&sizes, hp, rng)?
        .into_iter()
        .map(|s| (&set.identities[s.class].samples[s.member], s.class))
        .collect())
}
