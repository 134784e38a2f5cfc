//! Cross-checks between a sample manifest and a response log.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::Serialize;

use super::response::ResponseRecord;
use super::sample::{Method, SampleRecord, STRENGTH_LEVELS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrphanReference {
    pub response_id: String,
    pub sample_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrengthCoverage {
    pub method: Method,
    pub style: String,
    pub levels_present: usize,
    pub levels_total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub orphan_references: Vec<OrphanReference>,
    /// Identities with fewer than two samples; these cannot contribute contrastive positives.
    pub untrainable_identities: Vec<String>,
    pub coverage: Vec<StrengthCoverage>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.orphan_references.is_empty() && self.untrainable_identities.is_empty()
    }
}

pub fn validate_dataset(samples: &[SampleRecord], responses: &[ResponseRecord]) -> ValidationReport {
    let known: HashSet<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
    let orphan_references = responses
        .iter()
        .flat_map(|r| {
            r.referenced_samples()
                .filter(|id| !known.contains(id))
                .map(move |id| OrphanReference {
                    response_id: r.response_id.clone(),
                    sample_id: id.to_string(),
                })
        })
        .collect();

    let mut per_identity: BTreeMap<&str, usize> = BTreeMap::new();
    for s in samples {
        *per_identity.entry(&s.identity_id).or_default() += 1;
    }
    let untrainable_identities = per_identity
        .into_iter()
        .filter(|&(_, n)| n < 2)
        .map(|(id, _)| id.to_string())
        .collect();

    let mut levels: BTreeMap<(&Method, &str), BTreeSet<u8>> = BTreeMap::new();
    for (method, style, strength) in samples.iter().filter_map(SampleRecord::combo) {
        levels.entry((method, style)).or_default().insert(strength.level());
    }
    let coverage = levels
        .into_iter()
        .map(|((method, style), set)| StrengthCoverage {
            method: method.clone(),
            style: style.to_string(),
            levels_present: set.len(),
            levels_total: usize::from(STRENGTH_LEVELS),
        })
        .collect();

    ValidationReport {
        orphan_references,
        untrainable_identities,
        coverage,
    }
}
