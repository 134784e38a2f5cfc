//! Perceptual-positive supervision sets built from calibrated recognition curves.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::curve::{select_reliable_levels, RecognitionCurve};
use crate::error::{Error, Result};
use crate::model::{self, Method, Role, SampleRecord, Strength};

/// Recognition threshold for perceptual positives.
pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedLevel {
    pub strength: Strength,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSelection {
    pub method: Method,
    pub style: String,
    pub levels: Vec<SelectedLevel>,
}

/// Sidecar describing which levels were selected for each (method, style).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub threshold: f64,
    pub combos: Vec<ComboSelection>,
}

impl Provenance {
    fn allows(&self, method: &Method, style: &str, strength: Strength) -> bool {
        self.combos
            .iter()
            .any(|c| &c.method == method && c.style == style && c.levels.iter().any(|l| l.strength == strength))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("provenance always serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityGroup {
    pub identity_id: String,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionSet {
    pub identities: Vec<IdentityGroup>,
    pub provenance: Provenance,
}

impl SupervisionSet {
    pub fn threshold(&self) -> f64 {
        self.provenance.threshold
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.identities.iter().map(|g| g.samples.len()).sum()
    }

    pub fn samples(&self) -> impl Iterator<Item = &SampleRecord> {
        self.identities.iter().flat_map(|g| g.samples.iter())
    }

    /// Regroups a flat manifest by identity, using the canonical ordering.
    pub fn from_samples(samples: Vec<SampleRecord>, provenance: Provenance) -> Self {
        let mut groups: BTreeMap<String, Vec<SampleRecord>> = BTreeMap::new();
        for s in samples {
            groups.entry(s.identity_id.clone()).or_default().push(s);
        }
        let identities = groups
            .into_iter()
            .map(|(identity_id, mut samples)| {
                samples.sort_by(sample_order);
                IdentityGroup { identity_id, samples }
            })
            .collect();
        SupervisionSet {
            identities,
            provenance,
        }
    }

    pub fn save(&self, manifest: impl AsRef<Path>, provenance: impl AsRef<Path>) -> Result<()> {
        let flat: Vec<SampleRecord> = self.samples().cloned().collect();
        model::write_manifest(manifest, &flat)?;
        self.provenance.save(provenance)
    }

    pub fn load(manifest: impl AsRef<Path>, provenance: impl AsRef<Path>) -> Result<Self> {
        let samples = model::load_sample_manifest(manifest)?;
        let provenance = Provenance::load(provenance)?;
        Ok(Self::from_samples(samples, provenance))
    }
}

fn sample_order(a: &SampleRecord, b: &SampleRecord) -> std::cmp::Ordering {
    (&a.method, &a.style, a.strength, &a.sample_id).cmp(&(&b.method, &b.style, b.strength, &b.sample_id))
}

/// Keeps every stylized sample whose (method, style, strength) is one of the
/// selected levels of its curve. Output is ordered by identity, then method,
/// style, strength, sample id. Identities with nothing selected are dropped.
pub fn build_supervision_set(
    samples: &[SampleRecord],
    curves: &[RecognitionCurve],
    threshold: f64,
) -> SupervisionSet {
    let combos: Vec<ComboSelection> = curves
        .iter()
        .map(|curve| ComboSelection {
            method: curve.method.clone(),
            style: curve.style.clone(),
            levels: select_reliable_levels(curve, threshold)
                .into_iter()
                .map(|strength| SelectedLevel {
                    strength,
                    accuracy: curve.accuracy_at(strength).expect("selected level is on the curve"),
                })
                .collect(),
        })
        .collect();
    let provenance = Provenance { threshold, combos };

    let selected = samples
        .iter()
        .filter(|s| s.role == Role::Stylized)
        .filter(|s| {
            s.combo()
                .is_some_and(|(method, style, strength)| provenance.allows(method, style, strength))
        })
        .cloned()
        .collect();
    SupervisionSet::from_samples(selected, provenance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboLevels {
    pub method: Method,
    pub style: String,
    pub levels: Vec<Strength>,
    pub samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupervisionSummary {
    pub identities: usize,
    pub samples: usize,
    /// samples-per-identity -> number of identities with that many samples
    pub samples_per_identity: BTreeMap<usize, usize>,
    pub combos: Vec<ComboLevels>,
}

pub fn summarize_supervision_set(set: &SupervisionSet) -> SupervisionSummary {
    let mut histogram = BTreeMap::new();
    for g in &set.identities {
        *histogram.entry(g.samples.len()).or_default() += 1;
    }
    let mut per_combo: HashMap<(&Method, &str), usize> = HashMap::new();
    for s in set.samples() {
        *per_combo.entry((&s.method, s.style.as_str())).or_default() += 1;
    }
    let combos = set
        .provenance
        .combos
        .iter()
        .map(|c| ComboLevels {
            method: c.method.clone(),
            style: c.style.clone(),
            levels: c.levels.iter().map(|l| l.strength).collect(),
            samples: per_combo.get(&(&c.method, c.style.as_str())).copied().unwrap_or(0),
        })
        .collect();
    SupervisionSummary {
        identities: set.identities.len(),
        samples: set.sample_count(),
        samples_per_identity: histogram,
        combos,
    }
}
