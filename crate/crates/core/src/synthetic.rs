//! Synthetic "stylized" feature data for toy-scale experiments.
//!
//! Each identity owns a random point, at a common radius, in an identity subspace. Every sample of
//! that identity adds a style offset drawn from a disjoint nuisance subspace:
//! a fixed per-style direction, scaled by the strength level, plus per-sample
//! jitter and isotropic noise. With `style_scale` well above `identity_scale`
//! the raw features cluster by style rather than by identity.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::calibration::{ComboSelection, Provenance, SelectedLevel, SupervisionSet};
use crate::error::{Error, Result};
use crate::model::{
    Answer, EmbeddingMatrix, Method, Protocol, ResponseRecord, Role, SampleRecord, Strength, STRENGTH_LEVELS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub identities: usize,
    pub samples_per_identity: usize,
    pub input_dim: usize,
    pub identity_rank: usize,
    pub style_rank: usize,
    pub styles: usize,
    pub identity_scale: f64,
    pub style_scale: f64,
    /// Std of the per-sample jitter inside the style subspace, relative to `style_scale`.
    pub style_jitter: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            identities: 20,
            samples_per_identity: 30,
            input_dim: 32,
            identity_rank: 8,
            style_rank: 6,
            styles: 10,
            identity_scale: 1.0,
            style_scale: 3.5,
            style_jitter: 0.5,
            noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub samples: Vec<SampleRecord>,
    /// Backbone inputs keyed by sample id, in `samples` order.
    pub features: EmbeddingMatrix,
}

const METHODS: [&str; 3] = [Method::IP_ADAPTER, Method::INSTANT_ID, Method::INFINITE_YOU];

pub fn identity_id(p: usize) -> String {
    format!("id{p:03}")
}

/// Orthonormal columns spanning a random `k`-dimensional subspace of `R^n`.
fn random_basis(n: usize, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((n, k));
    let mut j = 0;
    while j < k {
        let mut v: Array1<f64> = Array1::from_shape_simple_fn(n, || StandardNormal.sample(rng));
        for i in 0..j {
            let c = q.column(i).dot(&v);
            v.scaled_add(-c, &q.column(i));
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            q.column_mut(j).assign(&(v / norm));
            j += 1;
        }
    }
    q
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    if cfg.identities == 0 || cfg.samples_per_identity == 0 || cfg.styles == 0 {
        return Err(Error::Precondition("synthetic dataset must be nonempty".into()));
    }
    if cfg.identity_rank + cfg.style_rank > cfg.input_dim {
        return Err(Error::Precondition(format!(
            "identity rank {} + style rank {} exceed input dim {}",
            cfg.identity_rank, cfg.style_rank, cfg.input_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let basis = random_basis(cfg.input_dim, cfg.identity_rank + cfg.style_rank, &mut rng);
    let u_id = basis.slice(ndarray::s![.., ..cfg.identity_rank]).to_owned();
    let u_st = basis.slice(ndarray::s![.., cfg.identity_rank..]).to_owned();
    let normal = |rng: &mut ChaCha8Rng, k: usize| -> Array1<f64> {
        Array1::from_shape_simple_fn(k, || StandardNormal.sample(rng))
    };
    let style_dirs: Vec<Array1<f64>> = (0..cfg.styles).map(|_| normal(&mut rng, cfg.style_rank)).collect();
    // uniform directions at a common radius, so every identity is equally strong
    let radius = cfg.identity_scale * (cfg.identity_rank as f64).sqrt();
    let mut centers: Vec<Array1<f64>> = Vec::with_capacity(cfg.identities);
    while centers.len() < cfg.identities {
        let v = normal(&mut rng, cfg.identity_rank);
        let n = v.dot(&v).sqrt();
        if n > 1e-8 {
            centers.push(v * (radius / n));
        }
    }

    let n = cfg.identities * cfg.samples_per_identity;
    let mut samples = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut vectors = Array2::zeros((n, cfg.input_dim));
    for (p, center) in centers.iter().enumerate() {
        for i in 0..cfg.samples_per_identity {
            let style = rng.random_range(0..cfg.styles);
            let level = rng.random_range(1..=STRENGTH_LEVELS);
            let strength = Strength::new(level)?;
            let amount = cfg.style_scale * strength.value();
            let style_coef = (&style_dirs[style] + &(normal(&mut rng, cfg.style_rank) * cfg.style_jitter)) * amount;
            let mut x = u_id.dot(center) + u_st.dot(&style_coef);
            x += &(normal(&mut rng, cfg.input_dim) * cfg.noise);

            let row = samples.len();
            let sample_id = format!("{}-{i:03}", identity_id(p));
            vectors.row_mut(row).assign(&x);
            ids.push(sample_id.clone());
            samples.push(SampleRecord {
                sample_id,
                identity_id: identity_id(p),
                image_path: format!("synthetic/{}/{i:03}.png", identity_id(p)),
                method: Method::from(METHODS[style % METHODS.len()]),
                style: format!("style{style:02}"),
                strength: Some(strength),
                role: Role::Stylized,
            });
        }
    }
    Ok(SyntheticDataset {
        samples,
        features: EmbeddingMatrix::new(ids, vectors)?,
    })
}

impl SyntheticDataset {
    /// Samples of the given identities, in dataset order.
    pub fn samples_of(&self, identities: &[String]) -> Vec<SampleRecord> {
        self.samples
            .iter()
            .filter(|s| identities.contains(&s.identity_id))
            .cloned()
            .collect()
    }

    /// Every sample of `identities` as supervision, with provenance listing
    /// the (method, style, strength) combinations present.
    pub fn supervision_set(&self, identities: &[String]) -> SupervisionSet {
        let samples = self.samples_of(identities);
        let mut combos: BTreeMap<(Method, String), BTreeSet<Strength>> = BTreeMap::new();
        for s in &samples {
            if let Some((m, t, k)) = s.combo() {
                combos.entry((m.clone(), t.to_string())).or_default().insert(k);
            }
        }
        let provenance = Provenance {
            threshold: 0.0,
            combos: combos
                .into_iter()
                .map(|((method, style), levels)| ComboSelection {
                    method,
                    style,
                    levels: levels
                        .into_iter()
                        .map(|strength| SelectedLevel { strength, accuracy: 1.0 })
                        .collect(),
                })
                .collect(),
        };
        SupervisionSet::from_samples(samples, provenance)
    }

    /// A forced-choice response log with known recognition accuracies: for
    /// every (method, style, strength) present, `per_level` responses of which
    /// `per_level - (level - 1) * drop_per_level` are correct (at least zero).
    /// Options are the first two samples of the combination (the same sample
    /// twice when it has only one).
    pub fn forced_choice_log(&self, per_level: usize, drop_per_level: usize) -> Vec<ResponseRecord> {
        let mut by_combo: BTreeMap<(Method, String, Strength), Vec<&SampleRecord>> = BTreeMap::new();
        for s in &self.samples {
            if let Some((m, t, k)) = s.combo() {
                by_combo.entry((m.clone(), t.to_string(), k)).or_default().push(s);
            }
        }
        let mut log = Vec::new();
        for ((method, style, strength), members) in by_combo {
            let a = members[0];
            let b = members.get(1).copied().unwrap_or(a);
            let correct = per_level.saturating_sub((strength.level() as usize - 1) * drop_per_level);
            for i in 0..per_level {
                let ok = i < correct;
                log.push(ResponseRecord {
                    response_id: format!("{method}-{style}-{}-{i:02}", strength.level()),
                    participant_id: format!("p{:02}", i % 5),
                    protocol: Protocol::ForcedChoice,
                    source_sample_id: a.sample_id.clone(),
                    option_a_sample_id: a.sample_id.clone(),
                    option_b_sample_id: Some(b.sample_id.clone()),
                    answer: if ok { Answer::A } else { Answer::B },
                    correct: ok,
                    latency_seconds: 3.0 + (i % 5) as f64,
                    is_repeat_of: None,
                });
            }
        }
        log
    }

    /// All unordered pairs among `identities`' samples, labeled same/different.
    pub fn verification_pairs(&self, identities: &[String]) -> Vec<(String, String, bool)> {
        let samples = self.samples_of(identities);
        let mut pairs = Vec::new();
        for (i, a) in samples.iter().enumerate() {
            for b in &samples[i + 1..] {
                pairs.push((a.sample_id.clone(), b.sample_id.clone(), a.identity_id == b.identity_id));
            }
        }
        pairs
    }
}
