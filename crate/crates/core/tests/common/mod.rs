#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use stylemetric::encoder::ClassHead;
use stylemetric::losses::{
    angular_margin_loss, embedding_reg_loss, normalize_rows, normalize_rows_backward, supcon_loss, total_loss,
    finite_difference_check_with, GradCheck, Stencil,
};
use stylemetric::model::Hyperparams;
use stylemetric::Result;

/// A small random loss instance. `z_raw` rows are unnormalized; gradient
/// checks run through the normalization so perturbations stay valid.
#[derive(Debug, Clone)]
pub struct Instance {
    pub z_raw: Array2<f64>,
    pub z_ref: Array2<f64>,
    pub labels: Vec<usize>,
    pub head: Array2<f64>,
    pub hp: Hyperparams,
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Labels for a batch of `b` (even) with `k` classes in use, each appearing at
/// least twice, shuffled.
pub fn paired_labels(rng: &mut ChaCha8Rng, b: usize, k: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..b).map(|i| if i < 2 * k { i / 2 } else { rng.random_range(0..k) }).collect();
    labels.shuffle(rng);
    labels
}

pub fn random_instance(seed: u64, margin: f64, tau: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=8);
    let c = rng.random_range(2..=5);
    let b = 2 * rng.random_range(1..=4);
    let k = rng.random_range(1..=c.min(b / 2));
    let labels = paired_labels(&mut rng, b, k);
    let (z_ref, _) = normalize_rows(gaussian(&mut rng, b, d).view()).unwrap();
    Instance {
        z_raw: gaussian(&mut rng, b, d),
        z_ref,
        labels,
        head: gaussian(&mut rng, c, d),
        hp: Hyperparams {
            margin_m: margin,
            temperature_tau: tau,
            ..Hyperparams::default()
        },
    }
}

fn to_matrix(flat: &[f64], like: ArrayView2<'_, f64>) -> Array2<f64> {
    Array2::from_shape_vec(like.raw_dim(), flat.to_vec()).expect("shape matches")
}

fn flat(m: &Array2<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

/// Which loss and which parameters to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    AngularEmbeddings,
    AngularWeights,
    Contrastive,
    Regularization,
    TotalAll,
}

pub const TARGETS: [Target; 5] = [
    Target::AngularEmbeddings,
    Target::AngularWeights,
    Target::Contrastive,
    Target::Regularization,
    Target::TotalAll,
];

impl Instance {
    pub fn params(&self, target: Target) -> Vec<f64> {
        match target {
            Target::AngularWeights => flat(&self.head),
            Target::TotalAll => flat(&self.z_raw).into_iter().chain(flat(&self.head)).collect(),
            _ => flat(&self.z_raw),
        }
    }

    /// Loss value and analytic gradient at `params` for `target`.
    pub fn evaluate(&self, target: Target, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let hp = &self.hp;
        let n_z = self.z_raw.len();
        let (z_raw, w) = match target {
            Target::AngularWeights => (self.z_raw.clone(), to_matrix(params, self.head.view())),
            Target::TotalAll => (
                to_matrix(&params[..n_z], self.z_raw.view()),
                to_matrix(&params[n_z..], self.head.view()),
            ),
            _ => (to_matrix(params, self.z_raw.view()), self.head.clone()),
        };
        let (z, norms) = normalize_rows(z_raw.view())?;
        let head = ClassHead::from_weights(w)?;
        let back = |g: &Array2<f64>| flat(&normalize_rows_backward(z.view(), &norms, g.view()));
        Ok(match target {
            Target::AngularEmbeddings => {
                let l = angular_margin_loss(z.view(), &self.labels, &head, hp.margin_m, hp.scale_alpha)?;
                (l.loss, back(&l.grad_embeddings))
            }
            Target::AngularWeights => {
                let l = angular_margin_loss(z.view(), &self.labels, &head, hp.margin_m, hp.scale_alpha)?;
                (l.loss, flat(&l.grad_class_weights))
            }
            Target::Contrastive => {
                let l = supcon_loss(z.view(), &self.labels, hp.temperature_tau)?;
                (l.loss, back(&l.grad_embeddings))
            }
            Target::Regularization => {
                let l = embedding_reg_loss(z.view(), self.z_ref.view())?;
                (l.loss, back(&l.grad_embeddings))
            }
            Target::TotalAll => {
                let l = total_loss(z.view(), self.z_ref.view(), &self.labels, &head, hp)?;
                let mut g = back(&l.grad_embeddings);
                g.extend(l.grad_class_weights.iter());
                (l.breakdown.total, g)
            }
        })
    }

    /// Every coordinate against the five-point central stencil, step `h`.
    pub fn check(&self, target: Target, h: f64) -> Result<GradCheck> {
        let params = self.params(target);
        finite_difference_check_with(|p| self.evaluate(target, p), &params, usize::MAX, h, 0, Stencil::FivePoint)
    }
}

/// Ordered-pair Mann-Whitney count, the reference AUROC.
pub fn brute_force_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &p in pos {
        for &n in neg {
            twice += if p > n { 2 } else if p == n { 1 } else { 0 };
        }
    }
    twice as f64 / (2 * pos.len() as u64 * neg.len() as u64) as f64
}

/// Reference TPR at an FPR target: try every candidate threshold (each score,
/// and +/- infinity) under the `score > theta` rule and keep the best TPR whose
/// FPR does not exceed the target.
pub fn brute_force_tpr_at_fpr(pos: &[f64], neg: &[f64], target: f64) -> f64 {
    let mut candidates: Vec<f64> = pos.iter().chain(neg).copied().collect();
    candidates.push(f64::INFINITY);
    candidates.push(f64::NEG_INFINITY);
    let mut best = 0.0f64;
    for &t in &candidates {
        let fpr = neg.iter().filter(|&&s| s > t).count() as f64 / neg.len() as f64;
        let tpr = pos.iter().filter(|&&s| s > t).count() as f64 / pos.len() as f64;
        if fpr <= target {
            best = best.max(tpr);
        }
    }
    best
}

/// Random verification scores with frequent ties (values on a coarse grid).
pub fn random_scores(rng: &mut ChaCha8Rng, max_total: usize) -> (Vec<f64>, Vec<f64>) {
    let total = rng.random_range(2..=max_total);
    let p = rng.random_range(1..total);
    let grid = *[4u32, 20, 1000].choose(rng).unwrap();
    let shift: f64 = rng.random_range(0.0..0.5);
    let mut draw = |bias: f64| {
        let u: f64 = rng.random_range(-1.0..1.0);
        let v = (u + bias).clamp(-1.0, 1.0);
        (v * grid as f64).round() / grid as f64
    };
    let pos: Vec<f64> = (0..p).map(|_| draw(shift)).collect();
    let neg: Vec<f64> = (0..total - p).map(|_| draw(0.0)).collect();
    (pos, neg)
}
