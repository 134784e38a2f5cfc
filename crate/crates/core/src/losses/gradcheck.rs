//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Gradient magnitudes below this are compared in absolute rather than relative terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Coordinate where the worst error occurred.
    pub worst_index: usize,
    pub probes: usize,
}

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Central-difference formula used for the numeric derivative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x + h) - f(x - h)) / 2h`, error O(h^2).
    #[default]
    ThreePoint,
    /// `(f(x - 2h) - 8 f(x - h) + 8 f(x + h) - f(x + 2h)) / 12h`, error O(h^4).
    FivePoint,
}

impl Stencil {
    /// `(offset in units of h, weight)` pairs and the common denominator in units of h.
    fn taps(self) -> (&'static [(f64, f64)], f64) {
        match self {
            Stencil::ThreePoint => (&[(1.0, 1.0), (-1.0, -1.0)], 2.0),
            Stencil::FivePoint => (&[(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)], 12.0),
        }
    }
}

/// Compares the analytic gradient of `f` at `params` with central differences
/// `(f(x + h e_k) - f(x - h e_k)) / 2h` on `probes` coordinates drawn with `seed`
/// (all coordinates when `probes >= params.len()`). Returns the worst relative error.
///
/// `f` returns the loss and its gradient; only the value is used at perturbed points.
pub fn finite_difference_check<F>(f: F, params: &[f64], probes: usize, h: f64, seed: u64) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    finite_difference_check_with(f, params, probes, h, seed, Stencil::ThreePoint)
}

/// [`finite_difference_check`] with a chosen stencil.
pub fn finite_difference_check_with<F>(
    mut f: F,
    params: &[f64],
    probes: usize,
    h: f64,
    seed: u64,
    stencil: Stencil,
) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Precondition(format!("step must be > 0, got {h}")));
    }
    let (value, grad) = f(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss {value} at probe point")));
    }
    if grad.len() != params.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} parameters",
            grad.len(),
            params.len()
        )));
    }
    let coords: Vec<usize> = if probes >= params.len() {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, params.len(), probes).into_vec();
        picked.sort_unstable();
        picked
    };

    let mut x = params.to_vec();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: coords.first().copied().unwrap_or(0),
        probes: coords.len(),
    };
    for &k in &coords {
        let orig = x[k];
        let (taps, denom) = stencil.taps();
        let mut acc = 0.0;
        for &(offset, weight) in taps {
            x[k] = orig + offset * h;
            let (v, _) = f(&x)?;
            if !v.is_finite() {
                x[k] = orig;
                return Err(Error::NonFinite(format!("loss near coordinate {k}")));
            }
            acc += weight * v;
        }
        x[k] = orig;
        let numeric = acc / (denom * h);
        let err = relative_error(grad[k], numeric);
        if err > worst.max_rel_error {
            worst.max_rel_error = err;
            worst.worst_index = k;
        }
    }
    Ok(worst)
}
