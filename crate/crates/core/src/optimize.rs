//! Multi-start projected gradient ascent on the unit sphere.
//!
//! Used to estimate suprema of scale-invariant ratios (observation constants)
//! and of the minimal control norm over unit initial data. Every start owns a
//! seed derived from the caller's seed and its index, so the reduced result
//! does not depend on how rayon schedules the starts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::spectral::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct AscentSettings {
    pub random_starts: usize,
    pub max_iter: usize,
    /// Relative gain under which an accepted step counts as stalled.
    pub rel_tol: f64,
    /// Consecutive stalled steps before a start is declared converged.
    pub stall_steps: usize,
    pub seed: u64,
}

impl Default for AscentSettings {
    fn default() -> Self {
        Self {
            random_starts: 16,
            max_iter: 500,
            rel_tol: 1e-6,
            stall_steps: 3,
            seed: 0x5eed,
        }
    }
}

impl AscentSettings {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentOutcome {
    pub value: f64,
    pub argmax: Vec<f64>,
    /// Every start exhausted `max_iter` without converging.
    pub stagnated: bool,
    pub starts: usize,
}

/// Derive an independent stream for sub-task `index` of a seeded computation.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut x = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finaliser
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(seed, index))
}

/// Uniformly distributed point on the unit sphere of `R^dim`.
pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = dot(v, v).sqrt();
    (n.is_finite() && n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximise `objective` over the unit sphere of `R^dim`. The objective returns
/// its value and its ambient gradient; non-finite values are treated as `−∞`.
pub fn maximize_on_sphere<F>(
    dim: usize,
    objective: F,
    seeded_starts: &[Vec<f64>],
    settings: &AscentSettings,
) -> AscentOutcome
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    let mut starts: Vec<Vec<f64>> = seeded_starts.iter().filter_map(|s| normalized(s)).collect();
    let mut rng = rng_for(settings.seed, 0);
    for _ in 0..settings.random_starts {
        starts.push(random_unit(&mut rng, dim));
    }

    let results: Vec<(f64, Vec<f64>, bool)> = starts
        .par_iter()
        .map(|x0| ascend(&objective, x0.clone(), settings))
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut all_stagnated = !results.is_empty();
    for (v, x, stagnated) in results {
        all_stagnated &= stagnated;
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, x));
        }
    }
    let (value, argmax) = best.unwrap_or((f64::NEG_INFINITY, vec![0.0; dim]));
    AscentOutcome {
        value,
        argmax,
        stagnated: all_stagnated,
        starts: starts.len(),
    }
}

fn ascend<F>(objective: &F, mut x: Vec<f64>, settings: &AscentSettings) -> (f64, Vec<f64>, bool)
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (v0, mut grad) = objective(&x);
    let mut value = sanitize(v0);
    if value == f64::NEG_INFINITY {
        return (value, x, false);
    }
    let mut step: Option<f64> = None;
    let mut stalled = 0;
    for _ in 0..settings.max_iter {
        let radial = dot(&grad, &x);
        let tangent: Vec<f64> = grad.iter().zip(&x).map(|(g, xi)| g - radial * xi).collect();
        let tnorm = dot(&tangent, &tangent).sqrt();
        if !(tnorm.is_finite() && tnorm > 1e-300) {
            return (value, x, false);
        }
        // step is an angle-like scale: the move has length `alpha * tnorm`
        let mut alpha = step.unwrap_or(0.1 / tnorm).min(1.0 / tnorm);
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(&tangent).map(|(xi, t)| xi + alpha * t).collect();
            if let Some(trial) = normalized(&trial) {
                let (tv, tg) = objective(&trial);
                let tv = sanitize(tv);
                if tv > value {
                    accepted = Some((tv, tg, trial));
                    break;
                }
            }
            alpha *= 0.5;
            if alpha * tnorm < 1e-16 {
                break;
            }
        }
        let Some((tv, tg, trial)) = accepted else {
            return (value, x, false);
        };
        let gain = (tv - value) / value.abs().max(1e-300);
        value = tv;
        grad = tg;
        x = trial;
        step = Some(2.0 * alpha);
        if gain < settings.rel_tol {
            stalled += 1;
            if stalled >= settings.stall_steps {
                return (value, x, false);
            }
        } else {
            stalled = 0;
        }
    }
    (value, x, true)
}
