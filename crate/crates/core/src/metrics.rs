//! Seeded synthetic instances and figures of merit.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{IcrError, Result};
use crate::model::ProblemInstance;

/// Default support threshold `τ`.
pub const DEFAULT_TAU: f64 = 1e-6;

/// Seed for trial `trial` of an experiment keyed by `master`.
///
/// The ChaCha20 keystream keyed by `master` is read at stream `trial`, so
/// each trial seed depends only on `(master, trial)` and trials can be
/// generated in any order or in parallel.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng.next_u64()
}

/// Generator settings for one synthetic instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub p: usize,
    pub q: usize,
    pub s: usize,
    /// Noise standard deviation; `σ² = sigma²` also feeds the penalties.
    pub sigma: f64,
    pub lambda: f64,
    pub kappa: f64,
    /// Draw nonzero magnitudes as `|N(0, 1)|` instead of `N(0, 1)`.
    pub nonneg_signal: bool,
}

#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub inst: ProblemInstance,
    pub x0: DVector<f64>,
    pub s: usize,
    pub seed: u64,
}

/// I.i.d. Gaussian `q × p` matrix with columns rescaled to unit norm.
pub fn gaussian_unit_columns<R: Rng + ?Sized>(q: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(q, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in a.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    a
}

pub fn gaussian_noise<R: Rng + ?Sized>(q: usize, sigma: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(q, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

/// Draws `A`, an `s`-sparse `x0` and `y = A x0 + n`, fully determined by `seed`.
pub fn generate_instance(params: &SynthParams, seed: u64) -> Result<SynthInstance> {
    let SynthParams { p, q, s, sigma, .. } = *params;
    if p == 0 || q == 0 || s > p {
        return Err(IcrError::InvalidDims(format!("p = {p}, q = {q}, s = {s}")));
    }
    if !(sigma > 0.0) {
        return Err(IcrError::InvalidHyperparameter(format!("sigma = {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_unit_columns(q, p, &mut rng);

    let mut x0 = DVector::zeros(p);
    let mut support = sample(&mut rng, p, s).into_vec();
    support.sort_unstable();
    for i in support {
        let v: f64 = rng.sample(StandardNormal);
        // a draw of exactly zero would break ‖x0‖₀ = s
        let v = if v == 0.0 { f64::MIN_POSITIVE } else { v };
        x0[i] = if params.nonneg_signal { v.abs() } else { v };
    }

    let noise = gaussian_noise(q, sigma, &mut rng);
    let y = &a * &x0 + noise;
    let kappa = DVector::from_element(p, params.kappa);
    let inst = ProblemInstance::from_prior(a, y, params.lambda, sigma * sigma, kappa)?;
    Ok(SynthInstance { inst, x0, s, seed })
}

/// `(1/p) ‖x − x_ref‖²`
pub fn mse(x: &DVector<f64>, x_ref: &DVector<f64>) -> f64 {
    assert_eq!(x.len(), x_ref.len());
    (x - x_ref).norm_squared() / x.len() as f64
}

/// Index set over which [`support_match_in`] counts agreement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchScope {
    /// Every coordinate.
    #[default]
    All,
    /// Coordinates active in either vector; 100 when both are empty.
    Union,
}

/// Percentage of coordinates whose active status (`|xᵢ| > τ`) agrees.
pub fn support_match(x: &DVector<f64>, x_ref: &DVector<f64>, tau: f64) -> f64 {
    support_match_in(x, x_ref, tau, MatchScope::All)
}

pub fn support_match_in(x: &DVector<f64>, x_ref: &DVector<f64>, tau: f64, scope: MatchScope) -> f64 {
    assert_eq!(x.len(), x_ref.len());
    let (mut agree, mut total) = (0usize, 0usize);
    for (a, b) in x.iter().zip(x_ref.iter()) {
        let (a, b) = (a.abs() > tau, b.abs() > tau);
        if scope == MatchScope::Union && !a && !b {
            continue;
        }
        total += 1;
        agree += usize::from(a == b);
    }
    if total == 0 {
        return 100.0;
    }
    100.0 * agree as f64 / total as f64
}

/// `#{i : |xᵢ| > τ}`
pub fn sparsity_level(x: &DVector<f64>, tau: f64) -> usize {
    x.iter().filter(|v| v.abs() > tau).count()
}
