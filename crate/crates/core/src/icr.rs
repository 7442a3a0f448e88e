//! Iterative convex refinement.
//!
//! Each outer iteration `n` replaces the indicator `γᵢ` by `xᵢ / μᵢ⁽ⁿ⁻¹⁾`
//! and solves the resulting convex problem with weights
//! `wᵢ = ρᵢ / |μᵢ⁽ⁿ⁻¹⁾|`. `μ⁽⁰⁾ = Aᵀy`; afterwards `μ⁽ⁿ⁾` is the running
//! mean of `x⁽¹⁾..x⁽ⁿ⁾`. Coordinates whose `|μᵢ|` falls below the freeze
//! threshold are pinned to zero for the rest of the run.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{IcrError, Result};
use crate::model::{surrogate_objective, ProblemInstance};
use crate::subproblem::{self, FrozenSet, SubproblemSpec, DEFAULT_INNER_TOL, DEFAULT_MAX_INNER_ITERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Unconstrained,
    NonNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FreezeMode {
    /// Threshold `α ρᵢ` with `α` just below `1 / (2(q + p))`.
    LemmaAlpha,
    /// Threshold `freeze_epsilon` for every coordinate.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_INNER_TOL,
            max_iters: DEFAULT_MAX_INNER_ITERS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcrOptions {
    pub variant: Variant,
    /// Outer stopping tolerance on `‖x⁽ⁿ⁾ − x⁽ⁿ⁻¹⁾‖₂`.
    pub tol: f64,
    pub max_outer_iters: usize,
    pub freeze_mode: FreezeMode,
    pub freeze_epsilon: f64,
    pub inner: InnerOptions,
    pub record_trace: bool,
}

impl Default for IcrOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Unconstrained,
            tol: 1e-6,
            max_outer_iters: 500,
            freeze_mode: FreezeMode::LemmaAlpha,
            freeze_epsilon: 1e-12,
            inner: InnerOptions::default(),
            record_trace: false,
        }
    }
}

impl IcrOptions {
    pub fn nonneg() -> Self {
        Self {
            variant: Variant::NonNegative,
            ..Self::default()
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(IcrError::InvalidHyperparameter(format!("tol = {}", self.tol)));
        }
        if self.max_outer_iters == 0 {
            return Err(IcrError::InvalidHyperparameter("max_outer_iters = 0".into()));
        }
        if self.freeze_mode == FreezeMode::Absolute && !(self.freeze_epsilon > 0.0) {
            return Err(IcrError::InvalidHyperparameter(format!(
                "freeze_epsilon = {}",
                self.freeze_epsilon
            )));
        }
        if !(self.inner.tol > 0.0) || self.inner.max_iters == 0 {
            return Err(IcrError::InvalidHyperparameter("inner options must be positive".into()));
        }
        Ok(())
    }
}

/// Per-coordinate freeze threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreezeRule {
    pub mode: FreezeMode,
    pub alpha: f64,
    pub epsilon: f64,
}

impl FreezeRule {
    pub fn new(inst: &ProblemInstance, opts: &IcrOptions) -> Self {
        Self {
            mode: opts.freeze_mode,
            alpha: inst.lemma_alpha() * (1.0 - 1e-9),
            epsilon: opts.freeze_epsilon,
        }
    }

    pub fn threshold(&self, rho_i: f64) -> f64 {
        match self.mode {
            FreezeMode::LemmaAlpha => self.alpha * rho_i,
            FreezeMode::Absolute => self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub x: DVector<f64>,
    /// `μ⁽ⁿ⁾`, the mean of `x⁽¹⁾..x⁽ⁿ⁾`.
    pub mu: DVector<f64>,
    /// `fₙ(x⁽ⁿ⁾)`, weights taken from `μ⁽ⁿ⁻¹⁾`.
    pub surrogate: f64,
    pub inner_iters: usize,
    pub kkt_residual: f64,
    /// Frozen set used by subproblem `n`.
    pub frozen: FrozenSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcrTrace {
    pub mu0: DVector<f64>,
    pub inner_tol: f64,
    pub records: Vec<IterationRecord>,
}

impl IcrTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `μ⁽ⁿ⁾` for `n = 0..=len`.
    pub fn mu(&self, n: usize) -> &DVector<f64> {
        if n == 0 {
            &self.mu0
        } else {
            &self.records[n - 1].mu
        }
    }

    pub fn surrogates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.surrogate).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcrResult {
    pub x_star: DVector<f64>,
    pub gamma_star: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Option<IcrTrace>,
}

/// `μ⁽ⁿ⁾ = ((n − 1)μ⁽ⁿ⁻¹⁾ + x⁽ⁿ⁾) / n`; for `n = 1` this is `x⁽¹⁾`.
pub fn update_mu(mu_prev: &DVector<f64>, x_n: &DVector<f64>, n: usize) -> DVector<f64> {
    assert!(n >= 1, "iteration index starts at 1");
    if n == 1 {
        return x_n.clone();
    }
    let keep = (n - 1) as f64;
    let inv = 1.0 / n as f64;
    mu_prev.zip_map(x_n, |m, x| (keep * m + x) * inv)
}

/// Subproblem weights from the current mean. Coordinates already frozen, or
/// with `|μᵢ|` at or below the threshold, join the frozen set and get zero
/// weight.
pub fn weights_from_mu(
    rho: &DVector<f64>,
    mu: &DVector<f64>,
    frozen: &FrozenSet,
    rule: &FreezeRule,
) -> (DVector<f64>, FrozenSet) {
    let mut next = frozen.clone();
    let mut weights = DVector::zeros(rho.len());
    for i in 0..rho.len() {
        if next.contains(i) {
            continue;
        }
        let m = mu[i].abs();
        if m <= rule.threshold(rho[i]) {
            next.insert(i);
        } else {
            weights[i] = rho[i] / m;
        }
    }
    (weights, next)
}

/// `‖x_n − x_prev‖₂ ≤ tol`.
pub fn stopping(x_n: &DVector<f64>, x_prev: &DVector<f64>, tol: f64) -> bool {
    (x_n - x_prev).norm() <= tol
}

fn gamma_from(x: &DVector<f64>, mu: &DVector<f64>, frozen: &FrozenSet) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        if frozen.contains(i) || x[i] == 0.0 {
            0.0
        } else {
            x[i] / mu[i]
        }
    })
}

/// Runs the refinement loop to the outer stopping rule.
///
/// On convergence at iteration `n` the result is `x* = x⁽ⁿ⁻¹⁾` and
/// `γ*ᵢ = x*ᵢ / μᵢ⁽ⁿ⁻¹⁾`. If `max_outer_iters` is reached, the last iterate is
/// returned with `converged = false`.
pub fn icr_run(inst: &ProblemInstance, opts: &IcrOptions) -> Result<IcrResult> {
    opts.validate()?;
    let rule = FreezeRule::new(inst, opts);
    let nonneg = opts.variant == Variant::NonNegative;
    let p = inst.p();

    let mut mu = inst.aty().clone();
    let mut frozen = FrozenSet::empty(p);
    let mut prev: Option<DVector<f64>> = None;
    let mut trace = opts.record_trace.then(|| IcrTrace {
        mu0: mu.clone(),
        inner_tol: opts.inner.tol,
        records: Vec::new(),
    });

    for n in 1..=opts.max_outer_iters {
        let (weights, next_frozen) = weights_from_mu(inst.rho(), &mu, &frozen, &rule);
        frozen = next_frozen;

        let mut warm = prev.clone().unwrap_or_else(|| DVector::zeros(p));
        for i in frozen.indices() {
            warm[i] = 0.0;
        }
        let spec = SubproblemSpec::new(inst, weights, nonneg)
            .with_frozen(frozen.clone())
            .with_warm_start(warm)
            .with_tolerance(opts.inner.tol, opts.inner.max_iters);
        let sol = subproblem::solve(&spec)?;
        if !sol.converged {
            return Err(IcrError::InnerSolverFailure {
                iteration: n,
                residual: sol.kkt_residual,
            });
        }
        let x = sol.x;
        let mu_next = update_mu(&mu, &x, n);

        if let Some(trace) = trace.as_mut() {
            trace.records.push(IterationRecord {
                n,
                x: x.clone(),
                mu: mu_next.clone(),
                surrogate: surrogate_objective(inst, &x, &mu, &frozen)?,
                inner_iters: sol.inner_iters,
                kkt_residual: sol.kkt_residual,
                frozen: frozen.clone(),
            });
        }

        if let Some(x_prev) = prev.as_ref() {
            if stopping(&x, x_prev, opts.tol) {
                // `mu` still holds μ⁽ⁿ⁻¹⁾ and `frozen` was derived from it.
                let gamma_star = gamma_from(x_prev, &mu, &frozen);
                return Ok(IcrResult {
                    x_star: x_prev.clone(),
                    gamma_star,
                    iterations: n,
                    converged: true,
                    trace,
                });
            }
        }

        if n == opts.max_outer_iters {
            let gamma_star = gamma_from(&x, &mu, &frozen);
            return Ok(IcrResult {
                x_star: x,
                gamma_star,
                iterations: n,
                converged: false,
                trace,
            });
        }
        mu = mu_next;
        prev = Some(x);
    }
    unreachable!("loop returns on its last iteration")
}
