//! Runtime checks of the convergence behaviour on recorded traces.
//!
//! * [`quasi_cauchy_check`]: `n · |fₙ₊₁(x⁽ⁿ⁺¹⁾) − fₙ(x⁽ⁿ⁾)|` stays bounded after a
//!   burn-in.
//! * [`lemma1_monitor`]: once `|μⱼ⁽ⁿ⁾| < αρⱼ`, coordinate `j` is zero in every
//!   later iterate.
//! * [`surrogate_descent_check`]: each iterate does not exceed the surrogate
//!   value of its predecessor under the same weights, up to inner-solver slack.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{IcrError, Result};
use crate::icr::IcrTrace;
use crate::model::{surrogate_objective, ProblemInstance};

pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.3;
pub const MIN_TRACE_LEN: usize = 5;
/// Allowed growth of the last-quartile maximum over the first-quartile maximum.
pub const QUARTILE_GROWTH_LIMIT: f64 = 3.0;
/// Absolute floor below which `n·|Δfₙ|` is treated as rounding noise.
pub const SCALED_DELTA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `N₀`
    pub burn_in: usize,
    /// `c′ = max_{N₀ < n < N} n·|Δfₙ|`
    pub c_prime: f64,
    /// Excess of the last-quartile maximum over the allowed multiple of the
    /// first-quartile maximum, clipped at zero.
    pub max_violation: f64,
    pub passed: bool,
    /// `Δfₙ = fₙ₊₁(x⁽ⁿ⁺¹⁾) − fₙ(x⁽ⁿ⁾)` for `n = 1..N−1`.
    pub deltas: Vec<f64>,
}

/// Checks the `c′/n` decay of consecutive surrogate values in `trace`.
pub fn quasi_cauchy_check(trace: &IcrTrace, burn_in_fraction: f64) -> Result<ConvergenceReport> {
    quasi_cauchy_check_values(&trace.surrogates(), burn_in_fraction)
}

/// Same check on a raw sequence `a₁, a₂, …` (index 0 holds `a₁`).
pub fn quasi_cauchy_check_values(values: &[f64], burn_in_fraction: f64) -> Result<ConvergenceReport> {
    let total = values.len();
    if total < MIN_TRACE_LEN {
        return Err(IcrError::TraceTooShort {
            len: total,
            required: MIN_TRACE_LEN,
        });
    }
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(IcrError::InvalidHyperparameter(format!(
            "burn_in_fraction = {burn_in_fraction}"
        )));
    }
    let deltas: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    // at least one scaled delta must remain after burn-in
    let burn_in = ((burn_in_fraction * total as f64).ceil() as usize).min(total - 2);
    let scaled: Vec<f64> = (burn_in + 1..total)
        .map(|n| n as f64 * deltas[n - 1].abs())
        .collect();

    let c_prime = scaled.iter().copied().fold(0.0, f64::max);
    let quartile = scaled.len().div_ceil(4);
    let first = scaled[..quartile].iter().copied().fold(0.0, f64::max);
    let last = scaled[scaled.len() - quartile..].iter().copied().fold(0.0, f64::max);
    let finite = scaled.iter().all(|v| v.is_finite());
    let allowed = QUARTILE_GROWTH_LIMIT * first + SCALED_DELTA_FLOOR;
    let max_violation = if finite { (last - allowed).max(0.0) } else { f64::INFINITY };

    Ok(ConvergenceReport {
        burn_in,
        c_prime,
        max_violation,
        passed: finite && max_violation == 0.0,
        deltas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeViolation {
    pub coordinate: usize,
    /// First iteration with `|μⱼ⁽ⁿ⁾| < αρⱼ`.
    pub trigger_iteration: usize,
    /// Later iteration where `xⱼ` was nonzero.
    pub iteration: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub alpha: f64,
    pub violations: Vec<FreezeViolation>,
    /// Coordinates that dropped below the threshold at some point.
    pub triggered: usize,
    /// Unit-norm columns were not detected; the implication is then only
    /// checked empirically.
    pub unnormalized: bool,
}

impl Lemma1Report {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies that `|μⱼ⁽ⁿ⁾| < αρⱼ` with `α = 1/(2(q + p))` implies
/// `xⱼ⁽ᵐ⁾ = 0` for every recorded `m > n`, for `n` from 0 (`μ⁽⁰⁾ = Aᵀy`).
pub fn lemma1_monitor(trace: &IcrTrace, inst: &ProblemInstance) -> Lemma1Report {
    let alpha = inst.lemma_alpha();
    let rho = inst.rho();
    let mut violations = Vec::new();
    let mut triggered = 0;
    for j in 0..inst.p() {
        let threshold = alpha * rho[j];
        let Some(trigger) = (0..=trace.len()).find(|&n| trace.mu(n)[j].abs() < threshold) else {
            continue;
        };
        triggered += 1;
        for record in &trace.records[trigger..] {
            if record.x[j] != 0.0 {
                violations.push(FreezeViolation {
                    coordinate: j,
                    trigger_iteration: trigger,
                    iteration: record.n,
                    value: record.x[j],
                });
            }
        }
    }
    let unnormalized = inst
        .a()
        .column_iter()
        .any(|c| (c.norm() - 1.0).abs() > crate::model::UNIT_COLUMN_TOL);
    Lemma1Report {
        alpha,
        violations,
        triggered,
        unnormalized,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentViolation {
    /// The step `x⁽ⁿ⁾ → x⁽ⁿ⁺¹⁾`.
    pub n: usize,
    pub next_value: f64,
    pub previous_value: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub steps_checked: usize,
    /// Steps skipped because `x⁽ⁿ⁾` is nonzero on a coordinate frozen at
    /// `n + 1`, making `fₙ₊₁(x⁽ⁿ⁾)` infinite.
    pub steps_infeasible: usize,
    pub violations: Vec<DescentViolation>,
}

impl DescentReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `fₙ₊₁(x⁽ⁿ⁺¹⁾) ≤ fₙ₊₁(x⁽ⁿ⁾) + tol_inner·(1 + ‖x⁽ⁿ⁾‖₁)` on every step.
pub fn surrogate_descent_check(trace: &IcrTrace, inst: &ProblemInstance) -> Result<DescentReport> {
    let mut report = DescentReport {
        steps_checked: 0,
        steps_infeasible: 0,
        violations: Vec::new(),
    };
    for pair in trace.records.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        // fₙ₊₁ uses μ⁽ⁿ⁾ and the frozen set of subproblem n + 1.
        let previous = match surrogate_objective(inst, &cur.x, &cur.mu, &next.frozen) {
            Ok(v) => v,
            Err(IcrError::FrozenCoordinateNonZero { .. }) => {
                report.steps_infeasible += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let slack = trace.inner_tol * (1.0 + cur.x.lp_norm(1));
        report.steps_checked += 1;
        if next.surrogate > previous + slack {
            report.violations.push(DescentViolation {
                n: cur.n,
                next_value: next.surrogate,
                previous_value: previous,
                slack,
            });
        }
    }
    Ok(report)
}

/// Per-coordinate form of the reciprocal-mean increments:
/// `max_n (n + 1) · |1/|μⱼ⁽ⁿ⁺¹⁾| − 1/|μⱼ⁽ⁿ⁾||` over coordinates never frozen.
/// Entries for coordinates that were frozen at some point are `None`.
pub fn reciprocal_mean_increments(trace: &IcrTrace) -> Vec<Option<f64>> {
    let p = trace.mu0.len();
    let ever_frozen: Vec<bool> = (0..p)
        .map(|j| trace.records.iter().any(|r| r.frozen.contains(j)))
        .collect();
    (0..p)
        .map(|j| {
            if ever_frozen[j] {
                return None;
            }
            let inv: Vec<f64> = (1..=trace.len()).map(|n| 1.0 / trace.mu(n)[j].abs()).collect();
            Some(
                inv.windows(2)
                    .enumerate()
                    .map(|(k, w)| (k + 2) as f64 * (w[1] - w[0]).abs())
                    .fold(0.0, f64::max),
            )
        })
        .collect()
}

/// Difference between the recorded `μ⁽ⁿ⁾` and the batch mean of the
/// recorded iterates, maximized over `n` and coordinates.
pub fn running_mean_drift(trace: &IcrTrace) -> f64 {
    let mut sum = DVector::zeros(trace.mu0.len());
    let mut worst: f64 = 0.0;
    for (k, record) in trace.records.iter().enumerate() {
        sum += &record.x;
        let batch = &sum / (k + 1) as f64;
        worst = worst.max((&batch - &record.mu).amax());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icr::IterationRecord;
    use crate::subproblem::FrozenSet;
    use nalgebra::DMatrix;

    #[test]
    fn constant_sequence_passes() {
        let r = quasi_cauchy_check_values(&[2.0; 12], 0.3).unwrap();
        assert_eq!(r.c_prime, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn harmonic_deltas_pass_with_unit_constant() {
        let mut values = vec![0.0];
        for n in 1..30 {
            values.push(values[n - 1] + 1.0 / n as f64);
        }
        let r = quasi_cauchy_check_values(&values, 0.3).unwrap();
        assert!((r.c_prime - 1.0).abs() < 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn constant_deltas_fail_without_burn_in() {
        let values: Vec<f64> = (0..20).map(|n| 0.1 * n as f64).collect();
        let r = quasi_cauchy_check_values(&values, 0.0).unwrap();
        assert!(!r.passed);
        assert!(r.max_violation > 0.0);
    }

    #[test]
    fn short_trace_is_rejected() {
        let err = quasi_cauchy_check_values(&[1.0, 2.0, 3.0, 4.0], 0.3).unwrap_err();
        assert_eq!(err, IcrError::TraceTooShort { len: 4, required: 5 });
    }

    fn toy_trace(xs: &[[f64; 2]], mu0: [f64; 2]) -> IcrTrace {
        let mut mu = DVector::from_vec(mu0.to_vec());
        let mut records = Vec::new();
        for (k, x) in xs.iter().enumerate() {
            let x = DVector::from_vec(x.to_vec());
            mu = crate::icr::update_mu(&mu, &x, k + 1);
            records.push(IterationRecord {
                n: k + 1,
                x,
                mu: mu.clone(),
                surrogate: 0.0,
                inner_iters: 1,
                kkt_residual: 0.0,
                frozen: FrozenSet::empty(2),
            });
        }
        IcrTrace {
            mu0: DVector::from_vec(mu0.to_vec()),
            inner_tol: 1e-8,
            records,
        }
    }

    fn toy_instance() -> ProblemInstance {
        // q + p = 4, α = 1/8, ρ = 1 → threshold 0.125
        ProblemInstance::with_penalties(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 0.0]),
            0.1,
            DVector::from_element(2, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn injected_nonzero_after_threshold_is_reported() {
        let trace = toy_trace(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.5]], [1.0, 0.0]);
        let report = lemma1_monitor(&trace, &toy_instance());
        assert_eq!(
            report.violations,
            vec![FreezeViolation {
                coordinate: 1,
                trigger_iteration: 0,
                iteration: 3,
                value: 0.5
            }]
        );
    }

    #[test]
    fn never_below_threshold_is_clean() {
        let trace = toy_trace(&[[1.0, 0.5], [1.0, 0.5]], [1.0, 0.5]);
        let report = lemma1_monitor(&trace, &toy_instance());
        assert!(report.is_clean());
        assert_eq!(report.triggered, 0);
    }

    #[test]
    fn monitor_is_pure() {
        let trace = toy_trace(&[[1.0, 0.0], [1.0, 0.2]], [1.0, 0.0]);
        let inst = toy_instance();
        assert_eq!(lemma1_monitor(&trace, &inst), lemma1_monitor(&trace, &inst));
    }

    #[test]
    fn running_mean_matches_batch() {
        let trace = toy_trace(&[[1.0, 0.3], [0.5, 0.1], [0.25, -0.2]], [9.0, 9.0]);
        assert!(running_mean_drift(&trace) < 1e-15);
    }
}
