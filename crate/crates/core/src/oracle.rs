//! Exact small-scale global minimization of the MAP cost and the
//! elastic-net baseline.
//!
//! For a fixed indicator the MAP cost is a ridge regression on the support,
//! so the global minimizer is found by solving every restricted system up to
//! a support-size cap. Ties go to the smaller support, then to the
//! lexicographically smallest index list.

use std::cmp::Ordering;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IcrError, Result};
use crate::icr::InnerOptions;
use crate::model::{map_objective, IndicatorVector, ProblemInstance};
use crate::subproblem::{self, SubproblemSpec};

/// Default cap on the number of supports `global_enumeration` will visit.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub x_g: DVector<f64>,
    pub gamma_g: IndicatorVector,
    pub cost: f64,
    pub supports_examined: u64,
}

/// Ridge solve restricted to `support`; returns the full-length `x` and its
/// MAP cost including `Σ_{i∈S} ρᵢ`.
pub fn ridge_on_support(inst: &ProblemInstance, support: &[usize]) -> Result<(DVector<f64>, f64)> {
    let p = inst.p();
    let mut seen = vec![false; p];
    for &i in support {
        if i >= p {
            return Err(IcrError::DimensionMismatch(format!("support index {i} >= p = {p}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(IcrError::DimensionMismatch(format!("support index {i} repeated")));
        }
    }
    let x = restricted_solution(inst, support)?;
    let cost = map_objective(inst, &x, &IndicatorVector::from_support(p, support))?;
    Ok((x, cost))
}

fn restricted_solution(inst: &ProblemInstance, support: &[usize]) -> Result<DVector<f64>> {
    let k = support.len();
    let mut x = DVector::zeros(inst.p());
    if k == 0 {
        return Ok(x);
    }
    let gram = inst.gram();
    let lambda = inst.lambda();
    let h = DMatrix::from_fn(k, k, |r, c| {
        let v = gram[(support[r], support[c])];
        if r == c {
            v + lambda
        } else {
            v
        }
    });
    let rhs = DVector::from_fn(k, |r, _| inst.aty()[support[r]]);
    let chol = h.cholesky().ok_or(IcrError::SingularSystem)?;
    let sol = chol.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(IcrError::SingularSystem);
    }
    for (r, &i) in support.iter().enumerate() {
        x[i] = sol[r];
    }
    Ok(x)
}

/// `Σ_{k ≤ max_support} C(p, k)`, saturating.
pub fn support_count(p: usize, max_support: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for k in 0..=max_support.min(p) {
        total = total.saturating_add(binom);
        binom = binom.saturating_mul((p - k) as u128) / (k as u128 + 1);
    }
    total
}

struct Candidate {
    support: Vec<usize>,
    x: DVector<f64>,
    cost: f64,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    match a.cost.total_cmp(&b.cost) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => (a.support.len(), &a.support) < (b.support.len(), &b.support),
    }
}

/// Minimum MAP cost over every support of size at most `max_support`.
pub fn global_enumeration(inst: &ProblemInstance, max_support: usize) -> Result<OracleResult> {
    global_enumeration_with_budget(inst, max_support, DEFAULT_ENUMERATION_BUDGET)
}

pub fn global_enumeration_with_budget(
    inst: &ProblemInstance,
    max_support: usize,
    budget: u128,
) -> Result<OracleResult> {
    let p = inst.p();
    let max_support = max_support.min(p);
    let required = support_count(p, max_support);
    if required > budget {
        return Err(IcrError::BudgetExceeded { required, budget });
    }

    let mut best: Option<Candidate> = None;
    let mut examined = 0u64;
    for k in 0..=max_support {
        for support in (0..p).combinations(k) {
            let (x, cost) = ridge_on_support(inst, &support)?;
            examined += 1;
            let cand = Candidate { support, x, cost };
            if best.as_ref().map_or(true, |b| better(&cand, b)) {
                best = Some(cand);
            }
        }
    }
    let best = best.expect("the empty support is always examined");
    Ok(OracleResult {
        gamma_g: IndicatorVector::from_support(p, &best.support),
        x_g: best.x,
        cost: best.cost,
        supports_examined: examined,
    })
}

/// ℓ1 relaxation `‖y − Ax‖² + λ‖x‖² + Σ ρᵢ|xᵢ|`, solved with the
/// unconstrained inner solver and fixed weights `ρ`.
pub fn elastic_net(inst: &ProblemInstance, inner: &InnerOptions) -> Result<DVector<f64>> {
    let spec = SubproblemSpec::new(inst, inst.rho().clone(), false)
        .with_tolerance(inner.tol, inner.max_iters);
    let sol = subproblem::solve_weighted_l1_ridge(&spec)?;
    if !sol.converged {
        return Err(IcrError::InnerSolverFailure {
            iteration: 0,
            residual: sol.kkt_residual,
        });
    }
    Ok(sol.x)
}
