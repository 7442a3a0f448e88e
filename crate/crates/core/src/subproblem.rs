//! Convex inner problems of the refinement loop.
//!
//! Both variants minimize
//!
//! ```text
//! F(x) = ‖y − Ax‖² + λ‖x‖² + Σ wᵢ|xᵢ|
//! ```
//!
//! over `x` (unconstrained) or `x ⪰ 0` (non-negative), with frozen
//! coordinates pinned to zero. The solver is cyclic coordinate descent on the
//! precomputed Gram matrix. Whenever a sweep leaves the sign pattern
//! unchanged, the reduced linear system on that pattern is solved exactly and
//! adopted if it keeps the signs; this finishes the solve to machine precision
//! once the support has been identified.
//!
//! Optimality is certified by [`kkt_residual`], which recomputes the gradient
//! from `A` rather than from the solver's running state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IcrError, Result};
use crate::model::ProblemInstance;

pub const DEFAULT_INNER_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_INNER_ITERS: usize = 10_000;

/// Coordinates constrained to zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "FrozenIndices", from = "FrozenIndices")]
pub struct FrozenSet(Vec<bool>);

#[derive(Serialize, Deserialize)]
struct FrozenIndices {
    dim: usize,
    indices: Vec<usize>,
}

impl From<FrozenSet> for FrozenIndices {
    fn from(set: FrozenSet) -> Self {
        Self {
            dim: set.dim(),
            indices: set.indices(),
        }
    }
}

impl From<FrozenIndices> for FrozenSet {
    fn from(raw: FrozenIndices) -> Self {
        let mut set = FrozenSet::empty(raw.dim);
        for i in raw.indices {
            set.insert(i);
        }
        set
    }
}

impl FrozenSet {
    pub fn empty(p: usize) -> Self {
        Self(vec![false; p])
    }

    pub fn from_indices(p: usize, indices: &[usize]) -> Self {
        let mut set = Self::empty(p);
        for &i in indices {
            set.insert(i);
        }
        set
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn insert(&mut self, i: usize) {
        self.0[i] = true;
    }

    /// Number of frozen coordinates.
    pub fn count(&self) -> usize {
        self.0.iter().filter(|f| **f).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.then_some(i))
            .collect()
    }

    pub fn is_subset_of(&self, other: &FrozenSet) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| !*a || *b)
    }
}

/// One convex inner problem.
#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    pub inst: &'a ProblemInstance,
    pub weights: DVector<f64>,
    pub frozen: FrozenSet,
    pub nonneg: bool,
    pub warm_start: DVector<f64>,
    pub tol: f64,
    pub max_inner_iters: usize,
}

impl<'a> SubproblemSpec<'a> {
    /// Cold-started problem with no frozen coordinates and default tolerances.
    pub fn new(inst: &'a ProblemInstance, weights: DVector<f64>, nonneg: bool) -> Self {
        let p = inst.p();
        Self {
            inst,
            weights,
            frozen: FrozenSet::empty(p),
            nonneg,
            warm_start: DVector::zeros(p),
            tol: DEFAULT_INNER_TOL,
            max_inner_iters: DEFAULT_MAX_INNER_ITERS,
        }
    }

    pub fn with_frozen(mut self, frozen: FrozenSet) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn with_warm_start(mut self, warm_start: DVector<f64>) -> Self {
        self.warm_start = warm_start;
        self
    }

    pub fn with_tolerance(mut self, tol: f64, max_inner_iters: usize) -> Self {
        self.tol = tol;
        self.max_inner_iters = max_inner_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.inst.p();
        self.inst.check_len("weights", &self.weights)?;
        self.inst.check_len("warm_start", &self.warm_start)?;
        if self.frozen.dim() != p {
            return Err(IcrError::DimensionMismatch(format!(
                "frozen set has dimension {}, expected {p}",
                self.frozen.dim()
            )));
        }
        if !(self.tol > 0.0) || self.max_inner_iters == 0 {
            return Err(IcrError::InvalidSubproblem(
                "tol and max_inner_iters must be positive".into(),
            ));
        }
        for i in 0..p {
            let w = self.weights[i];
            let x0 = self.warm_start[i];
            if !x0.is_finite() {
                return Err(IcrError::InvalidSubproblem(format!("warm_start[{i}] is not finite")));
            }
            if self.frozen.contains(i) {
                if x0 != 0.0 {
                    return Err(IcrError::InvalidSubproblem(format!(
                        "warm_start[{i}] = {x0} on a frozen coordinate"
                    )));
                }
                continue;
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(IcrError::InvalidSubproblem(format!("weights[{i}] = {w}")));
            }
            if self.nonneg && x0 < 0.0 {
                return Err(IcrError::InvalidSubproblem(format!(
                    "warm_start[{i}] = {x0} is negative"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub x: DVector<f64>,
    pub kkt_residual: f64,
    /// Coordinate-descent sweeps performed.
    pub inner_iters: usize,
    pub converged: bool,
}

/// `sign(v) · max(|v| − t, 0)`
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `‖y − Ax‖² + λ‖x‖² + Σ wᵢ|xᵢ|`, with frozen weights ignored.
pub fn subproblem_objective(
    inst: &ProblemInstance,
    weights: &DVector<f64>,
    frozen: &FrozenSet,
    x: &DVector<f64>,
) -> f64 {
    let penalty: f64 = (0..inst.p())
        .filter(|i| !frozen.contains(*i))
        .map(|i| weights[i] * x[i].abs())
        .sum();
    inst.residual_norm2(x) + inst.lambda() * x.norm_squared() + penalty
}

/// Largest coordinate-wise KKT violation of `x`.
///
/// With `g = 2Aᵀ(Ax − y) + 2λx`:
/// * unconstrained: `|gᵢ + wᵢ sign(xᵢ)|` where `xᵢ ≠ 0`, `max(|gᵢ| − wᵢ, 0)` where `xᵢ = 0`;
/// * non-negative, `hᵢ = gᵢ + wᵢ`: `|hᵢ| · max(1, xᵢ)` where `xᵢ > 0`, `max(−hᵢ, 0)` where `xᵢ = 0`.
///
/// The non-negative form bounds both `hᵢ ≥ −tol` and `xᵢhᵢ ≤ tol`. Frozen
/// coordinates are skipped; a nonzero frozen coordinate or a negative entry
/// in the non-negative variant is infeasible and yields `+∞`.
pub fn kkt_residual(
    inst: &ProblemInstance,
    weights: &DVector<f64>,
    frozen: &FrozenSet,
    nonneg: bool,
    x: &DVector<f64>,
) -> f64 {
    let residual = inst.a() * x - inst.y();
    let grad = inst.a().tr_mul(&residual) * 2.0 + x * (2.0 * inst.lambda());
    residual_from_gradient(weights, frozen, nonneg, x, &grad)
}

fn residual_from_gradient(
    weights: &DVector<f64>,
    frozen: &FrozenSet,
    nonneg: bool,
    x: &DVector<f64>,
    grad: &DVector<f64>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let xi = x[i];
        let violation = if frozen.contains(i) {
            if xi == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else if nonneg {
            let h = grad[i] + weights[i];
            if xi > 0.0 {
                h.abs() * xi.max(1.0)
            } else if xi == 0.0 {
                (-h).max(0.0)
            } else {
                f64::INFINITY
            }
        } else if xi != 0.0 {
            (grad[i] + weights[i] * xi.signum()).abs()
        } else {
            (grad[i].abs() - weights[i]).max(0.0)
        };
        if violation.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(violation);
    }
    worst
}

/// Unconstrained weighted-ℓ1 + ridge problem.
pub fn solve_weighted_l1_ridge(spec: &SubproblemSpec) -> Result<SubproblemSolution> {
    if spec.nonneg {
        return Err(IcrError::InvalidSubproblem(
            "solve_weighted_l1_ridge needs nonneg = false".into(),
        ));
    }
    coordinate_descent(spec)
}

/// Non-negative linearly weighted QP.
pub fn solve_nonneg_weighted_qp(spec: &SubproblemSpec) -> Result<SubproblemSolution> {
    if !spec.nonneg {
        return Err(IcrError::InvalidSubproblem(
            "solve_nonneg_weighted_qp needs nonneg = true".into(),
        ));
    }
    coordinate_descent(spec)
}

/// Dispatches on `spec.nonneg`.
pub fn solve(spec: &SubproblemSpec) -> Result<SubproblemSolution> {
    coordinate_descent(spec)
}

fn hessian_product(inst: &ProblemInstance, x: &DVector<f64>) -> DVector<f64> {
    inst.gram() * x + x * inst.lambda()
}

fn sign_pattern(x: &DVector<f64>) -> Vec<i8> {
    x.iter()
        .map(|v| {
            if *v > 0.0 {
                1
            } else if *v < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect()
}

fn coordinate_descent(spec: &SubproblemSpec) -> Result<SubproblemSolution> {
    spec.validate()?;
    let inst = spec.inst;
    let gram = inst.gram();
    let aty = inst.aty();
    let lambda = inst.lambda();
    let active: Vec<usize> = (0..inst.p()).filter(|i| !spec.frozen.contains(*i)).collect();

    let mut x = spec.warm_start.clone();
    let mut hx = hessian_product(inst, &x);
    let mut pattern = sign_pattern(&x);
    let mut polished: Option<Vec<i8>> = None;

    for sweep in 1..=spec.max_inner_iters {
        for &i in &active {
            let hii = gram[(i, i)] + lambda;
            let xi = x[i];
            let updated = if hii > 0.0 {
                let c = aty[i] - hx[i] + hii * xi;
                let half_w = 0.5 * spec.weights[i];
                if spec.nonneg {
                    (c - half_w).max(0.0) / hii
                } else {
                    soft_threshold(c, half_w) / hii
                }
            } else {
                0.0
            };
            let delta = updated - xi;
            if delta != 0.0 {
                x[i] = updated;
                hx.axpy(delta, &gram.column(i), 1.0);
                hx[i] += lambda * delta;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IcrError::NonFiniteIterate { iteration: sweep });
        }

        let grad = (&hx - aty) * 2.0;
        if residual_from_gradient(&spec.weights, &spec.frozen, spec.nonneg, &x, &grad) <= spec.tol {
            let exact = kkt_residual(inst, &spec.weights, &spec.frozen, spec.nonneg, &x);
            if exact <= spec.tol {
                return Ok(SubproblemSolution {
                    x,
                    kkt_residual: exact,
                    inner_iters: sweep,
                    converged: true,
                });
            }
            hx = hessian_product(inst, &x);
        }

        let current = sign_pattern(&x);
        let stable = current == pattern;
        pattern = current;
        if stable && polished.as_ref() != Some(&pattern) {
            polished = Some(pattern.clone());
            if let Some(z) = face_minimizer(spec, &pattern) {
                if let Some(z) = step_within_face(&x, &z, &pattern) {
                    let exact = kkt_residual(inst, &spec.weights, &spec.frozen, spec.nonneg, &z);
                    if exact <= spec.tol {
                        return Ok(SubproblemSolution {
                            x: z,
                            kkt_residual: exact,
                            inner_iters: sweep,
                            converged: true,
                        });
                    }
                    x = z;
                } else {
                    // F is a convex quadratic on the closed face, so the segment
                    // towards its minimizer descends; stop where a sign flips.
                    x = truncated_step(&x, &z, &pattern);
                    polished = None;
                }
                hx = hessian_product(inst, &x);
                pattern = sign_pattern(&x);
            }
        }
    }

    let exact = kkt_residual(inst, &spec.weights, &spec.frozen, spec.nonneg, &x);
    Ok(SubproblemSolution {
        x,
        kkt_residual: exact,
        inner_iters: spec.max_inner_iters,
        converged: exact <= spec.tol,
    })
}

/// Below this ridge weight the Woodbury form loses too many digits.
const WOODBURY_MIN_LAMBDA: f64 = 1e-4;

/// Minimizer of the quadratic model on the linear span of the face
/// `{sign(x) = pattern}`, or `None` if the reduced system is singular.
fn face_minimizer(spec: &SubproblemSpec, pattern: &[i8]) -> Option<DVector<f64>> {
    let inst = spec.inst;
    let support: Vec<usize> = (0..pattern.len()).filter(|&i| pattern[i] != 0).collect();
    let k = support.len();
    let mut z = DVector::zeros(inst.p());
    if k == 0 {
        return Some(z);
    }
    let lambda = inst.lambda();
    let rhs = DVector::from_fn(k, |r, _| {
        let i = support[r];
        inst.aty()[i] - 0.5 * spec.weights[i] * f64::from(pattern[i])
    });
    let sol = if k > inst.q() && lambda >= WOODBURY_MIN_LAMBDA {
        // (A_SᵀA_S + λI)⁻¹ = (I − A_Sᵀ(λI + A_S A_Sᵀ)⁻¹A_S) / λ, a q × q solve
        let a_s = inst.a().select_columns(&support);
        let mut m = &a_s * a_s.transpose();
        for d in 0..inst.q() {
            m[(d, d)] += lambda;
        }
        let inner = m.cholesky()?.solve(&(&a_s * &rhs));
        (rhs - a_s.tr_mul(&inner)) / lambda
    } else {
        let gram = inst.gram();
        let h = DMatrix::from_fn(k, k, |r, c| {
            let v = gram[(support[r], support[c])];
            if r == c {
                v + lambda
            } else {
                v
            }
        });
        h.cholesky()?.solve(&rhs)
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for (r, &i) in support.iter().enumerate() {
        z[i] = sol[r];
    }
    Some(z)
}

/// `z` itself if it keeps every sign in `pattern`.
fn step_within_face(x: &DVector<f64>, z: &DVector<f64>, pattern: &[i8]) -> Option<DVector<f64>> {
    let keeps = (0..x.len()).all(|i| pattern[i] == 0 || z[i] * f64::from(pattern[i]) > 0.0);
    keeps.then(|| z.clone())
}

/// Point on the segment `x → z` where the first coordinate reaches zero;
/// coordinates that reach zero there are set to exactly zero.
fn truncated_step(x: &DVector<f64>, z: &DVector<f64>, pattern: &[i8]) -> DVector<f64> {
    let mut t = 1.0f64;
    for i in 0..x.len() {
        if pattern[i] != 0 && z[i] * f64::from(pattern[i]) <= 0.0 {
            t = t.min(x[i] / (x[i] - z[i]));
        }
    }
    let mut out = x + (z - x) * t;
    for i in 0..x.len() {
        if pattern[i] == 0 {
            out[i] = 0.0;
        } else if z[i] * f64::from(pattern[i]) <= 0.0 && x[i] / (x[i] - z[i]) <= t {
            out[i] = 0.0;
        } else if out[i] * f64::from(pattern[i]) <= 0.0 {
            out[i] = 0.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(y: f64, lambda: f64) -> ProblemInstance {
        ProblemInstance::with_penalties(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, y),
            lambda,
            DVector::from_element(1, 1.0),
        )
        .unwrap()
    }

    /// Scalar objective `(x − y)² + λx² + w|x|` minimized on a uniform grid.
    fn grid_min(y: f64, lambda: f64, w: f64, nonneg: bool) -> f64 {
        let lo = if nonneg { 0.0 } else { -3.0 };
        let steps = 600_000;
        let h = (3.0 - lo) / steps as f64;
        (0..=steps)
            .map(|k| lo + k as f64 * h)
            .map(|x| ((x - y).powi(2) + lambda * x * x + w * x.abs(), x))
            .fold((f64::INFINITY, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best })
            .1
    }

    fn solve_scalar(y: f64, lambda: f64, w: f64, nonneg: bool) -> SubproblemSolution {
        let inst = scalar(y, lambda);
        let spec = SubproblemSpec::new(&inst, DVector::from_element(1, w), nonneg);
        solve(&spec).unwrap()
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.5, 1.0), -1.5);
    }

    #[test]
    fn scalar_l1_ridge_closed_form() {
        let sol = solve_scalar(1.0, 0.25, 0.5, false);
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.x[0], 0.6, epsilon = 1e-12);
        assert!(sol.kkt_residual <= 1e-12);
        assert_abs_diff_eq!(grid_min(1.0, 0.25, 0.5, false), 0.6, epsilon = 1e-5);
    }

    #[test]
    fn zero_observation_gives_zero() {
        let sol = solve_scalar(0.0, 0.25, 0.5, false);
        assert_eq!(sol.x[0], 0.0);
    }

    #[test]
    fn scalar_threshold_at_equality() {
        for lambda in [0.0, 0.3, 2.0] {
            let sol = solve_scalar(1.0, lambda, 2.0, false);
            assert_eq!(sol.x[0], 0.0);
            assert_abs_diff_eq!(grid_min(1.0, lambda, 2.0, false), 0.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn nonneg_scalar_cases() {
        for w in [0.0, 0.5, 3.0] {
            assert_eq!(solve_scalar(-1.0, 0.0, w, true).x[0], 0.0);
        }
        let sol = solve_scalar(1.0, 0.0, 1.0, true);
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(grid_min(1.0, 0.0, 1.0, true), 0.5, epsilon = 1e-5);
        assert_eq!(solve_scalar(1.0, 0.0, 4.0, true).x[0], 0.0);
        assert_abs_diff_eq!(grid_min(1.0, 0.0, 4.0, true), 0.0, epsilon = 1e-5);
    }

    #[test]
    fn residual_of_exact_minimizer_and_perturbation() {
        let inst = scalar(1.0, 0.25);
        let w = DVector::from_element(1, 0.5);
        let none = FrozenSet::empty(1);
        let exact = kkt_residual(&inst, &w, &none, false, &DVector::from_element(1, 0.6));
        assert!(exact <= 1e-12);
        let off = kkt_residual(&inst, &w, &none, false, &DVector::from_element(1, 0.601));
        assert!(off > exact);
        assert_abs_diff_eq!(off, 2.5e-3, epsilon = 1e-12);
    }

    #[test]
    fn residual_zero_with_huge_weight() {
        let inst = scalar(1.0, 0.25);
        let w = DVector::from_element(1, 1e9);
        let none = FrozenSet::empty(1);
        assert_eq!(kkt_residual(&inst, &w, &none, false, &DVector::zeros(1)), 0.0);
        assert_eq!(kkt_residual(&inst, &w, &none, true, &DVector::zeros(1)), 0.0);
    }

    #[test]
    fn frozen_coordinates_are_exact_zero() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.0, 0.5, 1.0]);
        let inst = ProblemInstance::with_penalties(
            a,
            DVector::from_vec(vec![1.0, -1.0]),
            0.1,
            DVector::from_element(3, 0.1),
        )
        .unwrap();
        let spec = SubproblemSpec::new(&inst, DVector::from_element(3, 0.01), false)
            .with_frozen(FrozenSet::from_indices(3, &[0]));
        let sol = solve(&spec).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.x[0].to_bits(), 0.0f64.to_bits());
        assert!(sol.x[2] < 0.0);
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let inst = scalar(1.0, 0.25);
        let spec = SubproblemSpec::new(&inst, DVector::from_element(1, 0.5), true);
        assert!(solve_weighted_l1_ridge(&spec).is_err());
        let spec = SubproblemSpec::new(&inst, DVector::from_element(1, 0.5), false);
        assert!(solve_nonneg_weighted_qp(&spec).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let inst = scalar(1.0, 0.25);
        let bad_weight = SubproblemSpec::new(&inst, DVector::from_element(1, -1.0), false);
        assert!(matches!(solve(&bad_weight), Err(IcrError::InvalidSubproblem(_))));
        let bad_warm = SubproblemSpec::new(&inst, DVector::from_element(1, 1.0), true)
            .with_warm_start(DVector::from_element(1, -0.2));
        assert!(matches!(solve(&bad_warm), Err(IcrError::InvalidSubproblem(_))));
        let frozen_warm = SubproblemSpec::new(&inst, DVector::from_element(1, 1.0), false)
            .with_frozen(FrozenSet::from_indices(1, &[0]))
            .with_warm_start(DVector::from_element(1, 0.2));
        assert!(matches!(solve(&frozen_warm), Err(IcrError::InvalidSubproblem(_))));
    }

    #[test]
    fn underdetermined_small_ridge_converges() {
        // 16 nearly redundant columns in 4 dimensions with a tiny ridge term,
        // where plain coordinate descent crawls.
        let a = DMatrix::from_fn(4, 16, |r, c| ((r * 7 + c * 3) as f64 * 0.37).sin() + 0.5);
        let (a, _) = crate::model::normalize_columns(&a);
        let y = DVector::from_vec(vec![0.8, -0.3, 0.5, 0.1]);
        let inst =
            ProblemInstance::with_penalties(a, y, 1e-6, DVector::from_element(16, 1e-3)).unwrap();
        for nonneg in [false, true] {
            let spec = SubproblemSpec::new(&inst, DVector::from_element(16, 1e-3), nonneg);
            let sol = solve(&spec).unwrap();
            assert!(sol.converged, "nonneg = {nonneg}: residual {}", sol.kkt_residual);
            assert!(sol.inner_iters < 1_000);
        }
    }

    #[test]
    fn wide_face_solve_matches_direct_system() {
        let a = DMatrix::from_fn(3, 8, |r, c| ((r * 5 + c * 2) as f64 * 0.71).cos());
        let (a, _) = crate::model::normalize_columns(&a);
        let y = DVector::from_vec(vec![0.4, -0.9, 0.2]);
        let inst = ProblemInstance::with_penalties(a, y, 1e-2, DVector::from_element(8, 0.1)).unwrap();
        let w = DVector::from_fn(8, |i, _| 0.01 * i as f64);
        let spec = SubproblemSpec::new(&inst, w.clone(), false);
        let pattern: Vec<i8> = vec![1, -1, 0, 1, 1, -1, 0, 1];
        let z = face_minimizer(&spec, &pattern).unwrap();

        let support: Vec<usize> = (0..8).filter(|&i| pattern[i] != 0).collect();
        let k = support.len();
        let h = DMatrix::from_fn(k, k, |r, c| {
            inst.gram()[(support[r], support[c])] + if r == c { 1e-2 } else { 0.0 }
        });
        let rhs = DVector::from_fn(k, |r, _| {
            let i = support[r];
            inst.aty()[i] - 0.5 * w[i] * f64::from(pattern[i])
        });
        let direct = h.lu().solve(&rhs).unwrap();
        for (r, &i) in support.iter().enumerate() {
            assert_abs_diff_eq!(z[i], direct[r], epsilon = 1e-10);
        }
        assert_eq!(z[2], 0.0);
        assert_eq!(z[6], 0.0);
    }

    #[test]
    fn iteration_cap_reports_unconverged() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.99, 0.0, 0.141]);
        let inst = ProblemInstance::with_penalties(
            a,
            DVector::from_vec(vec![1.0, 0.3]),
            1e-3,
            DVector::from_element(2, 0.1),
        )
        .unwrap();
        let spec = SubproblemSpec::new(&inst, DVector::from_element(2, 1e-3), false)
            .with_tolerance(1e-14, 1);
        let sol = solve(&spec).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.inner_iters, 1);
        assert!(sol.kkt_residual > 1e-14);
    }
}
