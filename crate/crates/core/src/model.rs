//! Problem definition, hyperparameter penalties and the two objectives.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IcrError, Result};
use crate::subproblem::FrozenSet;

/// Tolerance on column norms when `unit_columns` is enforced.
pub const UNIT_COLUMN_TOL: f64 = 1e-9;

/// Optional validation of the analysis assumptions (unit-norm columns,
/// `|yᵢ| ≤ 1`). Nothing is rescaled; see [`normalize_columns`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceChecks {
    pub unit_columns: bool,
    pub bounded_observation: bool,
}

/// Spike-and-slab hyperparameters the penalties were derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSlabPrior {
    pub sigma2: f64,
    pub kappa: DVector<f64>,
}

/// Measurement model `y = Ax + n` with its MAP penalties.
///
/// Immutable once built. The Gram matrix `AᵀA` and `Aᵀy` are computed at
/// construction and shared by every solver run on the instance.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    a: DMatrix<f64>,
    y: DVector<f64>,
    lambda: f64,
    prior: Option<SpikeSlabPrior>,
    rho: DVector<f64>,
    gram: DMatrix<f64>,
    aty: DVector<f64>,
    y_norm2: f64,
}

impl ProblemInstance {
    /// Builds an instance from `(σ², λ, κ)`, computing `ρ` eagerly.
    pub fn from_prior(
        a: DMatrix<f64>,
        y: DVector<f64>,
        lambda: f64,
        sigma2: f64,
        kappa: DVector<f64>,
    ) -> Result<Self> {
        Self::from_prior_checked(a, y, lambda, sigma2, kappa, InstanceChecks::default())
    }

    pub fn from_prior_checked(
        a: DMatrix<f64>,
        y: DVector<f64>,
        lambda: f64,
        sigma2: f64,
        kappa: DVector<f64>,
        checks: InstanceChecks,
    ) -> Result<Self> {
        if kappa.len() != a.ncols() {
            return Err(IcrError::DimensionMismatch(format!(
                "kappa has length {}, A has {} columns",
                kappa.len(),
                a.ncols()
            )));
        }
        let rho = compute_rho(&kappa, sigma2, lambda)?;
        let prior = SpikeSlabPrior { sigma2, kappa };
        Self::build(a, y, lambda, rho, Some(prior), checks)
    }

    /// Builds an instance with explicitly given penalties. `λ = 0` is
    /// accepted here (the oracle then needs nonsingular restricted systems).
    pub fn with_penalties(
        a: DMatrix<f64>,
        y: DVector<f64>,
        lambda: f64,
        rho: DVector<f64>,
    ) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(IcrError::InvalidHyperparameter(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        if let Some((index, &value)) = rho
            .iter()
            .enumerate()
            .find(|(_, r)| !(**r > 0.0 && r.is_finite()))
        {
            return Err(IcrError::NonPositivePenalty { index, value });
        }
        Self::build(a, y, lambda, rho, None, InstanceChecks::default())
    }

    fn build(
        a: DMatrix<f64>,
        y: DVector<f64>,
        lambda: f64,
        rho: DVector<f64>,
        prior: Option<SpikeSlabPrior>,
        checks: InstanceChecks,
    ) -> Result<Self> {
        let (q, p) = a.shape();
        if q == 0 || p == 0 {
            return Err(IcrError::InvalidDims(format!("A is {q}x{p}")));
        }
        if y.len() != q {
            return Err(IcrError::DimensionMismatch(format!(
                "y has length {}, A has {q} rows",
                y.len()
            )));
        }
        if rho.len() != p {
            return Err(IcrError::DimensionMismatch(format!(
                "rho has length {}, A has {p} columns",
                rho.len()
            )));
        }
        if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(IcrError::InvalidHyperparameter(
                "A and y must be finite".into(),
            ));
        }
        if checks.unit_columns {
            for (index, col) in a.column_iter().enumerate() {
                let norm = col.norm();
                if (norm - 1.0).abs() > UNIT_COLUMN_TOL {
                    return Err(IcrError::NonUnitColumn { index, norm });
                }
            }
        }
        if checks.bounded_observation {
            if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| v.abs() > 1.0) {
                return Err(IcrError::MagnitudeOutOfBounds {
                    vector: "y",
                    index,
                    value,
                });
            }
        }
        let gram = a.tr_mul(&a);
        let aty = a.tr_mul(&y);
        let y_norm2 = y.norm_squared();
        Ok(Self {
            a,
            y,
            lambda,
            prior,
            rho,
            gram,
            aty,
            y_norm2,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn prior(&self) -> Option<&SpikeSlabPrior> {
        self.prior.as_ref()
    }

    /// `AᵀA`
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `Aᵀy`
    pub fn aty(&self) -> &DVector<f64> {
        &self.aty
    }

    pub fn y_norm2(&self) -> f64 {
        self.y_norm2
    }

    /// Number of measurements.
    pub fn q(&self) -> usize {
        self.a.nrows()
    }

    /// Signal length.
    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    /// The freezing constant `1 / (2(q + p))`.
    pub fn lemma_alpha(&self) -> f64 {
        1.0 / (2.0 * (self.q() + self.p()) as f64)
    }

    /// `‖y − Ax‖²`, evaluated from `A` directly.
    pub fn residual_norm2(&self, x: &DVector<f64>) -> f64 {
        (&self.y - &self.a * x).norm_squared()
    }

    pub(crate) fn check_len(&self, what: &str, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.p() {
            return Err(IcrError::DimensionMismatch(format!(
                "{what} has length {}, expected {}",
                v.len(),
                self.p()
            )));
        }
        Ok(())
    }
}

/// Binary activity indicator `γ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorVector(Vec<bool>);

impl IndicatorVector {
    pub fn zeros(p: usize) -> Self {
        Self(vec![false; p])
    }

    pub fn from_bools(gamma: Vec<bool>) -> Self {
        Self(gamma)
    }

    /// `γᵢ = 𝕀(xᵢ ≠ 0)`.
    pub fn support_of(x: &DVector<f64>) -> Self {
        Self(x.iter().map(|v| *v != 0.0).collect())
    }

    pub fn from_support(p: usize, support: &[usize]) -> Self {
        let mut gamma = vec![false; p];
        for &i in support {
            gamma[i] = true;
        }
        Self(gamma)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|g| **g).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.then_some(i))
            .collect()
    }

    pub fn to_f64(&self) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|g| f64::from(u8::from(*g))))
    }
}

/// `ρᵢ = σ² log(2πσ²(1 − κᵢ)² / (λκᵢ²))`.
pub fn compute_rho(kappa: &DVector<f64>, sigma2: f64, lambda: f64) -> Result<DVector<f64>> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(IcrError::InvalidHyperparameter(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(IcrError::InvalidHyperparameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let mut rho = DVector::zeros(kappa.len());
    for (i, &k) in kappa.iter().enumerate() {
        if !(k > 0.0 && k < 1.0) {
            return Err(IcrError::InvalidHyperparameter(format!(
                "kappa[{i}] = {k} is outside (0, 1)"
            )));
        }
        let ratio = (1.0 - k) / k;
        let value = sigma2 * (2.0 * PI * sigma2 * ratio * ratio / lambda).ln();
        if !(value > 0.0) {
            return Err(IcrError::NonPositivePenalty { index: i, value });
        }
        rho[i] = value;
    }
    Ok(rho)
}

/// Exact MAP cost `‖y − Ax‖² + λ‖x‖² + Σ ρᵢγᵢ`.
pub fn map_objective(
    inst: &ProblemInstance,
    x: &DVector<f64>,
    gamma: &IndicatorVector,
) -> Result<f64> {
    inst.check_len("x", x)?;
    if gamma.len() != inst.p() {
        return Err(IcrError::DimensionMismatch(format!(
            "gamma has length {}, expected {}",
            gamma.len(),
            inst.p()
        )));
    }
    let mut penalty = 0.0;
    for i in 0..inst.p() {
        if gamma.get(i) {
            penalty += inst.rho[i];
        } else if x[i] != 0.0 {
            return Err(IcrError::InfeasibleIndicator { index: i });
        }
    }
    Ok(inst.residual_norm2(x) + inst.lambda * x.norm_squared() + penalty)
}

/// Iteration surrogate `fₙ(x) = ‖y − Ax‖² + λ‖x‖² + Σ ρᵢ|xᵢ| / |μᵢ|`.
///
/// The constant `‖y‖²` is included, so `fₙ(0) = ‖y‖²`. Frozen coordinates
/// carry no weight and must be exactly zero in `x`.
pub fn surrogate_objective(
    inst: &ProblemInstance,
    x: &DVector<f64>,
    mu_prev: &DVector<f64>,
    frozen: &FrozenSet,
) -> Result<f64> {
    inst.check_len("x", x)?;
    inst.check_len("mu_prev", mu_prev)?;
    let mut penalty = 0.0;
    for i in 0..inst.p() {
        if frozen.contains(i) {
            if x[i] != 0.0 {
                return Err(IcrError::FrozenCoordinateNonZero { index: i, value: x[i] });
            }
            continue;
        }
        if mu_prev[i] == 0.0 {
            return Err(IcrError::DivisionByFrozenWeight { index: i });
        }
        penalty += inst.rho[i] * x[i].abs() / mu_prev[i].abs();
    }
    Ok(inst.residual_norm2(x) + inst.lambda * x.norm_squared() + penalty)
}

/// Rescales every nonzero column of `a` to unit norm and returns the
/// rescaled matrix with the original column norms. Zero columns are left
/// as they are (scale 0).
pub fn normalize_columns(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mut out = a.clone();
    let mut scales = DVector::zeros(a.ncols());
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        scales[j] = norm;
        if norm > 0.0 {
            col /= norm;
        }
    }
    (out, scales)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_instance() -> ProblemInstance {
        ProblemInstance::with_penalties(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 0.0]),
            0.0,
            DVector::from_vec(vec![0.5, 0.5]),
        )
        .unwrap()
    }

    #[test]
    fn rho_boundary_is_rejected() {
        let sigma2 = 1e-4;
        let lambda = 2.0 * PI * sigma2;
        let err = compute_rho(&DVector::from_element(1, 0.5), sigma2, lambda).unwrap_err();
        match err {
            IcrError::NonPositivePenalty { index: 0, value } => assert!(value.abs() < 1e-18),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rho_matches_extended_precision_value() {
        // 40-digit evaluation: 1.627156035093692881e-4
        let rho = compute_rho(&DVector::from_element(1, 0.1), 1e-4, 1e-2).unwrap();
        assert_relative_eq!(rho[0], 1.627156035e-4, max_relative = 1e-9);
    }

    #[test]
    fn rho_decreases_in_kappa() {
        let rho = compute_rho(&DVector::from_vec(vec![0.1, 0.2]), 1e-4, 1e-2).unwrap();
        assert!(rho[0] > rho[1]);
    }

    #[test]
    fn rho_rejects_kappa_outside_unit_interval() {
        for k in [0.0, 1.0, -0.2, 1.5] {
            assert!(matches!(
                compute_rho(&DVector::from_element(1, k), 1e-4, 1e-2),
                Err(IcrError::InvalidHyperparameter(_))
            ));
        }
    }

    #[test]
    fn map_objective_at_zero_is_observation_energy() {
        let inst = identity_instance();
        let x = DVector::zeros(2);
        let cost = map_objective(&inst, &x, &IndicatorVector::zeros(2)).unwrap();
        assert_eq!(cost, 1.0);
    }

    #[test]
    fn map_objective_hand_value() {
        let inst = identity_instance();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let cost = map_objective(&inst, &x, &IndicatorVector::support_of(&x)).unwrap();
        assert_eq!(cost, 0.5);
    }

    #[test]
    fn map_objective_rejects_infeasible_indicator() {
        let inst = identity_instance();
        let x = DVector::from_vec(vec![0.0, 0.3]);
        let err = map_objective(&inst, &x, &IndicatorVector::zeros(2)).unwrap_err();
        assert_eq!(err, IcrError::InfeasibleIndicator { index: 1 });
    }

    #[test]
    fn extra_indicator_only_adds_penalty() {
        let inst = identity_instance();
        let x = DVector::from_vec(vec![0.7, 0.0]);
        let tight = map_objective(&inst, &x, &IndicatorVector::support_of(&x)).unwrap();
        let loose = map_objective(&inst, &x, &IndicatorVector::from_bools(vec![true, true])).unwrap();
        assert_relative_eq!(loose - tight, 0.5, epsilon = 1e-15);
    }

    fn scalar_instance() -> ProblemInstance {
        ProblemInstance::with_penalties(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            0.25,
            DVector::from_element(1, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn surrogate_hand_value() {
        let inst = scalar_instance();
        let f = surrogate_objective(
            &inst,
            &DVector::from_element(1, 0.6),
            &DVector::from_element(1, 1.0),
            &FrozenSet::empty(1),
        )
        .unwrap();
        assert_relative_eq!(f, 0.55, epsilon = 1e-15);
    }

    #[test]
    fn surrogate_at_zero_includes_constant() {
        let inst = scalar_instance();
        let f = surrogate_objective(
            &inst,
            &DVector::zeros(1),
            &DVector::from_element(1, 3.0),
            &FrozenSet::empty(1),
        )
        .unwrap();
        assert_eq!(f, inst.y_norm2());
    }

    #[test]
    fn doubling_mu_halves_penalty_only() {
        let inst = scalar_instance();
        let x = DVector::from_element(1, 0.6);
        let none = FrozenSet::empty(1);
        let f1 = surrogate_objective(&inst, &x, &DVector::from_element(1, 1.0), &none).unwrap();
        let f2 = surrogate_objective(&inst, &x, &DVector::from_element(1, 2.0), &none).unwrap();
        let smooth = inst.residual_norm2(&x) + inst.lambda() * x.norm_squared();
        assert_relative_eq!(f2 - smooth, 0.5 * (f1 - smooth), epsilon = 1e-15);
    }

    #[test]
    fn surrogate_rejects_zero_mu_on_active_coordinate() {
        let inst = scalar_instance();
        let err = surrogate_objective(
            &inst,
            &DVector::zeros(1),
            &DVector::zeros(1),
            &FrozenSet::empty(1),
        )
        .unwrap_err();
        assert_eq!(err, IcrError::DivisionByFrozenWeight { index: 0 });
    }

    #[test]
    fn unit_column_flag_validates_without_rescaling() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 1.0]);
        let y = DVector::from_vec(vec![0.1, 0.2]);
        let kappa = DVector::from_element(2, 0.05);
        let checks = InstanceChecks {
            unit_columns: true,
            bounded_observation: false,
        };
        let err = ProblemInstance::from_prior_checked(a.clone(), y.clone(), 1e-2, 1e-4, kappa.clone(), checks)
            .unwrap_err();
        assert!(matches!(err, IcrError::NonUnitColumn { index: 0, .. }));

        let (normed, scales) = normalize_columns(&a);
        assert_relative_eq!(scales[0], 5.0);
        assert_relative_eq!(scales[1], 1.0);
        let inst = ProblemInstance::from_prior_checked(normed, y, 1e-2, 1e-4, kappa, checks).unwrap();
        assert_relative_eq!(inst.a()[(1, 0)], 0.8);
    }

    #[test]
    fn bounded_observation_flag() {
        let checks = InstanceChecks {
            unit_columns: false,
            bounded_observation: true,
        };
        let err = ProblemInstance::from_prior_checked(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![0.5, -1.5]),
            1e-2,
            1e-4,
            DVector::from_element(2, 0.05),
            checks,
        )
        .unwrap_err();
        assert!(matches!(err, IcrError::MagnitudeOutOfBounds { index: 1, .. }));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = ProblemInstance::from_prior(
            DMatrix::identity(3, 2),
            DVector::zeros(2),
            1e-2,
            1e-4,
            DVector::from_element(2, 0.05),
        )
        .unwrap_err();
        assert!(matches!(err, IcrError::DimensionMismatch(_)));
    }
}
