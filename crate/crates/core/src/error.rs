use thiserror::Error;

pub type Result<T> = std::result::Result<T, IcrError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IcrError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    /// Activation of coordinate `index` would be free or rewarded.
    #[error("penalty rho[{index}] = {value:e} is not positive")]
    NonPositivePenalty { index: usize, value: f64 },

    #[error("column {index} of A has norm {norm}, expected 1")]
    NonUnitColumn { index: usize, norm: f64 },

    #[error("{vector}[{index}] = {value} exceeds unit magnitude")]
    MagnitudeOutOfBounds {
        vector: &'static str,
        index: usize,
        value: f64,
    },

    #[error("x[{index}] is nonzero but gamma[{index}] = 0")]
    InfeasibleIndicator { index: usize },

    #[error("coordinate {index} is not frozen but |mu[{index}]| = 0")]
    DivisionByFrozenWeight { index: usize },

    #[error("coordinate {index} is frozen but x[{index}] = {value}")]
    FrozenCoordinateNonZero { index: usize, value: f64 },

    #[error("invalid subproblem: {0}")]
    InvalidSubproblem(String),

    #[error("non-finite iterate after {iteration} inner iterations")]
    NonFiniteIterate { iteration: usize },

    #[error("inner solver failed at outer iteration {iteration}: KKT residual {residual:e}")]
    InnerSolverFailure { iteration: usize, residual: f64 },

    #[error("restricted normal equations are singular")]
    SingularSystem,

    #[error("enumeration needs {required} supports, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("trace has {len} iterations, need at least {required}")]
    TraceTooShort { len: usize, required: usize },
}
