//! Sparse signal recovery under spike-and-slab priors.
//!
//! The recovery problem is the mixed-integer MAP objective
//!
//! ```text
//! min_{x, γ}  ‖y − Ax‖² + λ‖x‖² + Σ ρᵢ γᵢ,     γᵢ = 𝕀(xᵢ ≠ 0)
//! ```
//!
//! [`icr::icr_run`] approaches it through a sequence of convex weighted-ℓ1 +
//! ridge problems whose weights `ρᵢ / |μᵢ|` are driven by the running mean of
//! the iterates. Around it sit exact small-scale oracles ([`oracle`]), the
//! elastic-net baseline, seeded synthetic instances and figures of merit
//! ([`metrics`]), and runtime checks of the convergence behaviour
//! ([`diagnostics`]).

pub mod diagnostics;
pub mod error;
pub mod icr;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod subproblem;

pub use error::{IcrError, Result};
pub use icr::{icr_run, IcrOptions, IcrResult, IcrTrace, Variant};
pub use model::{IndicatorVector, ProblemInstance};
pub use subproblem::{FrozenSet, SubproblemSolution, SubproblemSpec};

pub use nalgebra::{DMatrix, DVector};
