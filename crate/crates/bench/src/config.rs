//! Declarative experiment descriptions.
//!
//! A config starts from the defaults of its [`ExperimentKind`], is
//! overridden by an optional TOML file and then by command-line flags. The
//! resolved [`ExperimentConfig`] is echoed into the JSON output; it contains
//! everything that influences the numbers and nothing that does not (thread
//! count and output location live in [`RunOptions`]).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use icr::icr::{FreezeMode, IcrOptions, InnerOptions, Variant};
use icr::metrics::{MatchScope, DEFAULT_TAU};
use icr::model::compute_rho;
use icr::oracle::{support_count, DEFAULT_ENUMERATION_BUDGET};
use icr::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SynthGlobal,
    SynthLarge,
    SparsitySweep,
    Mnist,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SynthGlobal => "synth-global",
            Self::SynthLarge => "synth-large",
            Self::SparsitySweep => "sparsity-sweep",
            Self::Mnist => "mnist",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ICR")]
    Icr,
    #[serde(rename = "ICR-NN")]
    IcrNn,
    #[serde(rename = "ElasticNet")]
    ElasticNet,
    #[serde(rename = "Oracle")]
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Icr, Method::IcrNn, Method::ElasticNet, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Self::Icr => "ICR",
            Self::IcrNn => "ICR-NN",
            Self::ElasticNet => "ElasticNet",
            Self::Oracle => "Oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?} (expected ICR, ICR-NN, ElasticNet or Oracle)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    pub freeze_mode: FreezeMode,
    pub freeze_epsilon: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = IcrOptions::default();
        Self {
            outer_tol: d.tol,
            max_outer_iters: d.max_outer_iters,
            inner_tol: d.inner.tol,
            max_inner_iters: d.inner.max_iters,
            freeze_mode: d.freeze_mode,
            freeze_epsilon: d.freeze_epsilon,
        }
    }
}

impl SolverSettings {
    pub fn inner(&self) -> InnerOptions {
        InnerOptions {
            tol: self.inner_tol,
            max_iters: self.max_inner_iters,
        }
    }

    pub fn icr_options(&self, variant: Variant, record_trace: bool) -> IcrOptions {
        IcrOptions {
            variant,
            tol: self.outer_tol,
            max_outer_iters: self.max_outer_iters,
            freeze_mode: self.freeze_mode,
            freeze_epsilon: self.freeze_epsilon,
            inner: self.inner(),
            record_trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistSettings {
    /// IDX3 image file.
    pub images: PathBuf,
    /// Also write the reconstructions as PGM files.
    pub write_images: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub p: usize,
    pub q: usize,
    pub s: usize,
    /// Sparsity levels for a sweep; ignored by the other kinds.
    pub sweep: Vec<usize>,
    pub sigma: f64,
    pub lambda: f64,
    /// `None` only for MNIST, where the empirical active-pixel fraction is used.
    pub kappa: Option<f64>,
    /// Monte-Carlo trials; for MNIST the number of leading images.
    pub trials: u64,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub tau: f64,
    pub match_scope: MatchScope,
    /// Draw `|N(0, 1)|` instead of `N(0, 1)` nonzeros.
    pub nonneg_signal: bool,
    /// Largest support the oracle enumerates; `None` means `p`.
    pub max_support: Option<usize>,
    pub solver: SolverSettings,
    /// Record ICR traces and run the convergence monitors on them.
    pub check_traces: bool,
    /// Measure wall time. Off by default so that outputs are reproducible
    /// byte for byte.
    pub record_timing: bool,
    pub mnist: Option<MnistSettings>,
}

/// Settings that do not influence results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub jobs: usize,
    pub out: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            out: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            p: 16,
            q: 8,
            s: 3,
            sweep: Vec::new(),
            sigma: 0.01,
            lambda: 1e-2,
            kappa: Some(0.05),
            trials: 200,
            master_seed: 1,
            methods: vec![Method::Icr, Method::ElasticNet, Method::Oracle],
            tau: DEFAULT_TAU,
            match_scope: MatchScope::All,
            nonneg_signal: false,
            max_support: None,
            solver: SolverSettings::default(),
            check_traces: true,
            record_timing: false,
            mnist: None,
        };
        match kind {
            ExperimentKind::SynthGlobal => base,
            ExperimentKind::SynthLarge => Self {
                p: 512,
                q: 128,
                s: 30,
                trials: 50,
                methods: vec![Method::Icr, Method::ElasticNet],
                ..base
            },
            ExperimentKind::SparsitySweep => Self {
                p: 512,
                q: 128,
                s: 0,
                sweep: vec![5, 15, 30, 50, 70],
                trials: 25,
                methods: vec![Method::Icr, Method::ElasticNet],
                ..base
            },
            ExperimentKind::Mnist => Self {
                p: 784,
                q: 150,
                s: 0,
                kappa: None,
                trials: 20,
                methods: vec![Method::IcrNn, Method::Icr, Method::ElasticNet],
                mnist: Some(MnistSettings {
                    images: PathBuf::from("train-images-idx3-ubyte"),
                    write_images: true,
                }),
                ..base
            },
        }
    }

    /// Defaults for `kind` overridden by the TOML document at `path`.
    pub fn from_file(kind: ExperimentKind, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(kind, &text).map_err(|e| match e {
            BenchError::Config(message) => BenchError::ConfigParse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(kind: ExperimentKind, text: &str) -> Result<Self> {
        let overrides: ConfigOverrides =
            toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        if let Some(k) = overrides.kind {
            if k != kind {
                return Err(BenchError::Config(format!(
                    "config describes a {k} experiment, not {kind}"
                )));
            }
        }
        let mut cfg = Self::defaults(kind);
        overrides.apply(&mut cfg);
        Ok(cfg)
    }

    /// Sparsity levels this config runs.
    pub fn sparsity_levels(&self) -> Vec<usize> {
        match self.kind {
            ExperimentKind::SparsitySweep => self.sweep.clone(),
            _ => vec![self.s],
        }
    }

    pub fn max_support(&self) -> usize {
        self.max_support.unwrap_or(self.p).min(self.p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.p == 0 || self.q == 0 {
            return bad(format!("p = {} and q = {} must be positive", self.p, self.q));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma = {} must be positive", self.sigma));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau = {} must be positive", self.tau));
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        for (k, m) in self.methods.iter().enumerate() {
            if self.methods[..k].contains(m) {
                return bad(format!("method {m} listed twice"));
            }
        }
        match self.kind {
            ExperimentKind::SparsitySweep => {
                if self.sweep.is_empty() {
                    return bad("a sweep needs at least one sparsity level".into());
                }
                if let Some(s) = self.sweep.iter().find(|s| **s > self.p) {
                    return bad(format!("sparsity level {s} exceeds p = {}", self.p));
                }
            }
            ExperimentKind::Mnist => {
                if self.methods.contains(&Method::Oracle) {
                    return bad("the oracle is not available for image recovery".into());
                }
                if self.mnist.is_none() {
                    return bad("mnist settings are missing".into());
                }
                if self.p != crate::idx::ROWS * crate::idx::COLS {
                    return bad(format!("p = {} but images have 784 pixels", self.p));
                }
            }
            _ => {
                if self.s > self.p {
                    return bad(format!("s = {} exceeds p = {}", self.s, self.p));
                }
            }
        }
        // Image runs without a kappa take it from the data and are checked then.
        match (self.kappa, self.kind) {
            (Some(kappa), _) => {
                if let Err(e) = compute_rho(&DVector::from_element(1, kappa), self.sigma * self.sigma, self.lambda) {
                    return bad(format!("hyperparameters give invalid penalties: {e}"));
                }
            }
            (None, ExperimentKind::Mnist) => {}
            (None, _) => return bad("kappa is required".into()),
        }
        if self.methods.contains(&Method::Oracle) {
            let required = support_count(self.p, self.max_support());
            if required > DEFAULT_ENUMERATION_BUDGET {
                return bad(format!(
                    "the oracle would enumerate {required} supports (budget {DEFAULT_ENUMERATION_BUDGET}); lower p or max_support"
                ));
            }
        }
        let s = &self.solver;
        let icr = s.icr_options(Variant::Unconstrained, false);
        if let Err(e) = icr.validate() {
            return bad(format!("solver settings: {e}"));
        }
        Ok(())
    }
}

/// Partial config as read from a file; every present field replaces the default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigOverrides {
    kind: Option<ExperimentKind>,
    p: Option<usize>,
    q: Option<usize>,
    s: Option<usize>,
    sweep: Option<Vec<usize>>,
    sigma: Option<f64>,
    lambda: Option<f64>,
    kappa: Option<f64>,
    trials: Option<u64>,
    master_seed: Option<u64>,
    methods: Option<Vec<Method>>,
    tau: Option<f64>,
    match_scope: Option<MatchScope>,
    nonneg_signal: Option<bool>,
    max_support: Option<usize>,
    solver: Option<SolverOverrides>,
    check_traces: Option<bool>,
    record_timing: Option<bool>,
    mnist: Option<MnistOverrides>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverOverrides {
    outer_tol: Option<f64>,
    max_outer_iters: Option<usize>,
    inner_tol: Option<f64>,
    max_inner_iters: Option<usize>,
    freeze_mode: Option<FreezeMode>,
    freeze_epsilon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MnistOverrides {
    images: Option<PathBuf>,
    write_images: Option<bool>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ConfigOverrides {
    fn apply(self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.p, self.p);
        set(&mut cfg.q, self.q);
        set(&mut cfg.s, self.s);
        set(&mut cfg.sweep, self.sweep);
        set(&mut cfg.sigma, self.sigma);
        set(&mut cfg.lambda, self.lambda);
        if self.kappa.is_some() {
            cfg.kappa = self.kappa;
        }
        set(&mut cfg.trials, self.trials);
        set(&mut cfg.master_seed, self.master_seed);
        set(&mut cfg.methods, self.methods);
        set(&mut cfg.tau, self.tau);
        set(&mut cfg.match_scope, self.match_scope);
        set(&mut cfg.nonneg_signal, self.nonneg_signal);
        if self.max_support.is_some() {
            cfg.max_support = self.max_support;
        }
        if let Some(s) = self.solver {
            set(&mut cfg.solver.outer_tol, s.outer_tol);
            set(&mut cfg.solver.max_outer_iters, s.max_outer_iters);
            set(&mut cfg.solver.inner_tol, s.inner_tol);
            set(&mut cfg.solver.max_inner_iters, s.max_inner_iters);
            set(&mut cfg.solver.freeze_mode, s.freeze_mode);
            set(&mut cfg.solver.freeze_epsilon, s.freeze_epsilon);
        }
        set(&mut cfg.check_traces, self.check_traces);
        set(&mut cfg.record_timing, self.record_timing);
        if let Some(m) = self.mnist {
            let target = cfg.mnist.get_or_insert(MnistSettings {
                images: PathBuf::new(),
                write_images: true,
            });
            set(&mut target.images, m.images);
            set(&mut target.write_images, m.write_images);
        }
    }
}
