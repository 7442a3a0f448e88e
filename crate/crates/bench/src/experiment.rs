//! Monte-Carlo execution of synthetic experiments.
//!
//! Trials run in parallel on a pool of `jobs` threads, but every trial is a
//! pure function of `(config, trial index)` and results are reduced in trial
//! order, so outputs do not depend on the thread count.

use std::ops::AddAssign;
use std::path::Path;
use std::time::Instant;

use icr::diagnostics::{lemma1_monitor, quasi_cauchy_check, surrogate_descent_check, DEFAULT_BURN_IN_FRACTION};
use icr::metrics::{generate_instance, mse, sparsity_level, support_match_in, trial_seed, SynthParams};
use icr::model::map_objective;
use icr::oracle::{elastic_net, global_enumeration};
use icr::{icr_run, DVector, IcrError, IcrResult, IndicatorVector, ProblemInstance, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind, Method, RunOptions};
use crate::emit::{self, ExperimentOutput, MetricsRow};
use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub s: usize,
    pub trial: u64,
    /// Method name, or `instance` when generation itself failed.
    pub method: String,
    pub message: String,
}

/// Convergence monitors aggregated over every recorded ICR trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceCheckSummary {
    pub runs: usize,
    pub converged_runs: usize,
    pub quasi_cauchy_checked: usize,
    pub quasi_cauchy_passed: usize,
    /// Traces with fewer iterations than the check needs.
    pub quasi_cauchy_too_short: usize,
    pub descent_violations: usize,
    pub descent_unclean_runs: usize,
    pub lemma1_violations: usize,
    pub lemma1_unclean_runs: usize,
}

impl AddAssign<&TraceCheckSummary> for TraceCheckSummary {
    fn add_assign(&mut self, o: &TraceCheckSummary) {
        self.runs += o.runs;
        self.converged_runs += o.converged_runs;
        self.quasi_cauchy_checked += o.quasi_cauchy_checked;
        self.quasi_cauchy_passed += o.quasi_cauchy_passed;
        self.quasi_cauchy_too_short += o.quasi_cauchy_too_short;
        self.descent_violations += o.descent_violations;
        self.descent_unclean_runs += o.descent_unclean_runs;
        self.lemma1_violations += o.lemma1_violations;
        self.lemma1_unclean_runs += o.lemma1_unclean_runs;
    }
}

impl TraceCheckSummary {
    /// Runs the monitors on the trace of `res`, if it has one.
    pub fn record(&mut self, res: &IcrResult, inst: &ProblemInstance) -> std::result::Result<(), IcrError> {
        let Some(trace) = &res.trace else {
            return Ok(());
        };
        self.runs += 1;
        self.converged_runs += usize::from(res.converged);
        match quasi_cauchy_check(trace, DEFAULT_BURN_IN_FRACTION) {
            Ok(report) => {
                self.quasi_cauchy_checked += 1;
                self.quasi_cauchy_passed += usize::from(report.passed);
            }
            Err(IcrError::TraceTooShort { .. }) => self.quasi_cauchy_too_short += 1,
            Err(e) => return Err(e),
        }
        let descent = surrogate_descent_check(trace, inst)?;
        self.descent_violations += descent.violations.len();
        self.descent_unclean_runs += usize::from(!descent.is_clean());
        let lemma = lemma1_monitor(trace, inst);
        self.lemma1_violations += lemma.violations.len();
        self.lemma1_unclean_runs += usize::from(!lemma.is_clean());
        Ok(())
    }
}

/// Figures of merit of one method on one trial.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MethodStats {
    pub cost: f64,
    pub mse: f64,
    pub support_match: f64,
    pub sparsity: f64,
    pub iterations: f64,
    pub wall_time: f64,
}

impl AddAssign for MethodStats {
    fn add_assign(&mut self, o: Self) {
        self.cost += o.cost;
        self.mse += o.mse;
        self.support_match += o.support_match;
        self.sparsity += o.sparsity;
        self.iterations += o.iterations;
        self.wall_time += o.wall_time;
    }
}

/// Scores `x` against `reference` with the config's threshold and scope.
pub fn evaluate(
    cfg: &ExperimentConfig,
    inst: &ProblemInstance,
    x: &DVector<f64>,
    reference: &DVector<f64>,
) -> std::result::Result<MethodStats, IcrError> {
    Ok(MethodStats {
        cost: map_objective(inst, x, &IndicatorVector::support_of(x))?,
        mse: mse(x, reference),
        support_match: support_match_in(x, reference, cfg.tau, cfg.match_scope),
        sparsity: sparsity_level(x, cfg.tau) as f64,
        ..MethodStats::default()
    })
}

/// Output of one method: the estimate and its iteration count (outer
/// iterations for ICR, 1 for the elastic net, 0 for enumeration).
pub struct Recovery {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub icr: Option<IcrResult>,
}

pub fn recover(
    cfg: &ExperimentConfig,
    method: Method,
    inst: &ProblemInstance,
) -> std::result::Result<Recovery, IcrError> {
    let icr = |variant| -> std::result::Result<Recovery, IcrError> {
        let res = icr_run(inst, &cfg.solver.icr_options(variant, cfg.check_traces))?;
        Ok(Recovery {
            x: res.x_star.clone(),
            iterations: res.iterations,
            icr: Some(res),
        })
    };
    match method {
        Method::Icr => icr(Variant::Unconstrained),
        Method::IcrNn => icr(Variant::NonNegative),
        Method::ElasticNet => Ok(Recovery {
            x: elastic_net(inst, &cfg.solver.inner())?,
            iterations: 1,
            icr: None,
        }),
        Method::Oracle => Ok(Recovery {
            x: global_enumeration(inst, cfg.max_support())?.x_g,
            iterations: 0,
            icr: None,
        }),
    }
}

struct TrialResult {
    /// Indexed like `cfg.methods`; `None` where the method failed.
    stats: Vec<Option<MethodStats>>,
    failures: Vec<TrialFailure>,
    checks: TraceCheckSummary,
}

fn synth_params(cfg: &ExperimentConfig, s: usize) -> SynthParams {
    SynthParams {
        p: cfg.p,
        q: cfg.q,
        s,
        sigma: cfg.sigma,
        lambda: cfg.lambda,
        kappa: cfg.kappa.expect("validated"),
        nonneg_signal: cfg.nonneg_signal,
    }
}

fn run_trial(cfg: &ExperimentConfig, s: usize, trial: u64) -> TrialResult {
    let mut out = TrialResult {
        stats: vec![None; cfg.methods.len()],
        failures: Vec::new(),
        checks: TraceCheckSummary::default(),
    };
    let fail = |method: &str, e: IcrError| TrialFailure {
        s,
        trial,
        method: method.to_string(),
        message: e.to_string(),
    };
    // Sweep levels share trial seeds, so each level sees the same matrices.
    let g = match generate_instance(&synth_params(cfg, s), trial_seed(cfg.master_seed, trial)) {
        Ok(g) => g,
        Err(e) => {
            out.failures.push(fail("instance", e));
            return out;
        }
    };
    let reference = if cfg.kind == ExperimentKind::SynthGlobal {
        match global_enumeration(&g.inst, cfg.max_support()) {
            Ok(o) => o.x_g,
            Err(e) => {
                out.failures.push(fail(Method::Oracle.name(), e));
                return out;
            }
        }
    } else {
        g.x0.clone()
    };

    for (k, &method) in cfg.methods.iter().enumerate() {
        let start = cfg.record_timing.then(Instant::now);
        let scored = recover(cfg, method, &g.inst).and_then(|r| {
            let wall_time = start.map_or(0.0, |t| t.elapsed().as_secs_f64());
            if let Some(res) = &r.icr {
                out.checks.record(res, &g.inst)?;
            }
            let stats = evaluate(cfg, &g.inst, &r.x, &reference)?;
            Ok(MethodStats {
                iterations: r.iterations as f64,
                wall_time,
                ..stats
            })
        });
        match scored {
            Ok(stats) => out.stats[k] = Some(stats),
            Err(e) => out.failures.push(fail(method.name(), e)),
        }
    }
    out
}

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start {jobs} worker threads: {e}")))
}

/// Mean of `stats` as a row; `None` entries are skipped.
pub(crate) fn aggregate(
    cfg: &ExperimentConfig,
    method: Method,
    s: usize,
    kappa: f64,
    stats: impl Iterator<Item = Option<MethodStats>>,
) -> MetricsRow {
    let mut sum = MethodStats::default();
    let mut n = 0u64;
    for st in stats.flatten() {
        sum += st;
        n += 1;
    }
    let d = n.max(1) as f64;
    MetricsRow {
        method,
        p: cfg.p,
        q: cfg.q,
        s,
        lambda: cfg.lambda,
        kappa,
        sigma: cfg.sigma,
        trials: n,
        avg_cost: sum.cost / d,
        mse: sum.mse / d,
        support_match_pct: sum.support_match / d,
        avg_sparsity: sum.sparsity / d,
        avg_iters: sum.iterations / d,
        wall_time_s: sum.wall_time / d,
    }
}

/// Runs a synthetic experiment. Trial failures do not abort the run; they
/// are listed in the output, which is then marked incomplete.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if cfg.kind == ExperimentKind::Mnist {
        return Err(BenchError::Config("use the mnist runner for image experiments".into()));
    }
    let pool = thread_pool(jobs)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut checks = TraceCheckSummary::default();
    for s in cfg.sparsity_levels() {
        let results: Vec<TrialResult> =
            pool.install(|| (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, s, t)).collect());
        for r in &results {
            checks += &r.checks;
            failures.extend(r.failures.iter().cloned());
        }
        for (k, &method) in cfg.methods.iter().enumerate() {
            let kappa = cfg.kappa.expect("validated");
            rows.push(aggregate(cfg, method, s, kappa, results.iter().map(|r| r.stats[k])));
        }
    }
    let uses_icr = cfg.methods.iter().any(|m| matches!(m, Method::Icr | Method::IcrNn));
    Ok(ExperimentOutput {
        config: cfg.clone(),
        rows,
        images: Vec::new(),
        complete: failures.is_empty(),
        failures,
        trace_checks: (cfg.check_traces && uses_icr).then_some(checks),
    })
}

pub fn file_stem(kind: ExperimentKind) -> String {
    kind.to_string().replace('-', "_")
}

/// Runs `cfg` and writes `<kind>.csv` and `<kind>.json` (plus the per-image
/// table and reconstructions for MNIST) into `opts.out`.
pub fn run_and_write(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let (output, recon) = match cfg.kind {
        ExperimentKind::Mnist => {
            let (output, recon) = crate::mnist::run_mnist(cfg, opts.jobs)?;
            (output, Some(recon))
        }
        _ => (run_experiment(cfg, opts.jobs)?, None),
    };
    write_outputs(&output, &opts.out)?;
    if let Some(recon) = recon {
        crate::mnist::write_reconstructions(cfg, &output, &recon, &opts.out)?;
    }
    Ok(output)
}

pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let stem = file_stem(output.config.kind);
    emit::emit_csv(&output.rows, output.failures.len(), &dir.join(format!("{stem}.csv")))?;
    emit::emit_json(output, &dir.join(format!("{stem}.json")))
}
