use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icr::diagnostics::{
    lemma1_monitor, quasi_cauchy_check, reciprocal_mean_increments, running_mean_drift, surrogate_descent_check,
    ConvergenceReport, DescentReport, Lemma1Report,
};
use icr::metrics::{generate_instance, trial_seed, SynthParams};
use icr::{icr_run, Variant};
use icr_bench::config::{ExperimentConfig, ExperimentKind, Method, RunOptions};
use icr_bench::error::{BenchError, Result};
use icr_bench::experiment::run_and_write;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "icr-bench", version, about = "Sparse recovery benchmarks for iterative convex refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed; trial seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of trials (images for mnist).
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// TOML file overriding the defaults of the experiment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Small instances scored against exhaustive enumeration.
    SynthGlobal(Overrides),
    /// Large instances scored against the ground truth.
    SynthLarge(Overrides),
    /// Metrics as a function of the true sparsity level.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Sparsity levels, comma separated.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
    /// Compressive recovery of MNIST digits.
    Mnist {
        #[command(flatten)]
        overrides: Overrides,
        /// IDX3 image file.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Skip writing PGM reconstructions.
        #[arg(long)]
        no_images: bool,
    },
    /// Run ICR once with a trace and report the convergence monitors.
    Diagnose {
        #[command(flatten)]
        overrides: Overrides,
        /// Trial index whose instance is diagnosed.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Use the non-negative variant.
        #[arg(long)]
        nonneg: bool,
        /// Include per-coordinate reciprocal-mean increments.
        #[arg(long)]
        verbose: bool,
    },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Comma separated subset of ICR, ICR-NN, ElasticNet, Oracle.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Support threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Largest support the oracle enumerates.
    #[arg(long)]
    max_support: Option<usize>,
    #[arg(long)]
    outer_tol: Option<f64>,
    #[arg(long)]
    max_outer_iters: Option<usize>,
    /// Draw non-negative ground-truth values.
    #[arg(long)]
    nonneg_signal: bool,
    /// Measure wall time (makes outputs non-reproducible).
    #[arg(long)]
    record_timing: bool,
    /// Skip the convergence monitors.
    #[arg(long)]
    no_trace_checks: bool,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.p, self.p);
        set(&mut cfg.q, self.q);
        set(&mut cfg.s, self.s);
        set(&mut cfg.sigma, self.sigma);
        set(&mut cfg.lambda, self.lambda);
        if self.kappa.is_some() {
            cfg.kappa = self.kappa;
        }
        set(&mut cfg.methods, self.methods.clone());
        set(&mut cfg.tau, self.tau);
        if self.max_support.is_some() {
            cfg.max_support = self.max_support;
        }
        set(&mut cfg.solver.outer_tol, self.outer_tol);
        set(&mut cfg.solver.max_outer_iters, self.max_outer_iters);
        cfg.nonneg_signal |= self.nonneg_signal;
        cfg.record_timing |= self.record_timing;
        if self.no_trace_checks {
            cfg.check_traces = false;
        }
    }
}

impl Cli {
    fn config(&self, kind: ExperimentKind, overrides: &Overrides) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(kind, path)?,
            None => ExperimentConfig::defaults(kind),
        };
        overrides.apply(&mut cfg);
        set(&mut cfg.master_seed, self.seed);
        set(&mut cfg.trials, self.trials);
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            jobs: self.jobs,
            out: self.out.clone(),
        }
    }
}

#[derive(Serialize)]
struct DiagnoseReport {
    p: usize,
    q: usize,
    s: usize,
    trial: u64,
    seed: u64,
    variant: Variant,
    iterations: usize,
    converged: bool,
    quasi_cauchy: Option<ConvergenceReport>,
    quasi_cauchy_error: Option<String>,
    lemma1: Lemma1Report,
    descent: DescentReport,
    running_mean_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    reciprocal_mean_increments: Option<Vec<Option<f64>>>,
}

fn diagnose(cfg: &ExperimentConfig, trial: u64, nonneg: bool, verbose: bool, out: &std::path::Path) -> Result<()> {
    cfg.validate()?;
    let seed = trial_seed(cfg.master_seed, trial);
    let params = SynthParams {
        p: cfg.p,
        q: cfg.q,
        s: cfg.s,
        sigma: cfg.sigma,
        lambda: cfg.lambda,
        kappa: cfg.kappa.expect("validated"),
        nonneg_signal: cfg.nonneg_signal || nonneg,
    };
    let trial_err = |source| BenchError::Trial {
        trial,
        method: if nonneg { "ICR-NN" } else { "ICR" }.into(),
        source,
    };
    let g = generate_instance(&params, seed).map_err(trial_err)?;
    let variant = if nonneg { Variant::NonNegative } else { Variant::Unconstrained };
    let res = icr_run(&g.inst, &cfg.solver.icr_options(variant, true)).map_err(trial_err)?;
    let trace = res.trace.as_ref().expect("trace requested");
    let (quasi_cauchy, quasi_cauchy_error) = match quasi_cauchy_check(trace, icr::diagnostics::DEFAULT_BURN_IN_FRACTION) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = DiagnoseReport {
        p: cfg.p,
        q: cfg.q,
        s: cfg.s,
        trial,
        seed,
        variant,
        iterations: res.iterations,
        converged: res.converged,
        quasi_cauchy,
        quasi_cauchy_error,
        lemma1: lemma1_monitor(trace, &g.inst),
        descent: surrogate_descent_check(trace, &g.inst).map_err(trial_err)?,
        running_mean_drift: running_mean_drift(trace),
        reciprocal_mean_increments: verbose.then(|| reciprocal_mean_increments(trace)),
    };
    let json = serde_json::to_string_pretty(&report)? + "\n";
    std::fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))?;
    let path = out.join("diagnose.json");
    std::fs::write(&path, &json).map_err(|e| BenchError::io(&path, e))?;
    print!("{json}");
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let opts = cli.options();
    let cfg = match &cli.command {
        Command::SynthGlobal(o) => cli.config(ExperimentKind::SynthGlobal, o)?,
        Command::SynthLarge(o) => cli.config(ExperimentKind::SynthLarge, o)?,
        Command::Sweep { overrides, levels } => {
            let mut cfg = cli.config(ExperimentKind::SparsitySweep, overrides)?;
            set(&mut cfg.sweep, levels.clone());
            cfg
        }
        Command::Mnist {
            overrides,
            images,
            no_images,
        } => {
            let mut cfg = cli.config(ExperimentKind::Mnist, overrides)?;
            if let Some(m) = cfg.mnist.as_mut() {
                set(&mut m.images, images.clone());
                m.write_images &= !no_images;
            }
            cfg
        }
        Command::Diagnose {
            overrides,
            trial,
            nonneg,
            verbose,
        } => {
            let mut cfg = ExperimentConfig {
                p: 64,
                q: 32,
                s: 10,
                ..ExperimentConfig::defaults(ExperimentKind::SynthLarge)
            };
            if let Some(path) = &cli.config {
                cfg = ExperimentConfig::from_file(ExperimentKind::SynthLarge, path)?;
            }
            overrides.apply(&mut cfg);
            set(&mut cfg.master_seed, cli.seed);
            diagnose(&cfg, *trial, *nonneg, *verbose, &opts.out)?;
            return Ok(true);
        }
    };
    let output = run_and_write(&cfg, &opts)?;
    for f in &output.failures {
        eprintln!("trial {} (s = {}), {}: {}", f.trial, f.s, f.method, f.message);
    }
    Ok(output.complete)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
