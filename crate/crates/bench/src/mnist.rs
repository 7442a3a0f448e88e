//! Compressive recovery of MNIST digits.
//!
//! Image `k` is vectorized row by row into `x0 ∈ [0, 1]^784` and observed as
//! `y = A x0 + n` with a fresh `150 × 784` Gaussian `A` (unit columns) and
//! noise drawn from the seed of trial `k`. Unless configured, `κ` is the
//! fraction of nonzero pixels over the images used.

use std::path::{Path, PathBuf};

use icr::metrics::{gaussian_noise, gaussian_unit_columns, mse, sparsity_level, trial_seed};
use icr::{DVector, IcrError, ProblemInstance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::emit::{self, ExperimentOutput, ImageRow};
use crate::error::{BenchError, Result};
use crate::experiment::{aggregate, evaluate, recover, thread_pool, MethodStats, TraceCheckSummary, TrialFailure};
use crate::idx::{load_idx_images, ImageSet, COLS, ROWS};
use crate::pgm::write_pgm;

/// Reconstructions indexed `[image][method]`, `None` where a method failed.
pub type Reconstructions = Vec<Vec<Option<DVector<f64>>>>;

/// Builds the measurement instance for image `x0`.
pub fn measure(cfg: &ExperimentConfig, x0: &DVector<f64>, kappa: f64, seed: u64) -> icr::Result<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_unit_columns(cfg.q, x0.len(), &mut rng);
    let y = &a * x0 + gaussian_noise(cfg.q, cfg.sigma, &mut rng);
    ProblemInstance::from_prior(a, y, cfg.lambda, cfg.sigma * cfg.sigma, DVector::from_element(x0.len(), kappa))
}

struct ImageResult {
    stats: Vec<Option<MethodStats>>,
    recon: Vec<Option<DVector<f64>>>,
    rows: Vec<ImageRow>,
    failures: Vec<TrialFailure>,
    checks: TraceCheckSummary,
}

fn run_image(cfg: &ExperimentConfig, x0: &DVector<f64>, kappa: f64, k: usize) -> ImageResult {
    let mut out = ImageResult {
        stats: vec![None; cfg.methods.len()],
        recon: vec![None; cfg.methods.len()],
        rows: Vec::new(),
        failures: Vec::new(),
        checks: TraceCheckSummary::default(),
    };
    let s = sparsity_level(x0, 0.0);
    let fail = |method: &str, e: IcrError| TrialFailure {
        s,
        trial: k as u64,
        method: method.to_string(),
        message: e.to_string(),
    };
    let inst = match measure(cfg, x0, kappa, trial_seed(cfg.master_seed, k as u64)) {
        Ok(inst) => inst,
        Err(e) => {
            out.failures.push(fail("instance", e));
            return out;
        }
    };
    for (j, &method) in cfg.methods.iter().enumerate() {
        let scored = recover(cfg, method, &inst).and_then(|r| {
            if let Some(res) = &r.icr {
                out.checks.record(res, &inst)?;
            }
            let stats = evaluate(cfg, &inst, &r.x, x0)?;
            Ok((r, stats))
        });
        match scored {
            Ok((r, stats)) => {
                out.rows.push(ImageRow {
                    image: k,
                    method,
                    mse: mse(&r.x, x0),
                    sparsity: sparsity_level(&r.x, cfg.tau),
                    iterations: r.iterations,
                });
                out.stats[j] = Some(MethodStats {
                    iterations: r.iterations as f64,
                    ..stats
                });
                out.recon[j] = Some(r.x);
            }
            Err(e) => out.failures.push(fail(method.name(), e)),
        }
    }
    out
}

pub fn load_images(cfg: &ExperimentConfig) -> Result<ImageSet> {
    let settings = cfg.mnist.as_ref().ok_or_else(|| BenchError::Config("mnist settings are missing".into()))?;
    let set = load_idx_images(&settings.images)?;
    if (set.count() as u64) < cfg.trials {
        return Err(BenchError::Config(format!(
            "{} holds {} images, {} requested",
            settings.images.display(),
            set.count(),
            cfg.trials
        )));
    }
    Ok(set)
}

pub fn run_mnist(cfg: &ExperimentConfig, jobs: usize) -> Result<(ExperimentOutput, Reconstructions)> {
    cfg.validate()?;
    let set = load_images(cfg)?;
    run_mnist_on(cfg, &set, jobs)
}

/// Timing is not recorded for images; `wall_time_s` is always 0.
pub fn run_mnist_on(cfg: &ExperimentConfig, set: &ImageSet, jobs: usize) -> Result<(ExperimentOutput, Reconstructions)> {
    cfg.validate()?;
    let count = cfg.trials as usize;
    if set.count() < count {
        return Err(BenchError::Config(format!("{} images available, {count} requested", set.count())));
    }
    let kappa = cfg.kappa.unwrap_or_else(|| set.active_fraction(count));
    let mut cfg = cfg.clone();
    cfg.kappa = Some(kappa);
    cfg.validate()?;

    let pool = thread_pool(jobs)?;
    let results: Vec<ImageResult> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|k| run_image(&cfg, &set.vectorized(k), kappa, k))
            .collect()
    });

    let s = (0..count).map(|k| sparsity_level(&set.vectorized(k), 0.0)).sum::<usize>() / count;
    let rows = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, &m)| aggregate(&cfg, m, s, kappa, results.iter().map(|r| r.stats[j])))
        .collect();
    let mut checks = TraceCheckSummary::default();
    let mut failures = Vec::new();
    let mut images = Vec::new();
    let mut recon = Vec::new();
    for r in results {
        checks += &r.checks;
        failures.extend(r.failures);
        images.extend(r.rows);
        recon.push(r.recon);
    }
    let output = ExperimentOutput {
        config: cfg.clone(),
        rows,
        images,
        complete: failures.is_empty(),
        failures,
        trace_checks: cfg.check_traces.then_some(checks),
    };
    Ok((output, recon))
}

fn pgm_name(k: usize, label: &str) -> String {
    format!("digit{k:02}_{}.pgm", label.to_ascii_lowercase())
}

/// Writes `mnist_images.csv` and, if enabled, `images/digitNN_<method>.pgm`
/// next to the originals.
pub fn write_reconstructions(
    cfg: &ExperimentConfig,
    output: &ExperimentOutput,
    recon: &Reconstructions,
    dir: &Path,
) -> Result<()> {
    let path = dir.join("mnist_images.csv");
    std::fs::write(&path, emit::image_csv_string(&output.images)).map_err(|e| BenchError::io(&path, e))?;
    let Some(settings) = cfg.mnist.as_ref().filter(|m| m.write_images) else {
        return Ok(());
    };
    let set = load_idx_images(&settings.images)?;
    let img_dir: PathBuf = dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| BenchError::io(&img_dir, e))?;
    for (k, per_method) in recon.iter().enumerate() {
        write_pgm(&img_dir.join(pgm_name(k, "original")), &set.vectorized(k), ROWS, COLS)?;
        for (x, m) in per_method.iter().zip(&output.config.methods) {
            if let Some(x) = x {
                write_pgm(&img_dir.join(pgm_name(k, m.name())), x, ROWS, COLS)?;
            }
        }
    }
    Ok(())
}
