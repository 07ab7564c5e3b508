//! Monte Carlo harness for the pointwise behaviour of the histogram
//! estimator, with closed-form cross-checks.
//!
//! For a pair `(μ, λ)` with an exact density oracle and a point `x`, each
//! depth `k` draws `R` independent samples of size `N = 2^k` from `μ`,
//! builds the histogram against `λ` and evaluates it at `x`. The count in
//! the cell of `x` is `Binomial(N, p)` with `p = μ(cell)`, so bias and
//! variance are also known exactly:
//!
//! ```text
//! E f_N(x) = p / λ(cell)        V f_N(x) = p (1 - p) / (N λ(cell)^2)
//! ```
//!
//! Replication `r` at depth `k` uses its own ChaCha stream derived from
//! `(master_seed, k, r)`, and results are reduced in replication order, so
//! reports are bit-identical for any worker count.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::density::{DensityError, DensityOracle};
use crate::estimator::{EstimatorError, HistogramEstimate};
use crate::measures::{CylinderMeasure, MeasureError};
use crate::scalar::Scalar;
use crate::words::{SequencePrefix, WordError};

/// Default upper bound on `k`; `N = 2^20` draws per replication.
pub const DEFAULT_MAX_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("moment order {0} unsupported; expected 1 or 2")]
    UnsupportedOrder(u32),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// A measure pair with its exact density oracle.
#[derive(Debug, Clone)]
pub struct Setup<T> {
    mu: CylinderMeasure<T>,
    lambda: CylinderMeasure<T>,
    oracle: DensityOracle<T>,
}

impl<T: Scalar> Setup<T> {
    /// Fails unless `(mu, lambda)` admits an exact oracle.
    pub fn new(mu: CylinderMeasure<T>, lambda: CylinderMeasure<T>) -> Result<Self, ExperimentError> {
        let oracle = DensityOracle::from_measures(&mu, &lambda)?;
        Ok(Self { mu, lambda, oracle })
    }

    pub fn mu(&self) -> &CylinderMeasure<T> {
        &self.mu
    }

    pub fn lambda(&self) -> &CylinderMeasure<T> {
        &self.lambda
    }

    pub fn oracle(&self) -> &DensityOracle<T> {
        &self.oracle
    }

    fn check_point(&self, x: &SequencePrefix, max_k: usize) -> Result<(), ExperimentError> {
        let required = max_k.max(self.oracle.constancy_depth());
        if x.horizon() < required {
            return Err(WordError::HorizonTooShort { horizon: x.horizon(), required }.into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub replications: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    pub max_k: usize,
}

impl SweepConfig {
    pub fn new(k_min: usize, k_max: usize, replications: usize, master_seed: u64) -> Self {
        Self { k_min, k_max, replications, master_seed, workers: None, max_k: DEFAULT_MAX_K }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |msg: String| Err(ExperimentError::Config(msg));
        if self.k_min == 0 {
            return fail("k_min must be at least 1".into());
        }
        if self.k_min > self.k_max {
            return fail(format!("k_min {} exceeds k_max {}", self.k_min, self.k_max));
        }
        if self.k_max > self.max_k {
            return fail(format!("k_max {} exceeds the cap {}", self.k_max, self.max_k));
        }
        if self.replications < 2 {
            return fail("at least 2 replications are needed".into());
        }
        if self.workers == Some(0) {
            return fail("worker count must be positive".into());
        }
        Ok(())
    }

    fn ks(&self) -> impl Iterator<Item = usize> {
        self.k_min..=self.k_max
    }

    fn run<R: Send>(&self, job: impl FnOnce() -> R + Send) -> Result<R, ExperimentError> {
        match self.workers {
            None => Ok(job()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| ExperimentError::Pool(e.to_string()))?;
                Ok(pool.install(job))
            }
        }
    }
}

/// Random stream for replication `rep` at depth `k`.
pub fn replication_rng(master_seed: u64, k: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((k as u64) << 40) | rep as u64);
    rng
}

/// One row of a sweep. Monte Carlo rows fill every field from `R`
/// replications; analytic rows from [`predicted_row`] have
/// `replications = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow<T = f64> {
    pub k: usize,
    pub n: u64,
    pub lambda_cell: T,
    pub n_lambda: T,
    pub mean_fn: T,
    pub bias: T,
    /// Population variance of `f_N(x)` across replications.
    pub variance: T,
    /// Mean of `(f_N(x) - f(x))^2`.
    pub mse: T,
    pub predicted_variance: T,
    pub replications: usize,
    pub seed: u64,
    /// Monte Carlo standard error of `mean_fn` (and so of `bias`).
    pub bias_se: T,
    /// Monte Carlo standard error of `mse`.
    pub mse_se: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub row: ConvergenceRow,
    pub m: u32,
    /// Empirical `E[(f_N - E f_N)^{2m}]`, centred at the replication mean.
    pub central_moment_2m: f64,
    /// `(N λ(cell))^{-m}`
    pub bound_scale: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdtRow<T> {
    pub k: usize,
    /// `μ(cell) / λ(cell)`, the λ-average of `f` over the cell of `x`.
    pub cell_average: T,
    pub density: T,
    pub abs_error: T,
}

/// `f_N(x)` for each of `replications` independent samples at depth `k`,
/// in replication order.
pub fn replicate_estimates(
    setup: &Setup<f64>,
    x: &SequencePrefix,
    k: usize,
    replications: usize,
    master_seed: u64,
) -> Result<Vec<f64>, ExperimentError> {
    let sampler = setup.mu.sampler()?;
    let n = 1usize << k;
    (0..replications)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |cells, rep| {
                let mut rng = replication_rng(master_seed, k, rep);
                cells.clear();
                cells.extend((0..n).map(|_| sampler.draw_index(k, &mut rng)));
                let h = HistogramEstimate::from_cell_indices(k, cells, setup.lambda.clone())?;
                Ok(h.evaluate(x)?)
            },
        )
        .collect()
}

/// Closed-form row: exact bias and binomial variance of `f_N(x)`.
pub fn predicted_row<T: Scalar>(
    setup: &Setup<T>,
    x: &SequencePrefix,
    k: usize,
) -> Result<ConvergenceRow<T>, ExperimentError> {
    setup.check_point(x, k)?;
    let cell = x.truncate(k)?;
    let p = setup.mu.measure_of(&cell);
    let lambda_cell = setup.lambda.measure_of(&cell);
    let n = 1u64 << k;
    let n_t = T::from_count(n);
    let f = setup.oracle.exact_density(x)?;
    let mean_fn = p.clone() / lambda_cell.clone();
    let bias = mean_fn.clone() - f;
    let variance = p.clone() * (T::one() - p) / (n_t.clone() * lambda_cell.clone() * lambda_cell.clone());
    Ok(ConvergenceRow {
        k,
        n,
        n_lambda: n_t * lambda_cell.clone(),
        lambda_cell,
        mean_fn,
        mse: bias.clone() * bias.clone() + variance.clone(),
        bias,
        predicted_variance: variance.clone(),
        variance,
        replications: 0,
        seed: 0,
        bias_se: T::zero(),
        mse_se: T::zero(),
    })
}

fn summarize(
    setup: &Setup<f64>,
    x: &SequencePrefix,
    k: usize,
    estimates: &[f64],
    seed: u64,
) -> Result<ConvergenceRow, ExperimentError> {
    let predicted = predicted_row(setup, x, k)?;
    let truth = setup.oracle.exact_density(x)?;
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let variance = estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r;
    let squared: Vec<f64> = estimates.iter().map(|v| (v - truth).powi(2)).collect();
    let mse = squared.iter().sum::<f64>() / r;
    let sq_var = squared.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (r - 1.0);
    Ok(ConvergenceRow {
        mean_fn: mean,
        bias: mean - truth,
        variance,
        mse,
        replications: estimates.len(),
        seed,
        bias_se: (variance * r / (r - 1.0) / r).sqrt(),
        mse_se: (sq_var / r).sqrt(),
        ..predicted
    })
}

/// Empirical bias, variance and MSE of `f_N(x)` for each `k` in range.
pub fn mse_sweep(
    setup: &Setup<f64>,
    x: &SequencePrefix,
    cfg: &SweepConfig,
) -> Result<Vec<ConvergenceRow>, ExperimentError> {
    cfg.validate()?;
    setup.check_point(x, cfg.k_max)?;
    cfg.run(|| {
        cfg.ks()
            .map(|k| {
                let est = replicate_estimates(setup, x, k, cfg.replications, cfg.master_seed)?;
                summarize(setup, x, k, &est, cfg.master_seed)
            })
            .collect()
    })?
}

/// Empirical `2m`-th central moment of `f_N(x)` against `(N λ(cell))^{-m}`.
pub fn moment_sweep(
    setup: &Setup<f64>,
    x: &SequencePrefix,
    cfg: &SweepConfig,
    m: u32,
) -> Result<Vec<MomentRow>, ExperimentError> {
    if !(1..=2).contains(&m) {
        return Err(ExperimentError::UnsupportedOrder(m));
    }
    cfg.validate()?;
    setup.check_point(x, cfg.k_max)?;
    cfg.run(|| {
        cfg.ks()
            .map(|k| {
                let est = replicate_estimates(setup, x, k, cfg.replications, cfg.master_seed)?;
                let row = summarize(setup, x, k, &est, cfg.master_seed)?;
                let central = est.iter().map(|v| (v - row.mean_fn).powi(2 * m as i32)).sum::<f64>() / est.len() as f64;
                let bound_scale = row.n_lambda.powi(-(m as i32));
                Ok(MomentRow { central_moment_2m: central, bound_scale, ratio: central / bound_scale, m, row })
            })
            .collect()
    })?
}

/// Cell averages of `f` against `f(x)`, computed analytically.
pub fn ldt_check<T: Scalar>(
    setup: &Setup<T>,
    x: &SequencePrefix,
    k_min: usize,
    k_max: usize,
) -> Result<Vec<LdtRow<T>>, ExperimentError> {
    if k_min == 0 || k_min > k_max {
        return Err(ExperimentError::Config(format!("bad k range {k_min}..={k_max}")));
    }
    setup.check_point(x, k_max)?;
    let density = setup.oracle.exact_density(x)?;
    (k_min..=k_max)
        .map(|k| {
            let cell = x.truncate(k)?;
            let cell_average = setup.mu.measure_of(&cell) / setup.lambda.measure_of(&cell);
            Ok(LdtRow {
                k,
                abs_error: (cell_average.clone() - density.clone()).abs(),
                cell_average,
                density: density.clone(),
            })
        })
        .collect()
}

/// CSV provenance line, `# key=value ...`.
pub fn write_comment<W: Write>(out: &mut W, fields: &[(&str, String)]) -> io::Result<()> {
    let joined: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(out, "# {}", joined.join(" "))
}

const CONVERGENCE_HEADER: &str =
    "k,N,lambda_cell,n_lambda,mean_fN,bias,variance,mse,predicted_variance,replications,seed";

fn convergence_fields(r: &ConvergenceRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.k,
        r.n,
        r.lambda_cell,
        r.n_lambda,
        r.mean_fn,
        r.bias,
        r.variance,
        r.mse,
        r.predicted_variance,
        r.replications,
        r.seed
    )
}

pub fn write_convergence_csv<W: Write>(mut out: W, rows: &[ConvergenceRow]) -> io::Result<()> {
    writeln!(out, "{CONVERGENCE_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", convergence_fields(r))?;
    }
    Ok(())
}

pub fn write_moment_csv<W: Write>(mut out: W, rows: &[MomentRow]) -> io::Result<()> {
    writeln!(out, "{CONVERGENCE_HEADER},m,central_moment_2m,bound_scale,ratio")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", convergence_fields(&r.row), r.m, r.central_moment_2m, r.bound_scale, r.ratio)?;
    }
    Ok(())
}

pub fn write_ldt_csv<W: Write, T: Scalar>(mut out: W, rows: &[LdtRow<T>]) -> io::Result<()> {
    writeln!(out, "k,cell_average,f_x,abs_error")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.k, r.cell_average.as_f64(), r.density.as_f64(), r.abs_error.as_f64())?;
    }
    Ok(())
}
