//! `cantor-density` command line.
//!
//! Exit codes: 0 success, 1 I/O failure or failed additivity check, 2 bad
//! arguments or measure spec, 3 pair without an exact density oracle, 4
//! horizon or size violation, 5 sample size breaking `N = 2^k` without
//! `--force-k`.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::density::{truncated_density, DensityError, DensityOracle};
use crate::estimator::{build_histogram, required_depth, EstimatorError, Sample, DENSE_EXPORT_MAX_DEPTH};
use crate::experiments::{
    ldt_check, moment_sweep, mse_sweep, write_comment, write_convergence_csv, write_ldt_csv, write_moment_csv,
    ExperimentError, Setup, SweepConfig,
};
use crate::measures::{verify_additivity_with, AdditivityCheck, CylinderMeasure, MeasureError, MeasureSpecError};
use crate::words::{SequencePrefix, WordError};
use crate::Measure;

#[derive(Debug, Parser)]
#[command(name = "cantor-density", version, about = "Histogram density estimation on Cantor space")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check additivity and normalization of a measure.
    MeasureCheck(MeasureCheckArgs),
    /// Draw a sample file from a measure.
    Sample(SampleArgs),
    /// Build a histogram from a sample file.
    Estimate(EstimateArgs),
    /// Truncated and exact density at a point.
    Density(DensityArgs),
    /// Monte Carlo bias/variance/MSE sweep over k.
    Mse(SweepArgs),
    /// Monte Carlo central-moment sweep over k.
    Moments(MomentArgs),
    /// Cell averages of the density against its value at a point.
    Ldt(LdtArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output path, `-` for standard output.
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct MeasureCheckArgs {
    /// Measure to check (alias: --mu).
    #[arg(long, alias = "mu")]
    pub lambda: String,
    #[arg(long, default_value_t = 12)]
    pub depth: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Seed for the random probes past depth 12.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub mu: String,
    /// Number of observations.
    #[arg(long)]
    pub n: usize,
    /// Bits per observation.
    #[arg(long)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub lambda: String,
    /// Sample file, one bit string per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Partition depth; defaults to log2 of the sample size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Accept a depth that breaks N = 2^k.
    #[arg(long)]
    pub force_k: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long)]
    pub mu: String,
    #[arg(long)]
    pub lambda: String,
    #[arg(long)]
    pub point: String,
    /// Truncation depth; defaults to the point's length.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub mu: String,
    #[arg(long)]
    pub lambda: String,
    #[arg(long)]
    pub point: String,
    #[arg(long)]
    pub k_min: usize,
    #[arg(long)]
    pub k_max: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to all cores. Output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct MomentArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Moment order; the 2m-th central moment is reported.
    #[arg(long, default_value_t = 2)]
    pub m: u32,
}

#[derive(Debug, Args)]
pub struct LdtArgs {
    #[arg(long)]
    pub mu: String,
    #[arg(long)]
    pub lambda: String,
    #[arg(long)]
    pub point: String,
    #[arg(long)]
    pub k_min: usize,
    #[arg(long)]
    pub k_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Spec(#[from] MeasureSpecError),
    #[error("{0}")]
    Usage(String),
    #[error("inadmissible measure pair: {0}")]
    Inadmissible(DensityError),
    #[error("{0}")]
    Size(String),
    #[error("{0}")]
    SamplingRate(String),
    #[error("additivity check failed")]
    CheckFailed,
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::CheckFailed => 1,
            CliError::Spec(_) | CliError::Usage(_) => 2,
            CliError::Inadmissible(_) => 3,
            CliError::Size(_) => 4,
            CliError::SamplingRate(_) => 5,
        }
    }
}

impl From<WordError> for CliError {
    fn from(e: WordError) -> Self {
        match e {
            WordError::InvalidSymbol { .. } => CliError::Usage(e.to_string()),
            other => CliError::Size(other.to_string()),
        }
    }
}

impl From<DensityError> for CliError {
    fn from(e: DensityError) -> Self {
        match e {
            DensityError::Word(w) => w.into(),
            DensityError::ZeroLambdaMass { .. } => CliError::Size(e.to_string()),
            other => CliError::Inadmissible(other),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Word(w) => w.into(),
            EstimatorError::SamplingRate { .. } => {
                CliError::SamplingRate(format!("{e}; pass --k with --force-k to override"))
            }
            EstimatorError::Parse { .. } => CliError::Usage(e.to_string()),
            EstimatorError::EmptySample | EstimatorError::TrivialPartition => CliError::Size(e.to_string()),
        }
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Density(d) => d.into(),
            ExperimentError::Estimator(s) => s.into(),
            ExperimentError::Word(w) => w.into(),
            ExperimentError::Measure(m) => m.into(),
            ExperimentError::Config(_) | ExperimentError::UnsupportedOrder(_) | ExperimentError::Pool(_) => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

fn io_err(path: &str) -> impl Fn(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_string(), source }
}

/// Buffers output and writes it to `--out` in one go on success.
fn emit(path: &str, body: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    body(&mut buf).map_err(io_err(path))?;
    if path == "-" {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        lock.write_all(&buf).and_then(|_| lock.flush()).map_err(io_err("<stdout>"))
    } else {
        let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
        f.write_all(&buf).and_then(|_| f.flush()).map_err(io_err(path))
    }
}

fn point(s: &str) -> Result<SequencePrefix, CliError> {
    s.parse().map_err(|e: WordError| CliError::Usage(format!("--point: {e}")))
}

fn sweep_setup(mu: &str, lambda: &str) -> Result<Setup<f64>, CliError> {
    Ok(Setup::new(mu.parse()?, lambda.parse()?)?)
}

impl SweepArgs {
    fn config(&self) -> SweepConfig {
        let cfg = SweepConfig::new(self.k_min, self.k_max, self.reps, self.seed);
        match self.workers {
            Some(w) => cfg.with_workers(w),
            None => cfg,
        }
    }

    fn provenance(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("mu", self.mu.clone()),
            ("lambda", self.lambda.clone()),
            ("point", self.point.clone()),
            ("reps", self.reps.to_string()),
        ]
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::MeasureCheck(a) => {
            let m: Measure = a.lambda.parse()?;
            let check = AdditivityCheck { seed: a.seed, ..AdditivityCheck::new(a.depth, a.tol) };
            let report = verify_additivity_with(&m, &check);
            let mass_depth = a.depth.clamp(1, 12);
            let mass = m.partition_mass(mass_depth)?;
            emit(&a.output.out, |out| {
                write_comment(out, &[("seed", a.seed.to_string()), ("measure", a.lambda.clone())])?;
                writeln!(
                    out,
                    "max_depth,words_checked,worst_violation,worst_word,partition_depth,partition_mass,passed"
                )?;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    a.depth,
                    report.words_checked,
                    report.worst_violation,
                    report.worst_word,
                    mass_depth,
                    mass,
                    if report.passed { "pass" } else { "fail" }
                )
            })?;
            if report.passed {
                Ok(())
            } else {
                Err(CliError::CheckFailed)
            }
        }
        Command::Sample(a) => {
            let mu: Measure = a.mu.parse()?;
            if a.n == 0 || a.horizon == 0 {
                return Err(CliError::Size("--n and --horizon must be positive".into()));
            }
            let sampler = mu.sampler()?;
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            emit(&a.output.out, |out| {
                write_comment(out, &[("seed", a.seed.to_string()), ("mu", a.mu.clone()), ("n", a.n.to_string())])?;
                let mut bits = Vec::with_capacity(a.horizon);
                let mut line = String::with_capacity(a.horizon + 1);
                for _ in 0..a.n {
                    sampler.draw_into(a.horizon, &mut rng, &mut bits);
                    line.clear();
                    line.extend(bits.iter().map(|&b| if b { '1' } else { '0' }));
                    line.push('\n');
                    out.write_all(line.as_bytes())?;
                }
                Ok(())
            })
        }
        Command::Estimate(a) => {
            let lambda: Measure = a.lambda.parse()?;
            let path = a.input.display().to_string();
            let text = fs::read_to_string(&a.input).map_err(io_err(&path))?;
            let sample = Sample::parse(&text)?;
            let k = match (a.k, required_depth(sample.len())) {
                (None, rule) => rule?,
                (Some(k), Ok(rule)) if k == rule => k,
                (Some(k), _) if a.force_k => {
                    eprintln!("warning: k = {k} with N = {} overrides the N = 2^k sampling rule", sample.len());
                    k
                }
                (Some(k), _) => {
                    return Err(CliError::SamplingRate(format!(
                        "sample size {} is not 2^{k}; the sampling-rate rule N = 2^k is violated (use --force-k)",
                        sample.len()
                    )))
                }
            };
            let h = build_histogram(&sample, &lambda, k)?;
            emit(&a.output.out, |out| {
                write_comment(
                    out,
                    &[
                        ("seed", a.seed.to_string()),
                        ("lambda", a.lambda.clone()),
                        ("N", sample.len().to_string()),
                        ("k", k.to_string()),
                        ("sampling_rule", if h.follows_sampling_rule() { "ok" } else { "overridden" }.into()),
                        ("integral", h.integral_check().to_string()),
                    ],
                )?;
                h.write_csv(out, k <= DENSE_EXPORT_MAX_DEPTH)
            })
        }
        Command::Density(a) => {
            let mu: Measure = a.mu.parse()?;
            let lambda: Measure = a.lambda.parse()?;
            let x = point(&a.point)?;
            let m = a.m.unwrap_or(x.horizon());
            let exact = match DensityOracle::from_measures(&mu, &lambda) {
                Ok(o) => Some((o.exact_density(&x)?, o.constancy_depth())),
                Err(DensityError::NotProduct { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            let truncated = truncated_density(&mu, &lambda, &x, m)?;
            emit(&a.output.out, |out| {
                write_comment(
                    out,
                    &[("seed", a.seed.to_string()), ("mu", a.mu.clone()), ("lambda", a.lambda.clone())],
                )?;
                writeln!(out, "point,m,truncated_density,exact_density,constancy_depth")?;
                match exact {
                    Some((f, depth)) => writeln!(out, "{x},{m},{truncated},{f},{depth}"),
                    None => writeln!(out, "{x},{m},{truncated},NA,NA"),
                }
            })
        }
        Command::Mse(a) => {
            let setup = sweep_setup(&a.mu, &a.lambda)?;
            let rows = mse_sweep(&setup, &point(&a.point)?, &a.config())?;
            emit(&a.output.out, |out| {
                write_comment(out, &a.provenance())?;
                write_convergence_csv(out, &rows)
            })
        }
        Command::Moments(a) => {
            let s = &a.sweep;
            let setup = sweep_setup(&s.mu, &s.lambda)?;
            let rows = moment_sweep(&setup, &point(&s.point)?, &s.config(), a.m)?;
            emit(&s.output.out, |out| {
                write_comment(out, &s.provenance())?;
                write_moment_csv(out, &rows)
            })
        }
        Command::Ldt(a) => {
            let mu: CylinderMeasure<BigRational> = a.mu.parse()?;
            let lambda: CylinderMeasure<BigRational> = a.lambda.parse()?;
            let setup = Setup::new(mu, lambda)?;
            let rows = ldt_check(&setup, &point(&a.point)?, a.k_min, a.k_max)?;
            emit(&a.output.out, |out| {
                write_comment(
                    out,
                    &[
                        ("seed", a.seed.to_string()),
                        ("mu", a.mu.clone()),
                        ("lambda", a.lambda.clone()),
                        ("point", a.point.clone()),
                        ("constancy_depth", setup.oracle().constancy_depth().to_string()),
                    ],
                )?;
                write_ldt_csv(out, &rows)
            })
        }
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
