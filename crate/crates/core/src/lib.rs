//! Histogram estimation of Radon-Nikodym derivatives for probability
//! measures on Cantor space `{0,1}^ℕ`.
//!
//! - [`words`]: finite words, cylinders, the metrics `d1`/`d2`, dyadic partitions.
//! - [`measures`]: Lebesgue, generalized Bernoulli and Markov cylinder measures.
//! - [`density`]: truncated density ratios and the exact product-measure oracle.
//! - [`estimator`]: the empirical measure and the histogram estimator with `N = 2^k`.
//! - [`experiments`]: seeded Monte Carlo sweeps of bias, variance, MSE and
//!   higher central moments against closed-form predictions.
//!
//! The measure, density and estimator code is generic over [`Scalar`]; the
//! aliases below fix the usual choices.

pub mod cli;
pub mod density;
pub mod estimator;
pub mod experiments;
pub mod measures;
pub mod scalar;
pub mod words;

pub use density::{constancy_depth, exact_density, truncated_density, DensityError, DensityOracle};
pub use estimator::{
    build_histogram, empirical_measure, required_depth, EstimatorError, HistogramBuilder, HistogramEstimate, Sample,
};
pub use measures::{
    sample_prefix, verify_additivity, AdditivityReport, CylinderMeasure, MeasureError, MeasureKind, MeasureSpecError,
    ParamSequence, PrefixSampler,
};
pub use scalar::Scalar;
pub use words::{
    cell_of, cylinder_diameter, distance, first_difference, mesh, partition, prefix_of, FiniteWord, FirstDifference,
    Metric, Partition, SequencePrefix, WordError,
};

pub use num_rational::BigRational;

/// Double-precision measure.
pub type Measure = CylinderMeasure<f64>;
/// Exact rational measure.
pub type ExactMeasure = CylinderMeasure<BigRational>;
pub type Params = ParamSequence<f64>;
pub type ExactParams = ParamSequence<BigRational>;
pub type Oracle = DensityOracle<f64>;
pub type ExactOracle = DensityOracle<BigRational>;
pub type Histogram = HistogramEstimate<f64>;
