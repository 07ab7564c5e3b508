//! Empirical measure and histogram estimator over the dyadic partition.
//!
//! With a sample of `N = 2^k` prefixes, the estimate at `x` is the fraction
//! of the sample in the depth-`k` cell containing `x`, divided by the
//! dominating measure of that cell. Counts are stored sparsely by cell
//! index, so depths far beyond what a dense array could hold are fine.

use std::collections::HashMap;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::measures::CylinderMeasure;
use crate::scalar::Scalar;
use crate::words::{cell_index, FiniteWord, SequencePrefix, WordError, MAX_DEPTH};

/// Deepest histogram for which CSV export lists every cell, empty or not.
pub const DENSE_EXPORT_MAX_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("sample is empty")]
    EmptySample,
    #[error("sample size {n} is not 2^k for an integer k; the sampling-rate rule N = 2^k is violated")]
    SamplingRate { n: usize },
    #[error("sample size 1 gives k = 0; a nontrivial partition needs k >= 1")]
    TrivialPartition,
    #[error("line {line}: {source}")]
    Parse { line: usize, source: WordError },
}

/// `k` with `N = 2^k`.
pub fn required_depth(n: usize) -> Result<usize, EstimatorError> {
    match n {
        0 => Err(EstimatorError::EmptySample),
        1 => Err(EstimatorError::TrivialPartition),
        n if n.is_power_of_two() => Ok(n.trailing_zeros() as usize),
        n => Err(EstimatorError::SamplingRate { n }),
    }
}

/// Independent observations `x_1..x_N`, each known to a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    prefixes: Vec<SequencePrefix>,
    depth_budget: usize,
}

impl Sample {
    pub fn new(prefixes: Vec<SequencePrefix>) -> Result<Self, EstimatorError> {
        let depth_budget = prefixes.iter().map(SequencePrefix::horizon).min().ok_or(EstimatorError::EmptySample)?;
        Ok(Self { prefixes, depth_budget })
    }

    /// One bit string per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, EstimatorError> {
        let mut prefixes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            prefixes.push(line.parse().map_err(|source| EstimatorError::Parse { line: i + 1, source })?);
        }
        Self::new(prefixes)
    }

    pub fn len(&self) -> usize {
        self.prefixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes.is_empty()
    }

    pub fn prefixes(&self) -> &[SequencePrefix] {
        &self.prefixes
    }

    /// Shortest horizon in the sample; the deepest usable partition.
    pub fn depth_budget(&self) -> usize {
        self.depth_budget
    }

    fn ensure_horizon(&self, required: usize) -> Result<(), WordError> {
        if self.depth_budget < required {
            return Err(WordError::HorizonTooShort { horizon: self.depth_budget, required });
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for x in &self.prefixes {
            writeln!(out, "{x}")?;
        }
        Ok(())
    }
}

/// `F_N([w])`: the fraction of the sample extending `w`.
pub fn empirical_measure<T: Scalar>(s: &Sample, w: &FiniteWord) -> Result<T, EstimatorError> {
    s.ensure_horizon(w.len())?;
    let hits = s.prefixes.iter().filter(|x| x.bits().starts_with(w.bits())).count();
    Ok(T::from_count(hits as u64) / T::from_count(s.len() as u64))
}

/// Incremental histogram construction. Builders over disjoint chunks of a
/// sample can be merged in any order with identical results.
#[derive(Debug, Clone)]
pub struct HistogramBuilder<T> {
    depth: usize,
    lambda: CylinderMeasure<T>,
    counts: HashMap<u64, u64>,
    n: u64,
}

impl<T: Scalar> HistogramBuilder<T> {
    pub fn new(lambda: CylinderMeasure<T>, depth: usize) -> Result<Self, EstimatorError> {
        if depth == 0 {
            return Err(WordError::ZeroDepth.into());
        }
        if depth > MAX_DEPTH {
            return Err(WordError::DepthTooLarge(depth).into());
        }
        Ok(Self { depth, lambda, counts: HashMap::new(), n: 0 })
    }

    pub fn push(&mut self, x: &SequencePrefix) -> Result<(), EstimatorError> {
        let j = cell_index(x, self.depth)?;
        *self.counts.entry(j).or_insert(0) += 1;
        self.n += 1;
        Ok(())
    }

    pub fn merge(mut self, other: Self) -> Self {
        debug_assert_eq!(self.depth, other.depth);
        for (j, c) in other.counts {
            *self.counts.entry(j).or_insert(0) += c;
        }
        self.n += other.n;
        self
    }

    /// Clears the counts, keeping depth and dominating measure.
    pub fn reset(&mut self) {
        self.counts.clear();
        self.n = 0;
    }

    pub fn finish(&self) -> Result<HistogramEstimate<T>, EstimatorError> {
        if self.n == 0 {
            return Err(EstimatorError::EmptySample);
        }
        let mut counts: Vec<(u64, u64)> = self.counts.iter().map(|(&j, &c)| (j, c)).collect();
        counts.sort_unstable();
        Ok(HistogramEstimate::from_raw_parts(self.depth, counts, self.n, self.lambda.clone()))
    }
}

/// Per-cell counts over `Π_k` together with the dominating measure.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramEstimate<T> {
    depth: usize,
    /// Nonempty cells only, sorted by cell index.
    counts: Vec<(u64, u64)>,
    sample_size: u64,
    lambda: CylinderMeasure<T>,
}

pub fn build_histogram<T: Scalar>(
    s: &Sample,
    lambda: &CylinderMeasure<T>,
    k: usize,
) -> Result<HistogramEstimate<T>, EstimatorError> {
    s.ensure_horizon(k)?;
    let empty = HistogramBuilder::new(lambda.clone(), k)?;
    let builder = s
        .prefixes
        .par_chunks(4096)
        .map(|chunk| {
            let mut b = empty.clone();
            for x in chunk {
                b.push(x)?;
            }
            Ok::<_, EstimatorError>(b)
        })
        .try_reduce(|| empty.clone(), |a, b| Ok(a.merge(b)))?;
    builder.finish()
}

impl<T: Scalar> HistogramEstimate<T> {
    /// Histogram with the sample size taken from `N = 2^k`.
    pub fn from_sample(s: &Sample, lambda: &CylinderMeasure<T>) -> Result<Self, EstimatorError> {
        build_histogram(s, lambda, required_depth(s.len())?)
    }

    /// Histogram of the cells with the given indices, one per observation.
    /// Reorders `indices`.
    pub fn from_cell_indices(
        depth: usize,
        indices: &mut [u64],
        lambda: CylinderMeasure<T>,
    ) -> Result<Self, EstimatorError> {
        if depth == 0 {
            return Err(WordError::ZeroDepth.into());
        }
        if depth > MAX_DEPTH {
            return Err(WordError::DepthTooLarge(depth).into());
        }
        if indices.is_empty() {
            return Err(EstimatorError::EmptySample);
        }
        if let Some(&index) = indices.iter().find(|&&j| j >> depth != 0) {
            return Err(WordError::IndexOutOfRange { index, depth }.into());
        }
        indices.sort_unstable();
        let mut counts: Vec<(u64, u64)> = Vec::new();
        for &j in indices.iter() {
            match counts.last_mut() {
                Some((last, c)) if *last == j => *c += 1,
                _ => counts.push((j, 1)),
            }
        }
        Ok(Self { depth, counts, sample_size: indices.len() as u64, lambda })
    }

    /// Assembles a histogram without checking that the counts add up to
    /// `sample_size`; [`integral_check`](Self::integral_check) exposes any
    /// mismatch.
    pub fn from_raw_parts(
        depth: usize,
        mut counts: Vec<(u64, u64)>,
        sample_size: u64,
        lambda: CylinderMeasure<T>,
    ) -> Self {
        counts.retain(|&(_, c)| c > 0);
        counts.sort_unstable();
        Self { depth, counts, sample_size, lambda }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn sample_size(&self) -> u64 {
        self.sample_size
    }

    pub fn lambda(&self) -> &CylinderMeasure<T> {
        &self.lambda
    }

    /// Whether `N = 2^k` holds for this histogram.
    pub fn follows_sampling_rule(&self) -> bool {
        self.depth < 64 && self.sample_size == 1u64 << self.depth
    }

    pub fn nonempty_cells(&self) -> &[(u64, u64)] {
        &self.counts
    }

    pub fn count(&self, j: u64) -> u64 {
        self.counts.binary_search_by_key(&j, |&(i, _)| i).map_or(0, |pos| self.counts[pos].1)
    }

    fn cell_word(&self, j: u64) -> FiniteWord {
        FiniteWord::from_index(j, self.depth).expect("cell index within partition")
    }

    pub fn lambda_of_cell(&self, j: u64) -> T {
        self.lambda.measure_of(&self.cell_word(j))
    }

    /// `f_N` on cell `j`: `(count_j / N) / λ(cell_j)`.
    pub fn value_in_cell(&self, j: u64) -> T {
        let count = self.count(j);
        if count == 0 {
            return T::zero();
        }
        self.frequency(count) / self.lambda_of_cell(j)
    }

    fn frequency(&self, count: u64) -> T {
        T::from_count(count) / T::from_count(self.sample_size)
    }

    /// `f_N(x)`; depends on `x` only through `x↾k`.
    pub fn evaluate(&self, x: &SequencePrefix) -> Result<T, EstimatorError> {
        Ok(self.value_in_cell(cell_index(x, self.depth)?))
    }

    /// `Σ_j f_N(cell_j) λ(cell_j)`, equal to 1 for a well-formed histogram.
    pub fn integral_check(&self) -> T {
        self.counts.iter().fold(T::zero(), |acc, &(j, c)| {
            let lambda = self.lambda_of_cell(j);
            acc + self.frequency(c) / lambda.clone() * lambda
        })
    }

    /// Writes `cell_index,cell_word,count,lambda_cell,f_N`. With
    /// `all_cells` every cell of `Π_k` is listed, otherwise only nonempty
    /// ones.
    pub fn write_csv<W: Write>(&self, mut out: W, all_cells: bool) -> io::Result<()> {
        writeln!(out, "cell_index,cell_word,count,lambda_cell,f_N")?;
        let mut row = |j: u64, count: u64| -> io::Result<()> {
            let lambda = self.lambda_of_cell(j);
            let f = if count == 0 { T::zero() } else { self.frequency(count) / lambda.clone() };
            writeln!(out, "{j},{},{count},{},{}", self.cell_word(j), lambda.as_f64(), f.as_f64())
        };
        if all_cells {
            for j in 0..1u64 << self.depth {
                row(j, self.count(j))?;
            }
        } else {
            for &(j, c) in &self.counts {
                row(j, c)?;
            }
        }
        Ok(())
    }
}

pub fn evaluate<T: Scalar>(h: &HistogramEstimate<T>, x: &SequencePrefix) -> Result<T, EstimatorError> {
    h.evaluate(x)
}

pub fn integral_check<T: Scalar>(h: &HistogramEstimate<T>) -> T {
    h.integral_check()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ParamSequence;
    use crate::words::partition;
    use num_rational::BigRational;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Measure = CylinderMeasure<f64>;

    fn fixture() -> Sample {
        Sample::parse("00\n01\n01\n11\n").unwrap()
    }

    fn x(s: &str) -> SequencePrefix {
        s.parse().unwrap()
    }

    #[test]
    fn required_depth_examples() {
        assert_eq!(required_depth(8), Ok(3));
        assert_eq!(required_depth(1 << 20), Ok(20));
        assert_eq!(required_depth(1), Err(EstimatorError::TrivialPartition));
        assert_eq!(required_depth(12), Err(EstimatorError::SamplingRate { n: 12 }));
        assert_eq!(required_depth(0), Err(EstimatorError::EmptySample));
    }

    #[test]
    fn empirical_measure_examples() {
        let s = fixture();
        assert_eq!(empirical_measure::<f64>(&s, &"01".parse().unwrap()), Ok(0.5));
        assert_eq!(empirical_measure::<f64>(&s, &FiniteWord::empty()), Ok(1.0));
        assert_eq!(empirical_measure::<f64>(&s, &"10".parse().unwrap()), Ok(0.0));
        assert!(matches!(
            empirical_measure::<f64>(&s, &"010".parse().unwrap()),
            Err(EstimatorError::Word(WordError::HorizonTooShort { horizon: 2, required: 3 }))
        ));
    }

    #[test]
    fn build_histogram_hand_count() {
        let h = build_histogram(&fixture(), &Measure::lebesgue(), 2).unwrap();
        assert_eq!(h.nonempty_cells(), &[(0, 1), (1, 2), (3, 1)]);
        assert!(h.follows_sampling_rule());
        let values: Vec<f64> = (0..4).map(|j| h.value_in_cell(j)).collect();
        assert_eq!(values, [1.0, 2.0, 0.0, 1.0]);
        assert_eq!(h.evaluate(&x("0111")), Ok(2.0));
        assert_eq!(h.evaluate(&x("10")), Ok(0.0));
        assert_eq!(h.integral_check(), 1.0);
    }

    #[test]
    fn degenerate_sample() {
        let s = Sample::new(vec![x("1110"); 8]).unwrap();
        let h = build_histogram(&s, &Measure::lebesgue(), 2).unwrap();
        assert_eq!(h.nonempty_cells(), &[(3, 8)]);
        assert_eq!(h.evaluate(&x("11")), Ok(4.0));
        assert!(!h.follows_sampling_rule());
    }

    #[test]
    fn horizon_and_size_errors() {
        assert!(matches!(
            build_histogram(&fixture(), &Measure::lebesgue(), 3),
            Err(EstimatorError::Word(WordError::HorizonTooShort { .. }))
        ));
        assert_eq!(Sample::new(Vec::new()), Err(EstimatorError::EmptySample));
        assert_eq!(Sample::parse("# nothing\n\n"), Err(EstimatorError::EmptySample));
        assert!(matches!(Sample::parse("01\n0a1\n"), Err(EstimatorError::Parse { line: 2, .. })));
        let h = build_histogram(&fixture(), &Measure::lebesgue(), 1).unwrap();
        assert!(h.evaluate(&x("1")).is_ok());
        let h = build_histogram(&fixture(), &Measure::lebesgue(), 2).unwrap();
        assert!(h.evaluate(&x("1")).is_err());
        assert!(matches!(
            HistogramEstimate::from_sample(&Sample::new(vec![x("01"); 3]).unwrap(), &Measure::lebesgue()),
            Err(EstimatorError::SamplingRate { n: 3 })
        ));
    }

    #[test]
    fn from_cell_indices_agrees_with_builder() {
        let s = random_sample(17, 512, 9);
        let lambda: Measure = "bernoulli:tail=0.4".parse().unwrap();
        let mut indices: Vec<u64> = s.prefixes().iter().map(|x| cell_index(x, 9).unwrap()).collect();
        let h = HistogramEstimate::from_cell_indices(9, &mut indices, lambda.clone()).unwrap();
        assert_eq!(h, build_histogram(&s, &lambda, 9).unwrap());
        assert!(HistogramEstimate::from_cell_indices(2, &mut [4], lambda.clone()).is_err());
        assert_eq!(HistogramEstimate::from_cell_indices(2, &mut [], lambda), Err(EstimatorError::EmptySample));
    }

    #[test]
    fn integral_check_detects_dropped_observation() {
        let h = HistogramEstimate::from_raw_parts(2, vec![(0, 1), (1, 1), (3, 1)], 4, Measure::lebesgue());
        assert_eq!(h.integral_check(), 0.75);
    }

    #[test]
    fn exact_histogram_integrates_to_one() {
        let lambda: CylinderMeasure<BigRational> = "bernoulli:tail=0.3,head=0.6;0.7".parse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu: Measure = "bernoulli:tail=0.5".parse().unwrap();
        let sampler = mu.sampler().unwrap();
        let s = Sample::new((0..64).map(|_| sampler.draw(8, &mut rng)).collect()).unwrap();
        let h = build_histogram(&s, &lambda, 6).unwrap();
        assert_eq!(h.integral_check(), BigRational::from_integer(1.into()));
    }

    #[test]
    fn csv_export() {
        let h = build_histogram(&fixture(), &Measure::lebesgue(), 2).unwrap();
        let mut out = Vec::new();
        h.write_csv(&mut out, true).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "cell_index,cell_word,count,lambda_cell,f_N\n\
             0,00,1,0.25,1\n1,01,2,0.25,2\n2,10,0,0.25,0\n3,11,1,0.25,1\n"
        );
        let mut sparse = Vec::new();
        h.write_csv(&mut sparse, false).unwrap();
        assert_eq!(String::from_utf8(sparse).unwrap().lines().count(), 4);
    }

    #[test]
    fn unbiased_on_cells() {
        let mu = Measure::bernoulli(ParamSequence::new(vec![0.3, 0.8], 0.6).unwrap());
        let sampler = mu.sampler().unwrap();
        let (n, reps) = (64usize, 400usize);
        let w: FiniteWord = "101".parse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let total: f64 = (0..reps)
            .map(|_| {
                let s = Sample::new((0..n).map(|_| sampler.draw(6, &mut rng)).collect()).unwrap();
                empirical_measure::<f64>(&s, &w).unwrap()
            })
            .sum();
        let p = mu.measure_of(&w);
        let se = (p * (1.0 - p) / (n * reps) as f64).sqrt();
        assert!((total / reps as f64 - p).abs() <= 3.0 * se);
    }

    fn random_sample(seed: u64, n: usize, horizon: usize) -> Sample {
        let mu: Measure = "markov:pi=0.3,0.7,P=0.6,0.4;0.25,0.75".parse().unwrap();
        let sampler = mu.sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Sample::new((0..n).map(|_| sampler.draw(horizon, &mut rng)).collect()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sparse_matches_dense_enumeration(seed in any::<u64>(), k in 1usize..=8) {
            let s = random_sample(seed, 1 << k, 10);
            let h = build_histogram(&s, &Measure::lebesgue(), k).unwrap();
            let dense: Vec<u64> = partition(k)
                .unwrap()
                .cells()
                .map(|c| s.prefixes().iter().filter(|x| c.contains(x).unwrap()).count() as u64)
                .collect();
            for (j, &c) in dense.iter().enumerate() {
                prop_assert_eq!(h.count(j as u64), c);
            }
            prop_assert_eq!(dense.iter().sum::<u64>(), s.len() as u64);
            prop_assert!((h.integral_check() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn permutation_invariant(seed in any::<u64>()) {
            let s = random_sample(seed, 256, 12);
            let lambda: Measure = "bernoulli:tail=0.4,head=0.5;0.2".parse().unwrap();
            let h = build_histogram(&s, &lambda, 8).unwrap();
            let mut shuffled = s.prefixes().to_vec();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
            let h2 = build_histogram(&Sample::new(shuffled).unwrap(), &lambda, 8).unwrap();
            prop_assert_eq!(h, h2);
        }

        #[test]
        fn evaluate_sees_only_the_cell_word(seed in any::<u64>(), tail_a in any::<bool>(), tail_b in any::<bool>()) {
            let s = random_sample(seed, 128, 9);
            let h = build_histogram(&s, &Measure::lebesgue(), 7).unwrap();
            let cell = s.prefixes()[0].truncate(7).unwrap();
            let a = SequencePrefix::extending(&cell, tail_a, 15).unwrap();
            let b = SequencePrefix::extending(&cell, tail_b, 9).unwrap();
            prop_assert_eq!(h.evaluate(&a).unwrap(), h.evaluate(&b).unwrap());
        }
    }
}
