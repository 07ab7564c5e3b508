//! The density `f = dμ/dλ` as the limit of cylinder ratios
//! `μ([x↾m]) / λ([x↾m])`.
//!
//! [`truncated_density`] evaluates the ratio at a finite depth for any pair
//! of measures. For two generalized Bernoulli measures whose parameters agree
//! past some coordinate `M`, the ratio stops changing after depth `M` and
//! [`DensityOracle`] returns the limit in closed form.

use thiserror::Error;

use crate::measures::{CylinderMeasure, ParamSequence};
use crate::scalar::Scalar;
use crate::words::{SequencePrefix, WordError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error(transparent)]
    Word(#[from] WordError),
    #[error(
        "density limit does not stabilize; pair rejected for exact oracle \
         (tails {mu_tail} vs {lambda_tail} give mutually singular measures)"
    )]
    NonStabilizing { mu_tail: f64, lambda_tail: f64 },
    #[error("{which} is not a product measure; no exact density oracle")]
    NotProduct { which: &'static str },
    #[error("{which} is not normalized")]
    Unnormalized { which: &'static str },
    #[error("dominating measure gives zero mass to the cylinder at depth {depth}")]
    ZeroLambdaMass { depth: usize },
}

/// `μ([x↾m]) / λ([x↾m])`.
pub fn truncated_density<T: Scalar>(
    mu: &CylinderMeasure<T>,
    lambda: &CylinderMeasure<T>,
    x: &SequencePrefix,
    m: usize,
) -> Result<T, DensityError> {
    let head = x.initial_segment(m)?;
    let denom = lambda.unnormalized_mass(head) * lambda.total_mass().clone();
    if denom.is_zero() {
        return Err(DensityError::ZeroLambdaMass { depth: m });
    }
    Ok(mu.unnormalized_mass(head) * mu.total_mass().clone() / denom)
}

/// Largest coordinate where the two sequences differ (0 when identical).
/// Differing tails make the coordinate ratios a non-unit constant forever, so
/// the infinite product goes to 0 or ∞ almost everywhere and the pair is
/// rejected.
pub fn constancy_depth<T: Scalar>(
    mu_params: &ParamSequence<T>,
    lambda_params: &ParamSequence<T>,
) -> Result<usize, DensityError> {
    if mu_params.tail() != lambda_params.tail() {
        return Err(DensityError::NonStabilizing {
            mu_tail: mu_params.tail().as_f64(),
            lambda_tail: lambda_params.tail().as_f64(),
        });
    }
    let explicit = mu_params.head().len().max(lambda_params.head().len());
    Ok((1..=explicit).rev().find(|&i| mu_params.value_at(i) != lambda_params.value_at(i)).unwrap_or(0))
}

/// Closed-form density of one generalized Bernoulli measure with respect to
/// another; locally constant past `constancy_depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOracle<T> {
    mu_params: ParamSequence<T>,
    lambda_params: ParamSequence<T>,
    constancy_depth: usize,
}

impl<T: Scalar> DensityOracle<T> {
    pub fn new(mu_params: ParamSequence<T>, lambda_params: ParamSequence<T>) -> Result<Self, DensityError> {
        let constancy_depth = constancy_depth(&mu_params, &lambda_params)?;
        Ok(Self { mu_params, lambda_params, constancy_depth })
    }

    pub fn from_measures(mu: &CylinderMeasure<T>, lambda: &CylinderMeasure<T>) -> Result<Self, DensityError> {
        if !mu.is_normalized() {
            return Err(DensityError::Unnormalized { which: "mu" });
        }
        if !lambda.is_normalized() {
            return Err(DensityError::Unnormalized { which: "lambda" });
        }
        let mu_params = mu.product_params().ok_or(DensityError::NotProduct { which: "mu" })?;
        let lambda_params = lambda.product_params().ok_or(DensityError::NotProduct { which: "lambda" })?;
        Self::new(mu_params, lambda_params)
    }

    pub fn constancy_depth(&self) -> usize {
        self.constancy_depth
    }

    pub fn mu_params(&self) -> &ParamSequence<T> {
        &self.mu_params
    }

    pub fn lambda_params(&self) -> &ParamSequence<T> {
        &self.lambda_params
    }

    pub fn mu(&self) -> CylinderMeasure<T> {
        CylinderMeasure::bernoulli(self.mu_params.clone())
    }

    pub fn lambda(&self) -> CylinderMeasure<T> {
        CylinderMeasure::bernoulli(self.lambda_params.clone())
    }

    /// `f(x) = ∏_{i ≤ M} q_i(x(i)) / p_i(x(i))`.
    pub fn exact_density(&self, x: &SequencePrefix) -> Result<T, DensityError> {
        let head = x.initial_segment(self.constancy_depth)?;
        Ok(head.iter().enumerate().fold(T::one(), |acc, (i, &b)| {
            acc * self.mu_params.coordinate_mass(i + 1, b) / self.lambda_params.coordinate_mass(i + 1, b)
        }))
    }
}

pub fn exact_density<T: Scalar>(oracle: &DensityOracle<T>, x: &SequencePrefix) -> Result<T, DensityError> {
    oracle.exact_density(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::{partition, FiniteWord};
    use num_rational::BigRational;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n.into(), d.into())
    }

    fn params<T: Scalar>(head: &[f64], tail: f64) -> ParamSequence<T> {
        ParamSequence::new(head.iter().map(|&p| T::lit(p)).collect(), T::lit(tail)).unwrap()
    }

    fn bern<T: Scalar>(head: &[f64], tail: f64) -> CylinderMeasure<T> {
        CylinderMeasure::bernoulli(params(head, tail))
    }

    fn ones(n: usize) -> SequencePrefix {
        SequencePrefix::constant(true, n).unwrap()
    }

    fn zeros(n: usize) -> SequencePrefix {
        SequencePrefix::constant(false, n).unwrap()
    }

    /// Telescoping product of coordinate ratios, computed independently of
    /// `measure_of` and of the oracle code.
    fn telescoping(mu: &[f64], lambda: &[f64], x: &[bool]) -> Q {
        x.iter()
            .enumerate()
            .map(|(i, &b)| {
                let (p, l) = (Q::lit(mu[i]), Q::lit(lambda[i]));
                if b {
                    p / l
                } else {
                    (Q::from_integer(1.into()) - p) / (Q::from_integer(1.into()) - l)
                }
            })
            .fold(Q::from_integer(1.into()), |a, r| a * r)
    }

    #[test]
    fn truncated_density_examples() {
        let lambda: CylinderMeasure<Q> = bern(&[], 0.75);
        let mu: CylinderMeasure<Q> = bern(&[0.5], 0.75);
        for m in [1, 3, 7] {
            assert_eq!(truncated_density(&lambda, &lambda, &ones(8), m).unwrap(), q(1, 1));
        }
        assert_eq!(truncated_density(&mu, &lambda, &ones(8), 4).unwrap(), q(2, 3));
        assert_eq!(truncated_density(&mu, &lambda, &zeros(8), 1).unwrap(), q(2, 1));
        assert_eq!(
            truncated_density(&mu, &lambda, &ones(8), 4).unwrap(),
            telescoping(&[0.5, 0.75, 0.75, 0.75], &[0.75; 4], &[true; 4])
        );
        assert!(matches!(
            truncated_density(&mu, &lambda, &ones(3), 4),
            Err(DensityError::Word(WordError::HorizonTooShort { horizon: 3, required: 4 }))
        ));
    }

    #[test]
    fn truncated_density_rejects_zero_lambda_mass() {
        let lambda: CylinderMeasure<f64> = bern(&[], 1e-200);
        let mu: CylinderMeasure<f64> = bern(&[], 0.5);
        assert_eq!(truncated_density(&mu, &lambda, &ones(4), 4), Err(DensityError::ZeroLambdaMass { depth: 4 }));
    }

    #[test]
    fn exact_density_examples() {
        let same = DensityOracle::<Q>::new(params(&[0.3], 0.6), params(&[0.3], 0.6)).unwrap();
        assert_eq!(same.constancy_depth(), 0);
        assert_eq!(same.exact_density(&ones(1)).unwrap(), q(1, 1));

        let a = DensityOracle::<Q>::new(params(&[0.5], 0.75), params(&[], 0.75)).unwrap();
        assert_eq!(a.constancy_depth(), 1);
        assert_eq!(a.exact_density(&ones(1)).unwrap(), q(2, 3));
        assert_eq!(a.exact_density(&zeros(1)).unwrap(), q(2, 1));

        let b = DensityOracle::<Q>::from_measures(&bern(&[0.75], 0.5), &CylinderMeasure::lebesgue()).unwrap();
        assert_eq!(b.exact_density(&ones(5)).unwrap(), q(3, 2));
        assert_eq!(b.exact_density(&zeros(5)).unwrap(), q(1, 2));
    }

    #[test]
    fn exact_density_needs_horizon() {
        let o = DensityOracle::<f64>::new(params(&[0.2, 0.4, 0.6], 0.5), params(&[], 0.5)).unwrap();
        assert_eq!(o.constancy_depth(), 3);
        assert!(matches!(o.exact_density(&ones(2)), Err(DensityError::Word(_))));
    }

    #[test]
    fn constancy_depth_examples() {
        let d = |a: ParamSequence<f64>, b: ParamSequence<f64>| constancy_depth(&a, &b);
        assert_eq!(d(params(&[0.2, 0.4], 0.6), params(&[0.2, 0.4], 0.6)), Ok(0));
        assert_eq!(d(params(&[0.5], 0.75), params(&[], 0.75)), Ok(1));
        // a head entry equal to the tail does not count as a difference
        assert_eq!(d(params(&[0.75, 0.3, 0.75], 0.75), params(&[], 0.75)), Ok(2));
        assert_eq!(d(params(&[0.5, 0.5, 0.5], 0.5), params(&[0.5, 0.1], 0.5)), Ok(2));
        assert_eq!(
            d(params(&[], 0.5), params(&[], 0.75)),
            Err(DensityError::NonStabilizing { mu_tail: 0.5, lambda_tail: 0.75 })
        );
    }

    #[test]
    fn singular_pairs_never_produce_a_number() {
        let err = DensityOracle::<f64>::from_measures(&CylinderMeasure::lebesgue(), &bern(&[], 0.75)).unwrap_err();
        assert!(matches!(err, DensityError::NonStabilizing { .. }));
        assert!(err.to_string().contains("does not stabilize"));
    }

    #[test]
    fn markov_pairs_are_estimate_only() {
        let chain = CylinderMeasure::<f64>::markov([0.5, 0.5], [[0.9, 0.1], [0.2, 0.8]]).unwrap();
        let leb = CylinderMeasure::lebesgue();
        assert_eq!(DensityOracle::from_measures(&chain, &leb), Err(DensityError::NotProduct { which: "mu" }));
        // truncated ratio is still available
        let x: SequencePrefix = "0111".parse().unwrap();
        let r = truncated_density(&chain, &leb, &x, 4).unwrap();
        assert!((r - 0.5 * 0.1 * 0.8 * 0.8 * 16.0).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let o = DensityOracle::<Q>::new(params(&[0.1, 0.7, 0.5, 0.3], 0.4), params(&[0.6, 0.2], 0.4)).unwrap();
        let depth = o.constancy_depth();
        assert_eq!(depth, 4);
        let lambda = o.lambda();
        let total = partition(depth).unwrap().cells().fold(Q::from_integer(0.into()), |acc, c| {
            let x = SequencePrefix::extending(&c, false, depth).unwrap();
            acc + o.exact_density(&x).unwrap() * lambda.measure_of(&c)
        });
        assert_eq!(total, q(1, 1));

        let of = DensityOracle::<f64>::new(params(&[0.1, 0.7, 0.5, 0.3], 0.4), params(&[0.6, 0.2], 0.4)).unwrap();
        let lf = of.lambda();
        let total: f64 = partition(4)
            .unwrap()
            .cells()
            .map(|c| of.exact_density(&SequencePrefix::extending(&c, true, 4).unwrap()).unwrap() * lf.measure_of(&c))
            .sum();
        assert!((total - 1.0).abs() <= 1e-10);
    }

    fn admissible_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
        (proptest::collection::vec(0.05f64..0.95, 0..5), proptest::collection::vec(0.05f64..0.95, 0..5), 0.05f64..0.95)
    }

    proptest! {
        #[test]
        fn truncated_agrees_with_oracle_past_constancy_depth(
            (mu_head, lambda_head, tail) in admissible_pair(),
            bits in proptest::collection::vec(any::<bool>(), 12),
            extra in 0usize..6,
        ) {
            let oracle = DensityOracle::<f64>::new(params(&mu_head, tail), params(&lambda_head, tail)).unwrap();
            let x = SequencePrefix::new(bits).unwrap();
            let exact = oracle.exact_density(&x).unwrap();
            prop_assert!(exact > 0.0);
            let m = oracle.constancy_depth() + extra;
            let truncated = truncated_density(&oracle.mu(), &oracle.lambda(), &x, m).unwrap();
            prop_assert!((truncated - exact).abs() <= 1e-12 * exact.max(1.0));
        }

        #[test]
        fn oracle_is_locally_constant(
            (mu_head, lambda_head, tail) in admissible_pair(),
            seed in any::<u64>(),
        ) {
            let oracle = DensityOracle::<Q>::new(params(&mu_head, tail), params(&lambda_head, tail)).unwrap();
            let depth = oracle.constancy_depth();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let word = FiniteWord::from_bits((0..depth).map(|_| rng.gen()).collect());
            let left = SequencePrefix::extending(&word.child(false), rng.gen(), depth + 4).unwrap();
            let right = SequencePrefix::extending(&word.child(true), rng.gen(), depth + 4).unwrap();
            prop_assert_eq!(oracle.exact_density(&left).unwrap(), oracle.exact_density(&right).unwrap());
            // exact rational agreement with the truncated ratio
            let truncated = truncated_density(&oracle.mu(), &oracle.lambda(), &left, depth + 4).unwrap();
            prop_assert_eq!(truncated, oracle.exact_density(&left).unwrap());
        }
    }
}
