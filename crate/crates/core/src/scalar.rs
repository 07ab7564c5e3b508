//! Numeric abstraction shared by the measure, density and estimator code.
//!
//! Everything that only needs field arithmetic and ordering is written
//! against [`Scalar`], so the same code runs in `f32`, `f64` and exact
//! rational arithmetic ([`num_rational::BigRational`]). Monte Carlo pieces
//! that need square roots stay in `f64`.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Field-like scalar used for cylinder masses and density values.
pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Converts a finite `f64` literal. For rationals the conversion is exact
    /// (the binary value of the double), so `0.75` becomes exactly `3/4`.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite literal representable in scalar type")
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `2^-exp`.
    fn half_pow(exp: usize) -> Self {
        let two = Self::one() + Self::one();
        Self::one() / num_traits::pow(two, exp)
    }
}

impl<T> Scalar for T where
    T: Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

/// `|a - b| <= tol`.
pub fn within<T: Scalar>(a: &T, b: &T, tol: &T) -> bool {
    (a.clone() - b.clone()).abs() <= *tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn rational_literals_are_exact() {
        let q = BigRational::lit(0.75);
        assert_eq!(q, BigRational::new(3.into(), 4.into()));
        assert_eq!(BigRational::half_pow(3), BigRational::new(1.into(), 8.into()));
    }

    #[test]
    fn float_half_pow() {
        assert_eq!(f64::half_pow(0), 1.0);
        assert_eq!(f64::half_pow(4), 0.0625);
        assert_eq!(f32::half_pow(2), 0.25);
    }
}
