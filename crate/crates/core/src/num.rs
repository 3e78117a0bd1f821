//! Numeric abstraction for scores.
//!
//! Scores are computed over any [`Scalar`]: `f64`/`f32` for display and
//! [`Rational64`](num_rational::Rational64) where results must be exact.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

pub trait Scalar: Num + FromPrimitive + ToPrimitive + Clone + PartialOrd + Debug + Send + Sync + 'static {
    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("small integers are representable")
    }

    fn ratio(numer: i64, denom: i64) -> Self {
        Self::from_int(numer) / Self::from_int(denom)
    }

    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Num + FromPrimitive + ToPrimitive + Clone + PartialOrd + Debug + Send + Sync + 'static {}
