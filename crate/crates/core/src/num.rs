use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::Serialize;

/// Scalar used by the analytics outputs. Implemented for `f32` and `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Serialize + Send + Sync + 'static
{
    fn of_count(n: usize) -> Self {
        Self::from_usize(n).expect("counts fit every float")
    }

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64")
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Mean and standard error of the mean over a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub mean: T,
    pub std_err: T,
    pub n: usize,
}

impl<T: Real> Estimate<T> {
    pub fn empty() -> Self {
        Self { mean: T::nan(), std_err: T::nan(), n: 0 }
    }

    /// Sample standard deviation with Bessel's correction; a single
    /// observation has zero standard error.
    pub fn from_samples(xs: &[T]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::empty();
        }
        let nn = T::of_count(n);
        let mean = xs.iter().copied().sum::<T>() / nn;
        if n == 1 {
            return Self { mean, std_err: T::zero(), n };
        }
        let ss: T = xs.iter().map(|x| (*x - mean) * (*x - mean)).sum();
        let var = ss / T::of_count(n - 1);
        Self { mean, std_err: (var / nn).sqrt(), n }
    }
}
