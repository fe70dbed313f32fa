//! Scalar abstraction: the numeric kernels are generic over the element
//! type so the same code runs in f32 (training, checkpoints) and f64
//! (gradient checking, discretization oracles).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Floating-point element type for tensors and kernels.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumCast
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Lossless widening to f64 for accumulators, schedules and reports.
    fn as_f64(self) -> f64;
    /// Narrowing conversion from f64.
    fn of_f64(v: f64) -> Self;
}

impl Scalar for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn of_f64(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn as_f64(self) -> f64 {
        self
    }
    fn of_f64(v: f64) -> Self {
        v
    }
}

/// Numerically stable softplus, ln(1 + e^x).
pub fn softplus<T: Scalar>(x: T) -> T {
    let zero = T::zero();
    if x > T::of_f64(30.0) {
        x
    } else if x < T::of_f64(-30.0) {
        x.exp()
    } else {
        x.max(zero) + (-x.abs()).exp().ln_1p()
    }
}

/// Logistic sigmoid.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// SiLU (x * sigmoid(x)).
pub fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_reference() {
        for &x in &[-50.0f64, -5.0, -1e-9, 0.0, 1e-9, 3.0, 50.0] {
            let want = if x > 30.0 { x } else { (1.0 + x.exp()).ln() };
            assert!((softplus(x) - want).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert!(sigmoid(-200.0f32) >= 0.0);
        assert!((sigmoid(200.0f32) - 1.0).abs() < 1e-6);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }
}
