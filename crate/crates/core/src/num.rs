//! Scalar abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point type usable by the fitting and interpolation kernels.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal, panicking only for unrepresentable values.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Trapezoidal integral of `(t, y)` samples. Samples must be time-ordered.
pub fn trapezoid<S: Scalar>(samples: &[(S, S)]) -> S {
    samples.windows(2).fold(S::zero(), |acc, w| {
        let (t0, y0) = w[0];
        let (t1, y1) = w[1];
        acc + (t1 - t0) * (y0 + y1) / S::lit(2.0)
    })
}

/// Median of a slice, `None` when empty or when any value is NaN.
pub fn median<S: Scalar>(values: &[S]) -> Option<S> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / S::lit(2.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_of_triangle() {
        let s = [(0.0, 0.0), (5.0, 50.0), (10.0, 100.0)];
        assert!((trapezoid(&s) - 500.0f64).abs() < 1e-12);
        assert_eq!(trapezoid::<f64>(&[]), 0.0);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0f32, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median::<f64>(&[]), None);
    }
}
