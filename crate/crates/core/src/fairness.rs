//! Jain's fairness index.

use crate::num::Scalar;

/// `(Σx)² / (N·Σx²)`; `None` for an empty slice or when every value is zero.
pub fn jain_index<S: Scalar>(values: &[S]) -> Option<S> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(S::zero(), |a, v| a + *v);
    let sq = values.iter().fold(S::zero(), |a, v| a + *v * *v);
    if sq == S::zero() {
        return None;
    }
    let n = S::from_usize(values.len())?;
    Some(sum * sum / (n * sq))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_shares_are_fair() {
        assert!((jain_index(&[3.0, 3.0, 3.0]).unwrap() - 1.0f64).abs() < 1e-15);
    }

    #[test]
    fn one_winner_of_four() {
        assert!((jain_index(&[8.0, 0.0, 0.0, 0.0]).unwrap() - 0.25f64).abs() < 1e-15);
    }

    #[test]
    fn empty_and_zero() {
        assert_eq!(jain_index::<f64>(&[]), None);
        assert_eq!(jain_index(&[0.0f32, 0.0]), None);
    }
}
