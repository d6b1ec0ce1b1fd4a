//! Dense least squares and banded solves.

use crate::num::Scalar;

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `sub[i]` multiplies `x[i-1]` in row `i` (the first entry is ignored),
/// `sup[i]` multiplies `x[i+1]` (the last entry is ignored).
pub fn solve_tridiagonal<S: Scalar>(sub: &[S], diag: &[S], sup: &[S], rhs: &[S]) -> Vec<S> {
    let n = diag.len();
    assert!(sub.len() == n && sup.len() == n && rhs.len() == n, "band lengths differ");
    if n == 0 {
        return Vec::new();
    }
    let mut c = vec![S::zero(); n];
    let mut d = vec![S::zero(); n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] = x[i] - c[i] * next;
    }
    x
}

/// Returned when the design matrix does not have full column rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDeficient;

/// Least-squares solution of `rows · x ≈ y` by Householder QR.
///
/// Columns are scaled to unit norm before factoring so that the rank test is
/// insensitive to feature units.
pub fn least_squares<S: Scalar>(rows: &[Vec<S>], y: &[S]) -> Result<Vec<S>, RankDeficient> {
    let m = rows.len();
    if m == 0 || y.len() != m {
        return Err(RankDeficient);
    }
    let n = rows[0].len();
    if n == 0 || m < n || rows.iter().any(|r| r.len() != n) {
        return Err(RankDeficient);
    }

    // Column-major copy with unit-norm scaling.
    let mut a: Vec<Vec<S>> = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut scale = vec![S::one(); n];
    for (j, col) in a.iter_mut().enumerate() {
        let norm = col.iter().fold(S::zero(), |s, v| s + *v * *v).sqrt();
        if norm == S::zero() || !norm.is_finite() {
            return Err(RankDeficient);
        }
        scale[j] = norm;
        for v in col.iter_mut() {
            *v = *v / norm;
        }
    }
    let mut b = y.to_vec();
    let tol = S::epsilon().sqrt();

    let mut rdiag = vec![S::zero(); n];
    for k in 0..n {
        let norm = a[k][k..].iter().fold(S::zero(), |s, v| s + *v * *v).sqrt();
        if norm <= tol {
            return Err(RankDeficient);
        }
        let alpha = if a[k][k] > S::zero() { -norm } else { norm };
        // v = x - alpha e1, stored in place of column k.
        a[k][k] = a[k][k] - alpha;
        let vnorm2 = a[k][k..].iter().fold(S::zero(), |s, v| s + *v * *v);
        rdiag[k] = alpha;
        if vnorm2 == S::zero() {
            continue;
        }
        let (head, tail) = a.split_at_mut(k + 1);
        let v = &head[k][k..];
        for col in tail.iter_mut() {
            let dot = v.iter().zip(&col[k..]).fold(S::zero(), |s, (p, q)| s + *p * *q);
            let f = S::lit(2.0) * dot / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(v) {
                *c = *c - f * *vi;
            }
        }
        let dot = v.iter().zip(&b[k..]).fold(S::zero(), |s, (p, q)| s + *p * *q);
        let f = S::lit(2.0) * dot / vnorm2;
        for (c, vi) in b[k..].iter_mut().zip(v) {
            *c = *c - f * *vi;
        }
    }

    // Back substitution on R (diagonal in rdiag, upper part in a[j][i], i < j).
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s = s - a[j][i] * x[j];
        }
        x[i] = s / rdiag[i];
    }
    for (xi, s) in x.iter_mut().zip(&scale) {
        *xi = *xi / *s;
    }
    Ok(x)
}
