//! Natural cubic splines in one dimension and their tensor product in two.

use thiserror::Error;

use crate::linalg::solve_tridiagonal;
use crate::num::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplineError {
    #[error("need at least {need} knots, got {got}")]
    TooFewKnots { need: usize, got: usize },
    #[error("knots must be strictly increasing")]
    UnsortedKnots,
    #[error("value grid has {got} entries, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite knot or value")]
    NonFinite,
}

/// Second derivatives of the natural cubic spline through `(knots, values)`.
pub fn natural_second_derivatives<S: Scalar>(knots: &[S], values: &[S]) -> Vec<S> {
    let n = knots.len();
    let mut m = vec![S::zero(); n];
    if n < 3 {
        return m;
    }
    let inner = n - 2;
    let six = S::lit(6.0);
    let two = S::lit(2.0);
    let mut sub = vec![S::zero(); inner];
    let mut diag = vec![S::zero(); inner];
    let mut sup = vec![S::zero(); inner];
    let mut rhs = vec![S::zero(); inner];
    for r in 0..inner {
        let i = r + 1;
        let h0 = knots[i] - knots[i - 1];
        let h1 = knots[i + 1] - knots[i];
        sub[r] = h0;
        diag[r] = two * (h0 + h1);
        sup[r] = h1;
        rhs[r] = six * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
    }
    let inner_m = solve_tridiagonal(&sub, &diag, &sup, &rhs);
    m[1..n - 1].copy_from_slice(&inner_m);
    m
}

fn validate_knots<S: Scalar>(knots: &[S]) -> Result<(), SplineError> {
    if knots.len() < 2 {
        return Err(SplineError::TooFewKnots { need: 2, got: knots.len() });
    }
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(SplineError::NonFinite);
    }
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SplineError::UnsortedKnots);
    }
    Ok(())
}

/// Index of the segment `[k[i], k[i+1]]` that contains `x` (clamped).
fn segment_of<S: Scalar>(knots: &[S], x: S) -> usize {
    let last = knots.len() - 2;
    match knots.iter().position(|k| *k > x) {
        None => last,
        Some(0) => 0,
        Some(i) => (i - 1).min(last),
    }
}

/// Cubic basis `A, B, C, D` and its first two derivatives on one segment.
#[derive(Debug, Clone, Copy)]
struct Basis<S> {
    w: [S; 4],
    d1: [S; 4],
    d2: [S; 4],
}

fn basis<S: Scalar>(x0: S, x1: S, x: S) -> Basis<S> {
    let h = x1 - x0;
    let a = (x1 - x) / h;
    let b = S::one() - a;
    let six = S::lit(6.0);
    let three = S::lit(3.0);
    let h2 = h * h;
    Basis {
        w: [a, b, (a * a * a - a) * h2 / six, (b * b * b - b) * h2 / six],
        d1: [
            -S::one() / h,
            S::one() / h,
            -(three * a * a - S::one()) * h / six,
            (three * b * b - S::one()) * h / six,
        ],
        d2: [S::zero(), S::zero(), a, b],
    }
}

/// One-dimensional natural cubic spline.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline<S> {
    knots: Vec<S>,
    values: Vec<S>,
    second: Vec<S>,
}

impl<S: Scalar> NaturalSpline<S> {
    pub fn new(knots: Vec<S>, values: Vec<S>) -> Result<Self, SplineError> {
        validate_knots(&knots)?;
        if values.len() != knots.len() {
            return Err(SplineError::ShapeMismatch { expected: knots.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SplineError::NonFinite);
        }
        let second = natural_second_derivatives(&knots, &values);
        Ok(Self { knots, values, second })
    }

    pub fn knots(&self) -> &[S] {
        &self.knots
    }

    pub fn second_derivatives(&self) -> &[S] {
        &self.second
    }

    /// Value at `x`, clamped to the knot hull.
    pub fn eval(&self, x: S) -> S {
        let lo = self.knots[0];
        let hi = self.knots[self.knots.len() - 1];
        let x = x.max(lo).min(hi);
        let seg = segment_of(&self.knots, x);
        self.on_segment(seg, x)[0]
    }

    /// Value, first and second derivative of segment `seg`'s cubic at `x`,
    /// without clamping. Used to check continuity from either side of a knot.
    pub fn on_segment(&self, seg: usize, x: S) -> [S; 3] {
        let b = basis(self.knots[seg], self.knots[seg + 1], x);
        let c = [self.values[seg], self.values[seg + 1], self.second[seg], self.second[seg + 1]];
        let dot = |w: &[S; 4]| (0..4).fold(S::zero(), |s, i| s + w[i] * c[i]);
        [dot(&b.w), dot(&b.d1), dot(&b.d2)]
    }
}

/// Tensor-product natural cubic spline over a rectangular grid.
///
/// Coefficient arrays are stored row-major with `x` as the outer index:
/// `v` holds knot values, `my` second derivatives along `y`, `mx` along `x`,
/// and `mxy` the mixed fourth-order term.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpline<S> {
    xs: Vec<S>,
    ys: Vec<S>,
    v: Vec<S>,
    mx: Vec<S>,
    my: Vec<S>,
    mxy: Vec<S>,
}

/// Partial derivatives of a tensor spline at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials<S> {
    pub value: S,
    pub dx: S,
    pub dy: S,
    pub dxx: S,
    pub dyy: S,
    pub dxy: S,
}

impl<S: Scalar> TensorSpline<S> {
    /// `values[i * ys.len() + j]` is the value at `(xs[i], ys[j])`.
    pub fn new(xs: Vec<S>, ys: Vec<S>, values: Vec<S>) -> Result<Self, SplineError> {
        validate_knots(&xs)?;
        validate_knots(&ys)?;
        let (nx, ny) = (xs.len(), ys.len());
        if values.len() != nx * ny {
            return Err(SplineError::ShapeMismatch { expected: nx * ny, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SplineError::NonFinite);
        }
        let along_y = |grid: &[S]| -> Vec<S> {
            let mut out = vec![S::zero(); nx * ny];
            for i in 0..nx {
                let row = &grid[i * ny..(i + 1) * ny];
                out[i * ny..(i + 1) * ny].copy_from_slice(&natural_second_derivatives(&ys, row));
            }
            out
        };
        let along_x = |grid: &[S]| -> Vec<S> {
            let mut out = vec![S::zero(); nx * ny];
            for j in 0..ny {
                let col: Vec<S> = (0..nx).map(|i| grid[i * ny + j]).collect();
                for (i, m) in natural_second_derivatives(&xs, &col).into_iter().enumerate() {
                    out[i * ny + j] = m;
                }
            }
            out
        };
        let my = along_y(&values);
        let mx = along_x(&values);
        let mxy = along_x(&my);
        Ok(Self { xs, ys, v: values, mx, my, mxy })
    }

    pub fn xs(&self) -> &[S] {
        &self.xs
    }

    pub fn ys(&self) -> &[S] {
        &self.ys
    }

    /// Knot value at grid position `(i, j)`.
    pub fn knot_value(&self, i: usize, j: usize) -> S {
        self.v[i * self.ys.len() + j]
    }

    /// Value at `(x, y)` clamped to the knot hull.
    pub fn eval(&self, x: S, y: S) -> S {
        let x = x.max(self.xs[0]).min(self.xs[self.xs.len() - 1]);
        let y = y.max(self.ys[0]).min(self.ys[self.ys.len() - 1]);
        let i = segment_of(&self.xs, x);
        let j = segment_of(&self.ys, y);
        self.on_cell(i, j, x, y).value
    }

    /// Value and partial derivatives of cell `(i, j)`'s bicubic at `(x, y)`.
    pub fn on_cell(&self, i: usize, j: usize, x: S, y: S) -> Partials<S> {
        let bx = basis(self.xs[i], self.xs[i + 1], x);
        let by = basis(self.ys[j], self.ys[j + 1], y);
        let ny = self.ys.len();
        // Basis slot -> (knot offset, uses second-derivative array).
        const SLOT: [(usize, bool); 4] = [(0, false), (1, false), (0, true), (1, true)];
        let mut coef = [[S::zero(); 4]; 4];
        for (a, &(di, mxs)) in SLOT.iter().enumerate() {
            for (b, &(dj, mys)) in SLOT.iter().enumerate() {
                let idx = (i + di) * ny + (j + dj);
                coef[a][b] = match (mxs, mys) {
                    (false, false) => self.v[idx],
                    (false, true) => self.my[idx],
                    (true, false) => self.mx[idx],
                    (true, true) => self.mxy[idx],
                };
            }
        }
        let form = |wx: &[S; 4], wy: &[S; 4]| {
            let mut s = S::zero();
            for a in 0..4 {
                for b in 0..4 {
                    s = s + wx[a] * wy[b] * coef[a][b];
                }
            }
            s
        };
        Partials {
            value: form(&bx.w, &by.w),
            dx: form(&bx.d1, &by.w),
            dy: form(&bx.w, &by.d1),
            dxx: form(&bx.d2, &by.w),
            dyy: form(&bx.w, &by.d2),
            dxy: form(&bx.d1, &by.d1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense Gaussian elimination over the full natural-spline system, written
    /// independently of the banded solver.
    fn dense_oracle(x: &[f64], y: &[f64], at: f64) -> f64 {
        let n = x.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        a[0][0] = 1.0;
        a[n - 1][n - 1] = 1.0;
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            a[i][i - 1] = h0 / 6.0;
            a[i][i] = (h0 + h1) / 3.0;
            a[i][i + 1] = h1 / 6.0;
            a[i][n] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        }
        for c in 0..n {
            let p = (c..n).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs())).unwrap();
            a.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        let m: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
        let s = (0..n - 1).find(|&i| at <= x[i + 1]).unwrap();
        let h = x[s + 1] - x[s];
        let t0 = x[s + 1] - at;
        let t1 = at - x[s];
        m[s] * t0.powi(3) / (6.0 * h)
            + m[s + 1] * t1.powi(3) / (6.0 * h)
            + (y[s] / h - m[s] * h / 6.0) * t0
            + (y[s + 1] / h - m[s + 1] * h / 6.0) * t1
    }

    #[test]
    fn one_dimensional_matches_dense_oracle() {
        let xs = [1.0, 2.0, 4.0];
        let ys = [10.0, 16.0, 20.0];
        let s = NaturalSpline::new(xs.to_vec(), ys.to_vec()).unwrap();
        let expected = dense_oracle(&xs, &ys, 3.0);
        assert!((s.eval(3.0) - expected).abs() < 1e-9);
        // Frozen from the oracle: M1 = -4, so the value at 3 is 19.
        assert!((s.eval(3.0) - 19.0f64).abs() < 1e-12);
    }

    #[test]
    fn clamps_outside_hull() {
        let s = NaturalSpline::new(vec![1.0, 2.0, 4.0], vec![10.0, 16.0, 20.0]).unwrap();
        assert_eq!(s.eval(0.0), 10.0);
        assert_eq!(s.eval(9.0), 20.0);
    }

    #[test]
    fn two_knots_is_linear() {
        let s = NaturalSpline::new(vec![0.0, 2.0], vec![1.0, 5.0]).unwrap();
        assert!((s.eval(0.5) - 2.0f64).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_knots() {
        assert_eq!(
            NaturalSpline::new(vec![1.0, 1.0], vec![0.0, 0.0]),
            Err(SplineError::UnsortedKnots)
        );
        assert!(matches!(
            TensorSpline::new(vec![1.0, 2.0], vec![1.0, 2.0], vec![0.0; 3]),
            Err(SplineError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn tensor_reproduces_affine() {
        let xs = vec![1.0, 2.0, 4.0, 8.0];
        let ys = vec![1.0, 3.0, 4.0, 8.0];
        let f = |x: f64, y: f64| 10.0 * x + 5.0 * y;
        let vals: Vec<f64> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| f(x, y))).collect();
        let s = TensorSpline::new(xs, ys, vals).unwrap();
        for k in 0..=70 {
            let x = 1.0 + 7.0 * k as f64 / 70.0;
            let y = 8.0 - 7.0 * k as f64 / 70.0;
            assert!((s.eval(x, y) - f(x, y)).abs() < 1e-9);
        }
    }

    #[test]
    fn tensor_slice_equals_one_dimensional() {
        let xs = vec![1.0, 2.0, 4.0];
        let ys = vec![1.0, 2.0];
        let vals = vec![10.0, 10.0, 16.0, 16.0, 20.0, 20.0];
        let s = TensorSpline::new(xs, ys, vals).unwrap();
        assert!((s.eval(3.0, 1.5) - 19.0f64).abs() < 1e-12);
    }

    #[test]
    fn single_precision_tensor() {
        let s = TensorSpline::<f32>::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0], vec![0.0, 1.0, 1.0, 2.0, 2.0, 3.0])
            .unwrap();
        assert!((s.eval(0.5, 0.5) - 1.0).abs() < 1e-6);
    }
}
