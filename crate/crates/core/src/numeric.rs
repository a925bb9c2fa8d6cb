//! Small numerical kernels: dense complex LU solve, trapezoid quadrature and
//! an oscillatory Fourier-type integral on sampled data.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Solve `A x = b` by LU with partial pivoting. `a` and `b` are consumed.
/// Intended for the small dense systems (N <= 64) this crate produces.
pub fn lu_solve(mut a: Array2<C64>, mut b: Vec<C64>) -> Result<Vec<C64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        // pivot
        let mut piv = col;
        let mut best = a[(col, col)].norm_sqr();
        for row in col + 1..n {
            let m = a[(row, col)].norm_sqr();
            if m > best {
                best = m;
                piv = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Numerical(format!(
                "singular or non-finite matrix in LU solve at column {col}"
            )));
        }
        if piv != col {
            for k in 0..n {
                a.swap((col, k), (piv, k));
            }
            b.swap(col, piv);
        }
        let inv = 1.0 / a[(col, col)];
        for row in col + 1..n {
            let f = a[(row, col)] * inv;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for k in col + 1..n {
                let sub = f * a[(col, k)];
                a[(row, k)] -= sub;
            }
            let sub = f * b[col];
            b[row] -= sub;
        }
    }
    // back substitution
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[(col, k)] * b[k];
        }
        b[col] = acc / a[(col, col)];
    }
    Ok(b)
}

/// Trapezoid rule on a sorted, possibly non-uniform grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// `integral f(x) e^{i w x} dx` over a sampled grid, treating `f` as piecewise
/// linear on each interval. Exact per interval for any `w`, so it stays
/// accurate where the plain trapezoid rule aliases (|w| * spacing >~ 1).
pub fn oscillatory_integral(x: &[f64], f: &[C64], w: f64) -> C64 {
    assert_eq!(x.len(), f.len());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..x.len().saturating_sub(1) {
        let h = x[i + 1] - x[i];
        if h <= 0.0 {
            continue;
        }
        let (i0, i1) = segment_moments(w, h);
        let slope = (f[i + 1] - f[i]) / h;
        let phase = C64::from_polar(1.0, w * x[i]);
        acc += phase * (f[i] * i0 + slope * i1);
    }
    acc
}

/// Moments `I0 = integral_0^h e^{iwt} dt` and `I1 = integral_0^h t e^{iwt} dt`.
fn segment_moments(w: f64, h: f64) -> (C64, C64) {
    let wh = w * h;
    if wh.abs() < 1e-4 {
        // series in (iwh) to avoid cancellation
        let z = C64::new(0.0, wh);
        let one = C64::new(1.0, 0.0);
        // I0/h   = 1 + z/2 + z^2/6 + z^3/24 + z^4/120
        // I1/h^2 = 1/2 + z/3 + z^2/8 + z^3/30 + z^4/144
        let i0 = one + z * 0.5 + z * z / 6.0 + z * z * z / 24.0 + z * z * z * z / 120.0;
        let i1 = one * 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0 + z * z * z * z / 144.0;
        (i0 * h, i1 * h * h)
    } else {
        let iw = C64::new(0.0, w);
        let e = C64::from_polar(1.0, wh);
        let i0 = (e - 1.0) / iw;
        let i1 = (e * h) / iw - i0 / iw;
        (i0, i1)
    }
}
