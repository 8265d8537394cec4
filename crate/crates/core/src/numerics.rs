//! Small dense/tridiagonal solvers and quadrature weights.

use crate::scalar::Real;

/// Trapezoidal weights for the (not necessarily uniform) abscissae `xs`.
pub fn trapezoid_weights<R: Real>(xs: &[R]) -> Vec<R> {
    let n = xs.len();
    let mut w = vec![R::zero(); n];
    if n < 2 {
        return w;
    }
    let half = R::lit(0.5);
    for i in 0..n - 1 {
        let h = xs[i + 1] - xs[i];
        w[i] = w[i] + half * h;
        w[i + 1] = w[i + 1] + half * h;
    }
    w
}

/// Uniform-grid trapezoidal weights on `n + 1` nodes with spacing `h`.
pub fn uniform_trapezoid<R: Real>(n: usize, h: R) -> Vec<R> {
    let mut w = vec![h; n + 1];
    w[0] = h * R::lit(0.5);
    w[n] = h * R::lit(0.5);
    w
}

/// Solves `a x = b` for a symmetric positive definite `a` (row-major, `n x n`)
/// by Cholesky factorisation. Returns `None` if a pivot is not positive.
pub fn cholesky_solve<R: Real>(a: &[R], b: &[R]) -> Option<Vec<R>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![R::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > R::zero()) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![R::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![R::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s - l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Thomas algorithm for a tridiagonal system. `lower[0]` and `upper[n-1]`
/// are ignored. Returns `None` on a zero pivot.
pub fn solve_tridiagonal<R: Real>(lower: &[R], diag: &[R], upper: &[R], rhs: &[R]) -> Option<Vec<R>> {
    let n = diag.len();
    let mut c = vec![R::zero(); n];
    let mut d = vec![R::zero(); n];
    let mut beta = diag[0];
    if beta == R::zero() {
        return None;
    }
    c[0] = if n > 1 { upper[0] / beta } else { R::zero() };
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == R::zero() || !beta.is_finite() {
            return None;
        }
        if i < n - 1 {
            c[i] = upper[i] / beta;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    let mut x = vec![R::zero(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_matches_known_solution() {
        // [[4,2],[2,3]] x = [2, 1] -> x = [0.5, 0]
        let a = [4.0f64, 2.0, 2.0, 3.0];
        let x: Vec<f64> = cholesky_solve(&a, &[2.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1].abs() < 1e-15);
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn tridiagonal_solves_laplacian() {
        let n = 5;
        let lower = vec![-1.0; n];
        let upper = vec![-1.0; n];
        let diag = vec![2.0; n];
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = 2.0 * x_true[i];
            if i > 0 {
                rhs[i] -= x_true[i - 1];
            }
            if i + 1 < n {
                rhs[i] -= x_true[i + 1];
            }
        }
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let xs = [0.0, 0.1, 0.35, 1.0];
        let w = trapezoid_weights(&xs);
        let s: f64 = xs.iter().zip(&w).map(|(x, w)| x * w).sum();
        assert!((s - 0.5).abs() < 1e-15);
        let u = uniform_trapezoid(4, 0.25);
        assert_eq!(u, vec![0.125, 0.25, 0.25, 0.25, 0.125]);
    }
}
