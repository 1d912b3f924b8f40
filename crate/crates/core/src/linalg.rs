//! Small dense helpers on `nalgebra::DMatrix` shared by the definiteness
//! checks and the barrier solver.

use nalgebra::{DMatrix, DVector};

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// `m += w * a` without allocating.
pub fn add_scaled(m: &mut DMatrix<f64>, w: f64, a: &DMatrix<f64>) {
    m.zip_apply(a, |x, y| *x += w * y);
}

/// Lower Cholesky factor of `a + shift*I`, or `None` when a pivot is not
/// strictly positive. Only the lower triangle of `a` is read.
pub fn cholesky_shifted(a: &DMatrix<f64>, shift: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + shift;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

pub fn cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    cholesky_shifted(a, 0.0)
}

/// Solves `L X = B` in place for lower-triangular `L`.
pub fn forward_solve(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
}

/// Solves `L^T X = B` in place for lower-triangular `L`.
pub fn backward_solve_t(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = b[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
}

/// `L^{-1} A L^{-T}` for symmetric `A`.
pub fn congruence_inv(l: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = a.clone();
    forward_solve(l, &mut y);
    let mut z = y.transpose();
    forward_solve(l, &mut z);
    // symmetric up to rounding; average to keep it exact
    let zt = z.transpose();
    (z + zt) * 0.5
}

/// `A^{-1}` from its lower Cholesky factor.
pub fn inverse_from_cholesky(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut x = DMatrix::<f64>::identity(n, n);
    forward_solve(l, &mut x);
    backward_solve_t(l, &mut x);
    x
}

/// Solves the symmetric positive definite system `H x = g`, adding a small
/// diagonal regularization when `H` is numerically singular.
pub fn spd_solve(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        if let Some(l) = cholesky_shifted(h, shift) {
            let mut b = DMatrix::from_column_slice(g.len(), 1, g.as_slice());
            forward_solve(&l, &mut b);
            backward_solve_t(&l, &mut b);
            let x = DVector::from_column_slice(b.as_slice());
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
    }
    None
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut m = a.clone();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs()))
            .unwrap_or(c);
        if m[(p, c)] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap_rows(p, c);
            det = -det;
        }
        let piv = m[(c, c)];
        det *= piv;
        for r in (c + 1)..n {
            let f = m[(r, c)] / piv;
            if f != 0.0 {
                for k in c..n {
                    let v = m[(c, k)];
                    m[(r, k)] -= f * v;
                }
            }
        }
    }
    det
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
