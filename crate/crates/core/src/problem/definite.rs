//! Definiteness tests for symmetric matrices.
//!
//! The production checks run one Cholesky factorization of a shifted matrix.
//! With `tau = 1e-9 * max(1, max|M_ij|)`:
//!
//! * positive definite    iff `M - tau*I` factors, i.e. `lambda_min > tau`
//! * positive semidefinite iff `M + tau*I` factors, i.e. `lambda_min > -tau`
//!
//! so a strict check never accepts a matrix whose smallest eigenvalue sits in
//! `(0, tau]`. Principal-minor enumeration is kept for small `n` as an
//! independent oracle.

use nalgebra::DMatrix;

use crate::error::ModelError;
use crate::linalg::{cholesky_shifted, determinant, max_abs};

pub const PD_RELATIVE_TOLERANCE: f64 = 1e-9;
pub const MAX_ALL_MINORS_DIM: usize = 12;

pub fn pd_tolerance(m: &DMatrix<f64>) -> f64 {
    PD_RELATIVE_TOLERANCE * max_abs(m).max(1.0)
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.nrows() == 0 || cholesky_shifted(m, -pd_tolerance(m)).is_some()
}

pub fn is_positive_semidefinite(m: &DMatrix<f64>) -> bool {
    m.nrows() == 0 || cholesky_shifted(m, pd_tolerance(m)).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinorMode {
    /// All `n` leading principal minors strictly positive.
    Leading,
    /// All `2^n` principal minors nonnegative.
    All,
}

pub fn principal_minors_check(m: &DMatrix<f64>, mode: MinorMode) -> Result<bool, ModelError> {
    let n = m.nrows();
    match mode {
        MinorMode::Leading => Ok((1..=n).all(|k| determinant(&m.view((0, 0), (k, k)).into_owned()) > 0.0)),
        MinorMode::All => {
            if n > MAX_ALL_MINORS_DIM {
                return Err(ModelError::TooLarge(n));
            }
            let scale = max_abs(m).max(1.0);
            for mask in 1u32..(1u32 << n) {
                let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                let k = idx.len();
                let sub = DMatrix::from_fn(k, k, |r, c| m[(idx[r], idx[c])]);
                // rounding slack for exactly singular minors
                let slack = 1e-12 * scale.powi(k as i32);
                if determinant(&sub) < -slack {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn remark_matrix() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0])
    }

    #[test]
    fn identity_and_zero() {
        for n in 1..6 {
            let i = DMatrix::<f64>::identity(n, n);
            assert!(is_positive_definite(&i));
            assert!(is_positive_semidefinite(&i));
            assert!(principal_minors_check(&i, MinorMode::Leading).unwrap());
            let z = DMatrix::<f64>::zeros(n, n);
            assert!(is_positive_semidefinite(&z));
            assert!(!is_positive_definite(&z));
        }
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(is_positive_semidefinite(&d));
        assert!(!is_positive_definite(&d));
    }

    #[test]
    fn leading_minors_are_not_enough_for_semidefiniteness() {
        let m = remark_matrix();
        let eig = m.clone().symmetric_eigenvalues();
        let mut e: Vec<f64> = eig.iter().copied().collect();
        e.sort_by(|a, b| b.total_cmp(a));
        assert!((e[0] - 2.732).abs() < 1e-3 && e[1].abs() < 1e-12 && (e[2] + 0.732).abs() < 1e-3);
        let leading: Vec<f64> = (1..=3)
            .map(|k| determinant(&m.view((0, 0), (k, k)).into_owned()))
            .collect();
        assert_eq!(leading, [1.0, 0.0, 0.0]);
        assert!(!is_positive_definite(&m));
        assert!(!is_positive_semidefinite(&m));
        assert!(!principal_minors_check(&m, MinorMode::Leading).unwrap());
        assert!(!principal_minors_check(&m, MinorMode::All).unwrap());
    }

    #[test]
    fn boundary_eigenvalue_is_rejected_by_strict_check() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 5e-10]);
        assert!(!is_positive_definite(&m));
        assert!(is_positive_semidefinite(&m));
    }

    #[test]
    fn gram_plus_ridge_is_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..=6);
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = b.transpose() * &b + DMatrix::identity(n, n) * 0.1;
            assert!(min_eigenvalue(&m) > 0.0);
            assert!(is_positive_definite(&m));
        }
    }

    #[test]
    fn random_4x4_modes_agree_with_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut checked = 0;
        while checked < 1000 {
            let b = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let shift = rng.random_range(-1.5..1.5);
            let m = (b.transpose() * &b) * 0.5 + DMatrix::identity(4, 4) * shift;
            let lmin = min_eigenvalue(&m);
            if lmin.abs() <= 1e-6 {
                continue;
            }
            checked += 1;
            assert_eq!(principal_minors_check(&m, MinorMode::Leading).unwrap(), lmin > 0.0);
            assert_eq!(principal_minors_check(&m, MinorMode::All).unwrap(), lmin >= 0.0);
        }
    }

    #[test]
    fn all_minor_mode_has_a_size_limit() {
        let m = DMatrix::<f64>::identity(13, 13);
        assert!(matches!(
            principal_minors_check(&m, MinorMode::All),
            Err(ModelError::TooLarge(13))
        ));
    }

    #[test]
    fn scale_invariance() {
        let m = remark_matrix() + DMatrix::identity(3, 3) * 0.8;
        for s in [1e-3, 1.0, 1e4] {
            assert_eq!(is_positive_definite(&(m.clone() * s)), is_positive_definite(&m));
        }
    }
}
