//! Dense linear-algebra helpers shared by the kernel and posterior code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative jitter added before the first factorization attempt.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-6;

/// Cholesky factorization of a symmetric positive (semi)definite matrix.
///
/// Tries the matrix as given first, then adds `s * trace(A)/n * I` with
/// `s = 1e-10, 1e-9, ..., 1e-6`.
pub fn cholesky_jittered(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("matrix has non-finite entries".into()));
    }
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(chol);
    }
    let n = a.nrows();
    let scale = (a.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += rel * scale;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok(chol);
        }
        rel *= 10.0;
    }
    Err(Error::Factorization(format!(
        "{n}x{n} matrix not positive definite after jitter {JITTER_MAX:e}"
    )))
}

/// `ln det A` from a Cholesky factor.
pub fn cholesky_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse of a symmetric positive definite matrix via Cholesky, symmetrized.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = cholesky_jittered(a)?.inverse();
    Ok(symmetrize(inv))
}

pub fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    a
}

/// `x^T A x`.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Spectral norm of a matrix (largest singular value).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().iter().fold(0.0, |m, v| m.max(*v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_semidefinite() {
        // Rank-one PSD matrix.
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        assert!(Cholesky::new(a.clone()).is_none());
        assert!(cholesky_jittered(&a).is_ok());
    }

    #[test]
    fn indefinite_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky_jittered(&a), Err(Error::Factorization(_))));
    }

    #[test]
    fn log_det_matches_product_of_eigenvalues() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let chol = cholesky_jittered(&a).unwrap();
        let expected: f64 = sym_eigenvalues(&a).iter().map(|v| v.ln()).sum();
        assert!((cholesky_log_det(&chol) - expected).abs() < 1e-12);
    }
}
