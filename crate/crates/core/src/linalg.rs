//! Least-squares plumbing shared by the regression modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative rank tolerance for design matrices, applied against the largest
/// column norm.
pub const RANK_TOL: f64 = 1e-10;

/// Checks `x` for (near) rank deficiency by modified Gram-Schmidt and, on
/// failure, names the first column that is numerically dependent on the
/// columns before it.
pub fn check_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let (n, k) = x.shape();
    if n < k {
        return Err(Error::validation(format!(
            "design matrix has more columns ({k}) than rows ({n})"
        )));
    }
    let max_norm = (0..k)
        .map(|j| x.column(j).norm())
        .fold(0.0_f64, f64::max);
    if max_norm == 0.0 {
        return Err(Error::validation("design matrix is identically zero"));
    }
    let tol = RANK_TOL * max_norm;
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: DVector<f64> = x.column(j).into();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        // second orthogonalization pass for numerical stability
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if norm <= tol {
            return Err(Error::validation(format!(
                "design matrix is rank deficient: column {j} is linearly dependent \
                 on the preceding columns"
            )));
        }
        basis.push(v / norm);
    }
    Ok(())
}

/// Least-squares solve of `x * beta = y` through a Householder QR
/// factorization. The caller is expected to have verified full column rank.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::numerical("least_squares", "singular triangular factor"))
}

/// Inverse of the Gram matrix X'X, needed for coefficient covariance and
/// projection traces. k is small, so a direct inverse is fine.
pub fn gram_inverse(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xtx = x.transpose() * x;
    xtx.try_inverse()
        .ok_or_else(|| Error::numerical("gram_inverse", "X'X is singular"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn least_squares_exact_line() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let beta = least_squares(&x, &y).unwrap();
        assert_relative_eq!(beta[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(beta[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_check_names_dependent_column() {
        // third column = 2 * second column
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[
                1.0, 1.0, 2.0, //
                1.0, 2.0, 4.0, //
                1.0, 3.0, 6.0, //
                1.0, 4.0, 8.0,
            ],
        );
        let err = check_full_rank(&x).unwrap_err();
        assert!(err.to_string().contains("column 2"), "got: {err}");
    }

    #[test]
    fn rank_check_accepts_independent_columns() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 5.0]);
        assert!(check_full_rank(&x).is_ok());
    }
}
