//! Small dense helpers shared by the filters.

use nalgebra::{DMatrix, DVector};

/// Arithmetic mean of the columns of `m`, accumulated as offsets from the
/// first column so that identical columns yield that column exactly.
pub fn column_mean(m: &DMatrix<f64>) -> DVector<f64> {
    let first = m.column(0).into_owned();
    let mut offset = DVector::zeros(m.nrows());
    for col in m.column_iter().skip(1) {
        offset += col - &first;
    }
    first + offset / m.ncols() as f64
}

/// `m` with `mean` subtracted from every column.
pub fn anomalies(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        col -= mean;
    }
    out
}

/// `(1/(N-1)) A Bᵀ` for anomaly matrices with `N` columns.
pub fn sample_cross_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    (a * b.transpose()) / (n as f64 - 1.0)
}

/// Solves `G D = num` for symmetric positive-definite `D`, i.e. `G = num D⁻¹`.
pub fn spd_right_solve(num: &DMatrix<f64>, d: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = d.clone().cholesky()?;
    let gt = chol.solve(&num.transpose());
    gt.iter().all(|v| v.is_finite()).then(|| gt.transpose())
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Symmetric part `(S + Sᵀ)/2`, removing round-off asymmetry before a Cholesky.
pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn right_solve_recovers_product() {
        let d = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let num = &g * &d;
        let back = spd_right_solve(&num, &d).unwrap();
        assert_relative_eq!(back, g, epsilon = 1e-12);
    }

    #[test]
    fn identical_columns_have_exact_mean() {
        let m = DMatrix::from_element(2, 7, 0.1);
        let mean = column_mean(&m);
        assert!(mean.iter().all(|&v| v == 0.1));
        assert!(anomalies(&m, &mean).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn right_solve_rejects_indefinite() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_right_solve(&DMatrix::identity(1, 2), &d).is_none());
    }
}
