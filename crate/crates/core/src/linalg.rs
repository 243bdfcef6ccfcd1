//! Dense complex linear algebra on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::expsum::ScaledValue;

pub type CMatrix = DMatrix<Complex64>;

/// Determinant of `diag(e^{row_logs}) · mantissa`, as a [`ScaledValue`].
pub fn scaled_determinant(mantissa: CMatrix, row_logs: &[f64]) -> ScaledValue {
    let d = if mantissa.nrows() == 0 { Complex64::new(1.0, 0.0) } else { mantissa.lu().determinant() };
    ScaledValue::new(d, row_logs.iter().sum())
}

/// Rescale each row of `m` by its largest entry; returns the log of each factor.
pub fn normalize_rows(m: &mut CMatrix) -> Vec<f64> {
    let mut logs = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let mx = m.row(i).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if mx > 0.0 && mx.is_finite() {
            for j in 0..m.ncols() {
                m[(i, j)] /= mx;
            }
            logs.push(mx.ln());
        } else {
            logs.push(0.0);
        }
    }
    logs
}

pub fn determinant(m: &CMatrix) -> Complex64 {
    if m.nrows() == 0 {
        return Complex64::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

/// Solve `m · X = rhs` by LU with partial pivoting.
pub fn solve(m: &CMatrix, rhs: &CMatrix) -> Option<CMatrix> {
    m.clone().lu().solve(rhs)
}

/// One-norm condition number `‖M‖₁ ‖M⁻¹‖₁`; infinite when singular.
pub fn condition_1(m: &CMatrix) -> f64 {
    match m.clone().try_inverse() {
        Some(inv) => norm_1(m) * norm_1(&inv),
        None => f64::INFINITY,
    }
}

pub fn norm_1(m: &CMatrix) -> f64 {
    (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Adjugate by cofactors: `adj(M)[i][j] = (−1)^{i+j} det(M without row j, column i)`.
pub fn adjugate(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let mut adj = CMatrix::zeros(n, n);
    if n == 1 {
        adj[(0, 0)] = Complex64::new(1.0, 0.0);
        return adj;
    }
    for i in 0..n {
        for j in 0..n {
            let minor = m.clone().remove_row(j).remove_column(i);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(i, j)] = determinant(&minor) * sign;
        }
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn adjugate_times_matrix_is_det_identity() {
        let m = CMatrix::from_row_slice(3, 3, &[
            c(1.0, 0.5), c(-0.3, 0.0), c(2.0, 1.0),
            c(0.0, 1.0), c(1.5, -0.2), c(0.4, 0.0),
            c(-1.0, 0.0), c(0.2, 0.3), c(0.9, -0.7),
        ]);
        let d = determinant(&m);
        let prod = adjugate(&m) * &m;
        let target = CMatrix::identity(3, 3) * d;
        assert!(max_abs(&(prod - target)) < 1e-12);
    }

    #[test]
    fn scaled_determinant_matches_plain() {
        let mut m = CMatrix::from_row_slice(2, 2, &[c(1e200, 0.0), c(2e200, 0.0), c(3e-200, 0.0), c(5e-200, 0.0)]);
        let logs = normalize_rows(&mut m);
        let d = scaled_determinant(m, &logs);
        assert!((d.mantissa.re * d.log_scale.exp() - (5.0 - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_has_zero_determinant() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        assert_eq!(determinant(&m), c(0.0, 0.0));
        assert!(condition_1(&m).is_infinite() || condition_1(&m) > 1e15);
    }
}
