//! Weighted least squares through a thin QR factorisation of the
//! square-root-weighted design.

use nalgebra::DMatrix;

use crate::error::{RdError, Result};

/// Relative tolerance on `|R_jj|` against the column norm for rank detection.
pub const RANK_TOL: f64 = 1e-10;

/// Polynomial design rows `[1, u, u^2, ..., u^degree]`.
pub fn poly_design(u: &[f64], degree: usize) -> DMatrix<f64> {
    DMatrix::from_fn(u.len(), degree + 1, |i, j| u[i].powi(j as i32))
}

/// Linear smoother `L = (D' W D)^{-1} D' W` so that `beta = L y`.
///
/// Row `j` of the result holds the weights that produce coefficient `j` as a
/// linear combination of the responses. Rank deficiency (including fewer
/// positive-weight rows than columns) is reported as `InsufficientData`.
pub fn wls_smoother(design: &DMatrix<f64>, weights: &[f64]) -> Result<DMatrix<f64>> {
    let (m, p) = design.shape();
    debug_assert_eq!(m, weights.len());
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    if positive < p {
        return Err(RdError::InsufficientData(format!(
            "{positive} positive-weight observations for {p} coefficients"
        )));
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.max(0.0).sqrt()).collect();
    let a = DMatrix::from_fn(m, p, |i, j| design[(i, j)] * sqrt_w[i]);
    let col_norms: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();
    let qr = a.qr();
    let r = qr.r();
    for j in 0..p {
        if col_norms[j] == 0.0 || r[(j, j)].abs() <= RANK_TOL * col_norms[j] {
            return Err(RdError::InsufficientData(format!(
                "rank-deficient design (column {j})"
            )));
        }
    }
    let q = qr.q();
    // L = R^{-1} Q' diag(sqrt w)
    let mut qt_w = q.transpose();
    for i in 0..m {
        for j in 0..p {
            qt_w[(j, i)] *= sqrt_w[i];
        }
    }
    r.solve_upper_triangular(&qt_w)
        .ok_or_else(|| RdError::InsufficientData("singular triangular factor".into()))
}

/// Ordinary least-squares polynomial coefficients in the variable `u`.
pub fn poly_ols(u: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    let design = poly_design(u, degree);
    let smoother = wls_smoother(&design, &vec![1.0; u.len()])?;
    Ok((0..=degree)
        .map(|j| smoother.row(j).iter().zip(y).map(|(l, v)| l * v).sum())
        .collect())
}
