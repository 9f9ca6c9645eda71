//! Independent oracles shared by the integration tests. Nothing here calls
//! the closed-form jet formulas; everything is built from `evaluate`.
#![allow(dead_code)]

use conformal_jets::FlatConformalField;
use nalgebra::{DMatrix, DVector};

pub const FD_STEP: f64 = 1e-5;
/// Outer step for derivatives of the divergence. The field is quadratic, so
/// centered differences have no truncation error and a larger step only
/// reduces rounding.
pub const FD_OUTER_STEP: f64 = 1e-2;

pub fn fd_jacobian(f: &FlatConformalField, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut dx = DVector::zeros(n);
        dx[k] = h;
        let col = (f.evaluate(&(x + &dx)) - f.evaluate(&(x - &dx))) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

/// `φ = (2/n) div v` from the finite-difference Jacobian.
pub fn fd_phi(f: &FlatConformalField, x: &DVector<f64>) -> f64 {
    2.0 * fd_jacobian(f, x, FD_STEP).trace() / x.len() as f64
}

pub fn fd_dphi(f: &FlatConformalField, x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(n, |k, _| {
        let mut dx = DVector::zeros(n);
        dx[k] = FD_OUTER_STEP;
        (fd_phi(f, &(x + &dx)) - fd_phi(f, &(x - &dx))) / (2.0 * FD_OUTER_STEP)
    })
}

/// Directional derivative of `x ↦ J(x)` along `z`, with `J` itself from
/// finite differences.
pub fn fd_jacobian_derivative(
    f: &FlatConformalField,
    x: &DVector<f64>,
    z: &DVector<f64>,
) -> DMatrix<f64> {
    let h = FD_OUTER_STEP;
    (fd_jacobian(f, &(x + z * h), FD_STEP) - fd_jacobian(f, &(x - z * h), FD_STEP)) / (2.0 * h)
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Characteristic polynomial coefficients by direct cofactor expansion of
/// `det(t·Id − J)` at `n + 1` nodes followed by exact Vandermonde
/// interpolation; independent of the library's method.
pub fn det_cofactor(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 1 {
        return m[(0, 0)];
    }
    let mut total = 0.0;
    for col in 0..n {
        let minor = m.clone().remove_row(0).remove_column(col);
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * m[(0, col)] * det_cofactor(&minor);
    }
    total
}

pub fn char_poly_at(j: &DMatrix<f64>, t: f64) -> f64 {
    let n = j.nrows();
    det_cofactor(&(DMatrix::identity(n, n) * t - j))
}
