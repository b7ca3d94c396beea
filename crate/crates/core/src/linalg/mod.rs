//! Dense real-matrix kernel.

mod eigen;
mod lu;
mod mat;
mod symmetric;

use num_complex::Complex64;
use serde::Serialize;

pub use eigen::eigenvalues;
pub use lu::{determinant, inverse, solve_linear, Lu};
pub use mat::Mat;
pub use symmetric::{singular_values, sym_eigenvalues};

use crate::error::{Error, Result};

/// Tolerances scale with the input norm, except for inputs so small that the
/// scale itself would underflow.
#[inline]
pub(crate) fn norm_scale(norm: f64) -> f64 {
    if norm < 1e-300 {
        1.0
    } else {
        norm
    }
}

pub fn spectral_radius(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Largest singular value.
pub fn operator_norm(m: &Mat) -> f64 {
    singular_values(m)[0]
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn min_singular_value(m: &Mat) -> f64 {
    *singular_values(m).last().expect("matrices are non-empty")
}

/// `true` iff the smallest eigenvalue of the symmetric `m` is at least `-tol`
/// (relative to the norm of `m`). Asymmetry beyond `tol` is a shape error.
pub fn is_psd(m: &Mat, tol: f64) -> Result<bool> {
    Ok(min_sym_eigenvalue(m, tol)? >= -tol * norm_scale(m.max_abs()))
}

/// Smallest eigenvalue of a matrix that must be symmetric within `tol`.
pub fn min_sym_eigenvalue(m: &Mat, tol: f64) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let asym = m.asymmetry();
    if asym > tol * norm_scale(m.max_abs()) {
        return Err(Error::Shape { asymmetry: asym });
    }
    Ok(sym_eigenvalues(m)?[0])
}

/// Lower-triangular `F` with `F Fᵀ = m` for a symmetric PSD `m`. Pivots below
/// `1e-13 ‖m‖` count as zero, so semidefinite inputs are accepted.
pub fn psd_factor(m: &Mat) -> Result<Mat> {
    let n = m.rows();
    min_sym_eigenvalue(m, 1e-10)?;
    let tol = 1e-13 * norm_scale(m.max_abs());
    let mut f = Mat::zeros(n, n);
    for j in 0..n {
        let d = m[(j, j)] - (0..j).map(|k| f[(j, k)] * f[(j, k)]).sum::<f64>();
        if d < -1e3 * tol {
            return Err(Error::Domain(format!("matrix is not positive semidefinite (pivot {d:.3e})")));
        }
        if d <= tol {
            continue;
        }
        let djj = d.sqrt();
        f[(j, j)] = djj;
        for i in (j + 1)..n {
            let s = m[(i, j)] - (0..j).map(|k| f[(i, k)] * f[(j, k)]).sum::<f64>();
            f[(i, j)] = s / djj;
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub spectral_radius: f64,
    pub operator_norm: f64,
    pub min_singular_value: f64,
    /// `(re, im)` pairs.
    pub eigenvalues: Vec<(f64, f64)>,
}

pub fn spectral_report(m: &Mat) -> Result<SpectralReport> {
    let eig = eigenvalues(m)?;
    let sv = singular_values(m);
    Ok(SpectralReport {
        spectral_radius: eig.iter().map(|z| z.norm()).fold(0.0, f64::max),
        operator_norm: sv[0],
        min_singular_value: *sv.last().unwrap(),
        eigenvalues: eig.iter().map(|z| (z.re, z.im)).collect(),
    })
}

/// Real `2n x 2n` embedding `[[re, -im], [im, re]]` of a complex matrix.
///
/// Singular values of the embedding are those of the complex matrix, each
/// repeated twice, so norms and linear solves carry over.
pub fn complex_embedding(re: &Mat, im: &Mat) -> Mat {
    Mat::block2x2(re, &-im, im, re)
}

/// Smallest singular value of `m - z I` for complex `z`.
pub fn shifted_min_singular_value(m: &Mat, z: Complex64) -> f64 {
    let n = m.rows();
    let re = m - &Mat::identity(n).scale(z.re);
    let im = Mat::identity(n).scale(-z.im);
    min_singular_value(&complex_embedding(&re, &im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&Mat::diag(&[0.3, -0.9])).unwrap(), 0.9);
        let nil = Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert_eq!(spectral_radius(&nil).unwrap(), 0.0);
        let tri = Mat::from_rows(&[[0.9, 10.0], [0.0, 0.9]]).unwrap();
        assert!((spectral_radius(&tri).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(operator_norm(&Mat::diag(&[1.0, 3.0])), 3.0);
        assert_eq!(operator_norm(&Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap()), 1.0);
        assert_eq!(min_singular_value(&Mat::identity(3)), 1.0);
        assert_eq!(min_singular_value(&Mat::diag(&[1.0, 0.0])), 0.0);
        let wide = Mat::hstack(&[Mat::identity(2), Mat::zeros(2, 2)]);
        assert_eq!(min_singular_value(&wide), 1.0);
    }

    #[test]
    fn psd_examples() {
        assert!(is_psd(&Mat::identity(3), 1e-9).unwrap());
        assert!(!is_psd(&Mat::diag(&[1.0, -1e-3]), 1e-9).unwrap());
        let asym = Mat::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(is_psd(&asym, 1e-9), Err(Error::Shape { .. })));
    }

    #[test]
    fn psd_factor_reconstructs() {
        let m = Mat::from_rows(&[[4.0, 2.0, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let f = psd_factor(&m).unwrap();
        assert!((&(&f * &f.transpose()) - &m).max_abs() < 1e-14);
        assert!(psd_factor(&Mat::diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn embedding_detects_eigenvalue() {
        let m = Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert!(shifted_min_singular_value(&m, Complex64::new(0.0, 1.0)) < 1e-15);
        assert!(shifted_min_singular_value(&m, Complex64::new(0.5, 0.0)) > 0.5);
    }
}
