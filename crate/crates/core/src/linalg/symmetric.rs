use super::Mat;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
///
/// Only the upper triangle is trusted; callers validate symmetry.
pub fn sym_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "symmetric eigenvalues of a non-square {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut a = m.symmetrize();
    let total = a.frobenius_norm();
    if total == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let off = |a: &Mat| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[(i, j)] * a[(i, j)];
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > 1e-15 * total {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Convergence { iterations: sweeps, residual: off(&a) });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(ev)
}

/// Singular values, descending, by one-sided Jacobi (Hestenes) on the taller
/// orientation. Returns `min(rows, cols)` values.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let a = if m.rows() >= m.cols() { m.clone() } else { m.transpose() };
    let (rows, cols) = a.shape();
    // Column-major copy: c[j] is column j.
    let mut c: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| a[(i, j)]).collect()).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha: f64 = c[p].iter().map(|x| x * x).sum();
                let beta: f64 = c[q].iter().map(|x| x * x).sum();
                let gamma: f64 = c[p].iter().zip(&c[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let (lo, hi) = c.split_at_mut(q);
                for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = cs * xp - sn * xq;
                    *y = sn * xp + cs * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = c.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_on_known_spectrum() {
        let m = Mat::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eigenvalues(&m).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-15 && (e[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn singular_values_of_simple_shapes() {
        assert_eq!(singular_values(&Mat::diag(&[1.0, 3.0])), vec![3.0, 1.0]);
        let s = singular_values(&Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap());
        assert_eq!(s, vec![1.0, 0.0]);
        let wide = Mat::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(singular_values(&wide), vec![1.0, 1.0]);
    }

    #[test]
    fn tiny_singular_value_keeps_relative_accuracy() {
        let m = Mat::diag(&[1.0, 1e-12]);
        let r = Mat::from_rows(&[[0.6, -0.8], [0.8, 0.6]]).unwrap();
        let s = singular_values(&(&r * &m));
        assert!((s[1] - 1e-12).abs() < 1e-24 * 1e4, "{}", s[1]);
    }
}
