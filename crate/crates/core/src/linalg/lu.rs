use super::{norm_scale, Mat};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-14;

/// LU factorization with partial pivoting, `P a = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "LU of a non-square {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let thresh = PIVOT_TOL * norm_scale(a.inf_norm());
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax < thresh {
                return Err(Error::Singular { pivot: pmax });
            }
            if p != k {
                let d = lu.data_mut();
                for j in 0..n {
                    d.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    pub fn determinant(&self) -> f64 {
        (0..self.lu.rows()).fold(self.sign, |d, i| d * self.lu[(i, i)])
    }

    pub fn solve(&self, b: &Mat) -> Result<Mat> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(Error::Dimension(format!(
                "right-hand side has {} rows, expected {n}",
                b.rows()
            )));
        }
        let m = b.cols();
        let mut x = Mat::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            for j in 0..m {
                x[(i, j)] = b[(p, j)];
            }
        }
        for c in 0..m {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Solve `a X = b` by LU with partial pivoting.
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    Lu::factor(a)?.solve(b)
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    Lu::factor(a)?.solve(&Mat::identity(a.rows()))
}

/// Determinant via LU; exactly singular input gives 0 rather than an error.
pub fn determinant(a: &Mat) -> Result<f64> {
    match Lu::factor(a) {
        Ok(lu) => Ok(lu.determinant()),
        Err(Error::Singular { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::operator_norm;

    fn lcg_mat(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut s = seed;
        let data = (0..rows * cols)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Mat::new(rows, cols, data).unwrap()
    }

    #[test]
    fn identity_and_diagonal() {
        let b = lcg_mat(3, 2, 1);
        assert_eq!(solve_linear(&Mat::identity(3), &b).unwrap(), b);
        let x = solve_linear(&Mat::diag(&[2.0, 4.0]), &Mat::column(&[2.0, 4.0])).unwrap();
        assert_eq!(x, Mat::column(&[1.0, 1.0]));
    }

    #[test]
    fn residual_on_well_conditioned_system() {
        let a = &lcg_mat(6, 6, 7) + &Mat::identity(6).scale(4.0);
        let b = lcg_mat(6, 3, 8);
        let x = solve_linear(&a, &b).unwrap();
        let r = operator_norm(&(&(&a * &x) - &b));
        assert!(r <= 1e-10 * operator_norm(&a) * operator_norm(&x), "residual {r}");
    }

    #[test]
    fn singular_is_reported() {
        let a = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert!(matches!(solve_linear(&a, &Mat::column(&[1.0, 1.0])), Err(Error::Singular { .. })));
        assert_eq!(determinant(&a).unwrap(), 0.0);
    }

    #[test]
    fn determinant_of_permutation() {
        let a = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(determinant(&a).unwrap(), -1.0);
    }
}
