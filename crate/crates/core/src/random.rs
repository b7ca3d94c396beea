//! Random instances for sweeps and property tests.

use crate::linalg::{operator_norm, spectral_radius, Mat};
use crate::riccati::LinearSystem;
use crate::rng::GaussianStream;

/// Gaussian matrix rescaled to operator norm `norm`.
pub fn direction(g: &mut GaussianStream, rows: usize, cols: usize, norm: f64) -> Mat {
    loop {
        let m = g.normal_mat(rows, cols);
        let s = operator_norm(&m);
        if s > 0.0 {
            return m.scale(norm / s);
        }
    }
}

/// Gaussian matrix rescaled to spectral radius `radius`.
pub fn with_spectral_radius(g: &mut GaussianStream, n: usize, radius: f64) -> Mat {
    loop {
        let m = g.normal_mat(n, n);
        if let Ok(r) = spectral_radius(&m) {
            if r > 1e-8 {
                return m.scale(radius / r);
            }
        }
    }
}

/// `(A, B)` with `ρ(A)` uniform in `[lo, hi]` and Gaussian `B / √n`.
pub fn system(g: &mut GaussianStream, n: usize, d: usize, lo: f64, hi: f64) -> LinearSystem {
    let radius = lo + (hi - lo) * g.uniform();
    let a = with_spectral_radius(g, n, radius);
    let b = g.normal_mat(n, d).scale(1.0 / (n as f64).sqrt());
    LinearSystem::new(a, b).expect("shapes agree")
}

/// Symmetric PSD `G Gᵀ / k + floor I`.
pub fn psd(g: &mut GaussianStream, n: usize, rank: usize, floor: f64) -> Mat {
    let f = g.normal_mat(n, rank.max(1));
    (&(&f * &f.transpose()).scale(1.0 / rank.max(1) as f64) + &Mat::identity(n).scale(floor)).symmetrize()
}

/// Orthogonal matrix from Gram–Schmidt on a Gaussian matrix.
pub fn orthogonal(g: &mut GaussianStream, n: usize) -> Mat {
    let mut q = g.normal_mat(n, n);
    for j in 0..n {
        for k in 0..j {
            let dot: f64 = (0..n).map(|i| q[(i, j)] * q[(i, k)]).sum();
            for i in 0..n {
                q[(i, j)] -= dot * q[(i, k)];
            }
        }
        let norm = (0..n).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
        for i in 0..n {
            q[(i, j)] /= norm;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_hit_their_targets() {
        let mut g = GaussianStream::new(3, 0);
        assert!((operator_norm(&direction(&mut g, 3, 2, 0.25)) - 0.25).abs() < 1e-12);
        assert!((spectral_radius(&with_spectral_radius(&mut g, 4, 0.7)).unwrap() - 0.7).abs() < 1e-10);
        let q = orthogonal(&mut g, 4);
        assert!((&q.tr_mul(&q) - &Mat::identity(4)).max_abs() < 1e-12);
    }
}
