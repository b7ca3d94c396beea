//! Transient constants `τ(M, ρ)`, H∞ norms and controllability margins.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{min_singular_value, operator_norm, shifted_min_singular_value, spectral_radius, Mat};
use crate::riccati::LinearSystem;

const TAU_CAP: usize = 50_000;
const TAU_DROP: f64 = 1e-3;
const HINF_SAMPLES: usize = 4096;
const HINF_RESOLUTION: f64 = 1e-6;

/// `ρ = 1.001 ρ(A) + 1e-6`, strictly above the spectral radius.
pub fn default_rho(a: &Mat) -> Result<f64> {
    Ok(1.001 * spectral_radius(a)? + 1e-6)
}

/// `γ = (1 + ρ(L)) / 2` for a stable closed loop.
pub fn default_gamma(l: &Mat) -> Result<f64> {
    let rho = spectral_radius(l)?;
    if rho >= 1.0 {
        return Err(Error::Stability { rho });
    }
    Ok(0.5 * (1.0 + rho))
}

#[derive(Debug, Clone, Serialize)]
pub struct TransientReport {
    pub rho: f64,
    /// `max_k ‖M^k‖ ρ^-k` over `k ≤ truncation_k`; at least 1.
    pub tau: f64,
    pub argmax_k: usize,
    pub truncation_k: usize,
    pub hinf: Option<f64>,
}

/// `τ(M, ρ)` for `ρ > ρ(M)`.
pub fn tau(m: &Mat, rho: f64) -> Result<TransientReport> {
    tau_with(m, rho, false)
}

/// `τ(M, ρ)`; with `allow_boundary` the radius may equal `ρ(M)` and the
/// iteration cap decides where the supremum is truncated.
///
/// Powers are accumulated until `‖M^k‖ρ^-k` falls below `1e-3` of the running
/// maximum past twice its argmax, or `k` reaches 50000.
pub fn tau_with(m: &Mat, rho: f64, allow_boundary: bool) -> Result<TransientReport> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("tau of a non-square {}x{} matrix", m.rows(), m.cols())));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Domain(format!("rho must be positive and finite, got {rho}")));
    }
    let sr = spectral_radius(m)?;
    let ok = if allow_boundary { rho >= sr * (1.0 - 1e-12) } else { rho > sr };
    if !ok {
        return Err(Error::Domain(format!("rho = {rho} does not exceed the spectral radius {sr}")));
    }
    if operator_norm(m) <= rho {
        return Ok(TransientReport { rho, tau: 1.0, argmax_k: 0, truncation_k: 0, hinf: None });
    }
    let step = m.scale(1.0 / rho);
    let mut power = Mat::identity(m.rows());
    let (mut best, mut argmax) = (1.0, 0);
    let mut k = 0;
    while k < TAU_CAP {
        k += 1;
        power = &power * &step;
        let v = operator_norm(&power);
        if !v.is_finite() {
            return Err(Error::Domain(format!("powers of M/rho overflow at k = {k}")));
        }
        if v > best {
            best = v;
            argmax = k;
        } else if v < TAU_DROP * best && k > 2 * argmax {
            break;
        }
    }
    Ok(TransientReport { rho, tau: best, argmax_k: argmax, truncation_k: k, hinf: None })
}

fn resolvent_norm(l: &Mat, theta: f64) -> f64 {
    1.0 / shifted_min_singular_value(l, Complex64::from_polar(1.0, theta))
}

/// `sup_{|z|=1} ‖(zI - L)⁻¹‖` by sampling and golden-section refinement.
pub fn hinf_norm(l: &Mat) -> Result<f64> {
    let rho = spectral_radius(l)?;
    if rho >= 1.0 {
        return Err(Error::Stability { rho });
    }
    // Real L: the resolvent norm is symmetric in θ, so [0, π] suffices.
    let h = std::f64::consts::PI / (HINF_SAMPLES / 2) as f64;
    let vals: Vec<f64> = (0..=HINF_SAMPLES / 2).map(|i| resolvent_norm(l, i as f64 * h)).collect();
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let mut best = top;
    for i in 0..vals.len() {
        let left = if i > 0 { vals[i - 1] } else { vals[1.min(vals.len() - 1)] };
        let right = if i + 1 < vals.len() { vals[i + 1] } else { vals[i.saturating_sub(1)] };
        if vals[i] >= left && vals[i] >= right && vals[i] >= 0.5 * top {
            best = best.max(golden_max(|t| resolvent_norm(l, t), i as f64 * h - h, i as f64 * h + h));
        }
    }
    Ok(best)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = fc.max(fd);
    while b - a > HINF_RESOLUTION {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        best = best.max(fc).max(fd);
    }
    best
}

#[derive(Debug, Clone, Serialize)]
pub struct ControllabilityReport {
    pub ell: usize,
    /// `[B, AB, …, A^(ℓ-1) B]`.
    pub c_ell: Mat,
    /// n-th singular value of `c_ell`; zero when it has fewer than n columns.
    pub nu: f64,
    pub is_ell_nu_controllable: bool,
}

/// Controllability matrix and margin over `ell` steps. The boolean uses a
/// numerical-rank threshold of `1e-12 ‖C_ℓ‖`.
pub fn controllability(sys: &LinearSystem, ell: usize) -> Result<ControllabilityReport> {
    controllability_with_threshold(sys, ell, None)
}

pub fn controllability_with_threshold(
    sys: &LinearSystem,
    ell: usize,
    threshold: Option<f64>,
) -> Result<ControllabilityReport> {
    if ell == 0 {
        return Err(Error::Domain("ell must be at least 1".into()));
    }
    let mut blocks = Vec::with_capacity(ell);
    let mut blk = sys.b().clone();
    for i in 0..ell {
        if i > 0 {
            blk = sys.a() * &blk;
        }
        blocks.push(blk.clone());
    }
    let c_ell = Mat::hstack(&blocks);
    let nu = if c_ell.cols() < c_ell.rows() { 0.0 } else { min_singular_value(&c_ell) };
    let threshold = threshold.unwrap_or(1e-12 * operator_norm(&c_ell));
    Ok(ControllabilityReport { ell, nu, is_ell_nu_controllable: nu > threshold, c_ell })
}

/// Bounds on `‖(M+Δ)^k‖` and `‖(M+Δ)^k - M^k‖` for `‖Δ‖ ≤ δ`, given `τ(M, ρ)`.
pub fn power_perturb_bounds_with_tau(tau: f64, rho: f64, delta: f64, k: usize) -> (f64, f64) {
    let base = tau * delta + rho;
    let pow_bound = tau * base.powi(k as i32);
    let diff_bound = if k == 0 { 0.0 } else { k as f64 * tau * tau * base.powi(k as i32 - 1) * delta };
    (pow_bound, diff_bound)
}

/// As [`power_perturb_bounds_with_tau`], computing `τ(M, ρ)` with `ρ ≥ ρ(M)` allowed.
pub fn power_perturb_bounds(m: &Mat, rho: f64, delta: f64, k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    if delta < 0.0 {
        return Err(Error::Domain(format!("delta must be nonnegative, got {delta}")));
    }
    let t = tau_with(m, rho, true)?;
    Ok(power_perturb_bounds_with_tau(t.tau, rho, delta, k))
}

/// Lower bound on the controllability margin after perturbing `(A, B)` by at
/// most `eps` in norm: `ν - 3 ε ℓ^(3/2) τ_A² β^(ℓ-1) (‖B‖ + 1)`, `β = max(1, τ_A ε + ρ)`.
pub fn controllability_perturb_bound(
    report: &ControllabilityReport,
    tau_a: f64,
    rho: f64,
    eps: f64,
    norm_b: f64,
) -> f64 {
    let ell = report.ell as f64;
    let beta = (tau_a * eps + rho).max(1.0);
    report.nu - 3.0 * eps * ell.powf(1.5) * tau_a * tau_a * beta.powi(report.ell as i32 - 1) * (norm_b + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_trivial_cases() {
        let t = tau_with(&Mat::scalar(0.5), 0.5, true).unwrap();
        assert_eq!((t.tau, t.argmax_k), (1.0, 0));
        assert!(matches!(tau(&Mat::scalar(0.5), 0.5), Err(Error::Domain(_))));
        assert_eq!(tau(&Mat::diag(&[0.3, 0.8]), 0.9).unwrap().tau, 1.0);
    }

    #[test]
    fn tau_jordan_block_matches_brute_force() {
        let m = Mat::from_rows(&[[0.5, 1.0], [0.0, 0.5]]).unwrap();
        let mut brute: f64 = 0.0;
        let mut p = Mat::identity(2);
        for k in 0..=200 {
            brute = brute.max(operator_norm(&p) * 0.9f64.powi(-k));
            p = &p * &m;
        }
        let t = tau(&m, 0.9).unwrap();
        assert!((t.tau - brute).abs() < 1e-12 * brute, "{} vs {brute}", t.tau);
        assert!(t.tau > 1.0 && t.argmax_k > 0);
    }

    #[test]
    fn hinf_trivial_cases() {
        assert!((hinf_norm(&Mat::zeros(2, 2)).unwrap() - 1.0).abs() < 1e-12);
        assert!((hinf_norm(&Mat::scalar(0.5)).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(hinf_norm(&Mat::scalar(1.5)), Err(Error::Stability { .. })));
    }

    #[test]
    fn controllability_examples() {
        let sys = LinearSystem::new(Mat::scalar(3.0), Mat::scalar(1.0)).unwrap();
        assert_eq!(controllability(&sys, 1).unwrap().nu, 1.0);
        let beta = 0.05;
        let sys = LinearSystem::new(Mat::identity(2).scale(1.01), Mat::diag(&[1.0, beta])).unwrap();
        assert!((controllability(&sys, 1).unwrap().nu - beta).abs() < 1e-15);
        let sys = LinearSystem::new(
            Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap(),
            Mat::from_rows(&[[0.0], [1.0]]).unwrap(),
        )
        .unwrap();
        let r = controllability(&sys, 2).unwrap();
        assert_eq!(r.c_ell, Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        assert_eq!(r.nu, 1.0);
        assert!(r.is_ell_nu_controllable);
        assert!(!controllability(&sys, 1).unwrap().is_ell_nu_controllable);
    }

    #[test]
    fn power_bounds_plug_in() {
        let (p, d) = power_perturb_bounds(&Mat::scalar(0.5), 0.5, 0.0, 3).unwrap();
        assert_eq!((p, d), (0.125, 0.0));
        let (p, d) = power_perturb_bounds(&Mat::scalar(0.5), 0.5, 0.1, 3).unwrap();
        assert!((p - 0.216).abs() < 1e-15 && (d - 0.108).abs() < 1e-15);
    }

    #[test]
    fn controllability_perturb_plug_in() {
        let sys = LinearSystem::new(Mat::scalar(0.5), Mat::scalar(1.0)).unwrap();
        let r = controllability(&sys, 1).unwrap();
        assert_eq!(controllability_perturb_bound(&r, 1.0, 0.9, 0.0, 1.0), r.nu);
        assert!((controllability_perturb_bound(&r, 1.0, 0.9, 0.01, 1.0) - (r.nu - 0.06)).abs() < 1e-15);
    }
}
