//! Discrete Lyapunov and algebraic Riccati equations, LQR and Kalman gains.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{inverse, min_sym_eigenvalue, norm_scale, operator_norm, solve_linear, spectral_radius, Mat};
use crate::lqg::LqgSystem;

const SYM_TOL: f64 = 1e-10;
const DOUBLING_CAP: usize = 200;
const VALUE_ITERATION_CAP: usize = 200_000;
const NEWTON_CAP: usize = 30;
const CONVERGED: f64 = 1e-12;
const DIVERGED: f64 = 1e12;

/// Dynamics `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearSystem {
    a: Mat,
    b: Mat,
}

impl LinearSystem {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!("A is {}x{}, expected square", a.rows(), a.cols())));
        }
        if b.rows() != a.rows() {
            return Err(Error::Dimension(format!(
                "B has {} rows but A is {}x{}",
                b.rows(),
                a.rows(),
                a.cols()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Input dimension.
    pub fn d(&self) -> usize {
        self.b.cols()
    }

    pub fn closed_loop(&self, k: &Mat) -> Result<Mat> {
        if k.shape() != (self.d(), self.n()) {
            return Err(Error::Dimension(format!(
                "gain is {}x{}, expected {}x{}",
                k.rows(),
                k.cols(),
                self.d(),
                self.n()
            )));
        }
        Ok(&self.a + &(&self.b * k))
    }
}

/// Quadratic stage cost `xᵀQx + uᵀRu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostParams {
    q: Mat,
    r: Mat,
    /// `Q ≻ 0` (not only semidefinite).
    pub q_positive_definite: bool,
    /// `σ̲(R) ≥ 1`. The perturbation bounds assume it; rescaling is up to the caller.
    pub r_min_sv_ge_one: bool,
}

impl CostParams {
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        let q_min = min_sym_eigenvalue(&q, SYM_TOL)?;
        let r_min = min_sym_eigenvalue(&r, SYM_TOL)?;
        let q_scale = norm_scale(q.max_abs());
        let r_scale = norm_scale(r.max_abs());
        if q_min < -SYM_TOL * q_scale {
            return Err(Error::Cost(format!("Q is not positive semidefinite (min eigenvalue {q_min:.3e})")));
        }
        if r_min <= 1e-14 * r_scale {
            return Err(Error::Cost(format!("R is not positive definite (min eigenvalue {r_min:.3e})")));
        }
        Ok(Self {
            q_positive_definite: q_min > SYM_TOL * q_scale,
            r_min_sv_ge_one: r_min >= 1.0 - 1e-12,
            q: q.symmetrize(),
            r: r.symmetrize(),
        })
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    /// `(αQ, αR)`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.q.scale(alpha), self.r.scale(alpha))
    }

    pub fn check_against(&self, sys: &LinearSystem) -> Result<()> {
        if self.q.rows() != sys.n() {
            return Err(Error::Dimension(format!("Q is {0}x{0}, expected {1}x{1}", self.q.rows(), sys.n())));
        }
        if self.r.rows() != sys.d() {
            return Err(Error::Dimension(format!("R is {0}x{0}, expected {1}x{1}", self.r.rows(), sys.d())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiSolution {
    pub p: Mat,
    pub k: Mat,
    /// Closed loop `A + B K`.
    pub l: Mat,
    pub residual: f64,
    pub iterations: usize,
}

/// Solve `Lᵀ X L - X + M = 0` for stable `L` by doubling.
pub fn solve_dlyap(l: &Mat, m: &Mat) -> Result<Mat> {
    if !l.is_square() || m.shape() != l.shape() {
        return Err(Error::Dimension(format!(
            "dlyap needs square L and M of equal size, got {}x{} and {}x{}",
            l.rows(),
            l.cols(),
            m.rows(),
            m.cols()
        )));
    }
    let asym = m.asymmetry();
    if asym > SYM_TOL * norm_scale(m.max_abs()) {
        return Err(Error::Shape { asymmetry: asym });
    }
    let rho = spectral_radius(l)?;
    if rho >= 1.0 - 1e-9 {
        return Err(Error::Stability { rho });
    }
    let mut x = m.symmetrize();
    let mut a = l.clone();
    for _ in 0..DOUBLING_CAP {
        let term = a.tr_mul(&(&x * &a));
        x = &x + &term;
        let tn = term.frobenius_norm();
        if tn <= 1e-16 * x.frobenius_norm() || tn == 0.0 {
            return Ok(x.symmetrize());
        }
        a = &a * &a;
        if !a.is_finite() || !x.is_finite() {
            break;
        }
    }
    Err(Error::Convergence { iterations: DOUBLING_CAP, residual: dlyap_residual(l, m, &x) })
}

/// `‖Lᵀ X L - X + M‖`.
pub fn dlyap_residual(l: &Mat, m: &Mat, x: &Mat) -> f64 {
    operator_norm(&(&(&l.tr_mul(&(x * l)) - x) + m))
}

fn check_p(p: &Mat, sys: &LinearSystem) -> Result<()> {
    if p.shape() != (sys.n(), sys.n()) {
        return Err(Error::Dimension(format!("P is {}x{}, expected {1}x{1}", p.rows(), sys.n())));
    }
    Ok(())
}

/// `F(X) = X - AᵀXA + AᵀXB (R + BᵀXB)⁻¹ BᵀXA - Q`.
pub fn riccati_operator(p: &Mat, sys: &LinearSystem, cost: &CostParams) -> Result<Mat> {
    cost.check_against(sys)?;
    check_p(p, sys)?;
    let (a, b) = (sys.a(), sys.b());
    let pa = p * a;
    let bpa = b.tr_mul(&pa);
    let s = cost.r() + &b.tr_mul(&(p * b));
    let inner = solve_linear(&s, &bpa)?;
    let f = &(&(p - &a.tr_mul(&pa)) + &bpa.tr_mul(&inner)) - cost.q();
    Ok(f)
}

/// The same operator in the form `X - AᵀX (I + B R⁻¹ BᵀX)⁻¹ A - Q`.
pub fn riccati_operator_alt(p: &Mat, sys: &LinearSystem, cost: &CostParams) -> Result<Mat> {
    cost.check_against(sys)?;
    check_p(p, sys)?;
    let (a, b) = (sys.a(), sys.b());
    let g = b * &solve_linear(cost.r(), &b.transpose())?;
    let w = &Mat::identity(sys.n()) + &(&g * p);
    let f = &(p - &a.tr_mul(&(p * &solve_linear(&w, a)?))) - cost.q();
    Ok(f)
}

/// Operator norm of the Riccati operator at `p`.
pub fn riccati_residual(p: &Mat, sys: &LinearSystem, cost: &CostParams) -> Result<f64> {
    Ok(operator_norm(&riccati_operator(p, sys, cost)?))
}

/// `K = -(R + BᵀPB)⁻¹ BᵀPA`.
pub fn lqr_gain(p: &Mat, sys: &LinearSystem, cost: &CostParams) -> Result<Mat> {
    let (a, b) = (sys.a(), sys.b());
    let s = cost.r() + &b.tr_mul(&(p * b));
    Ok(-&solve_linear(&s, &b.tr_mul(&(p * a)))?)
}

fn rel_change(new: &Mat, old: &Mat) -> f64 {
    (new - old).frobenius_norm() / norm_scale(new.frobenius_norm())
}

fn not_stabilizable(detail: String) -> Error {
    Error::Stabilizability(detail)
}

/// Structure-preserving doubling. Returns `(P, iterations)`.
fn dare_doubling(sys: &LinearSystem, cost: &CostParams, blowup: f64) -> Result<(Mat, usize)> {
    let n = sys.n();
    let b = sys.b();
    let mut g = (b * &inverse(cost.r())?.matmul(&b.transpose())).symmetrize();
    let mut h = cost.q().clone();
    let mut a = sys.a().clone();
    let eye = Mat::identity(n);
    for it in 1..=DOUBLING_CAP {
        let w = &eye + &(&g * &h);
        let lu = crate::linalg::Lu::factor(&w)?;
        let wa = lu.solve(&a)?;
        let wg = lu.solve(&g)?;
        let h_next = (&h + &a.tr_mul(&(&h * &wa))).symmetrize();
        g = (&g + &(&(&a * &wg) * &a.transpose())).symmetrize();
        a = &a * &wa;
        let change = rel_change(&h_next, &h);
        h = h_next;
        if !h.is_finite() || h.frobenius_norm() > blowup {
            return Err(not_stabilizable(format!("doubling iterate norm exceeded {blowup:.3e}")));
        }
        if change < CONVERGED {
            return Ok((h, it));
        }
    }
    Err(Error::Convergence { iterations: DOUBLING_CAP, residual: f64::NAN })
}

/// Value iteration from `P₀ = Q`.
fn dare_value_iteration(sys: &LinearSystem, cost: &CostParams, blowup: f64) -> Result<(Mat, usize)> {
    let mut p = cost.q().clone();
    for it in 1..=VALUE_ITERATION_CAP {
        let k = lqr_gain(&p, sys, cost)?;
        let l = sys.closed_loop(&k)?;
        // Joseph-like form keeps the iterate symmetric PSD.
        let next = (&(&l.tr_mul(&(&p * &l)) + cost.q()) + &k.tr_mul(&(cost.r() * &k))).symmetrize();
        let change = rel_change(&next, &p);
        p = next;
        if !p.is_finite() || p.frobenius_norm() > blowup {
            return Err(not_stabilizable(format!("value iterate norm exceeded {blowup:.3e}")));
        }
        if change < CONVERGED {
            return Ok((p, it));
        }
    }
    Err(Error::Convergence {
        iterations: VALUE_ITERATION_CAP,
        residual: riccati_residual(&p, sys, cost).unwrap_or(f64::NAN),
    })
}

fn residual_ok(residual: f64, p: &Mat) -> bool {
    residual <= 1e-10 * (1.0 + operator_norm(p))
}

/// Newton (Hewer) refinement from a stabilizing gain. Each step solves one
/// Lyapunov equation; the iterate is kept only while the residual improves.
fn polish(p: Mat, sys: &LinearSystem, cost: &CostParams) -> Result<(Mat, f64, usize)> {
    let mut best = p;
    let mut best_res = riccati_residual(&best, sys, cost)?;
    let mut steps = 0;
    while !residual_ok(best_res, &best) && steps < NEWTON_CAP {
        let k = lqr_gain(&best, sys, cost)?;
        let l = sys.closed_loop(&k)?;
        let m = (cost.q() + &k.tr_mul(&(cost.r() * &k))).symmetrize();
        let Ok(next) = solve_dlyap(&l, &m) else { break };
        let res = riccati_residual(&next, sys, cost)?;
        steps += 1;
        if res >= best_res {
            break;
        }
        best = next;
        best_res = res;
    }
    Ok((best, best_res, steps))
}

/// Stabilizing solution of the DARE and the LQR gain.
///
/// Doubling first, value iteration if doubling breaks down, then Newton
/// refinement when the residual is above `1e-10 (1 + ‖P‖)`.
pub fn solve_dare(sys: &LinearSystem, cost: &CostParams) -> Result<RiccatiSolution> {
    cost.check_against(sys)?;
    let blowup = DIVERGED * norm_scale(cost.q().frobenius_norm().max(cost.r().frobenius_norm()));
    let (p, iterations) = match dare_doubling(sys, cost, blowup) {
        Ok(r) => r,
        Err(e @ Error::Stabilizability(_)) => return Err(e),
        Err(_) => dare_value_iteration(sys, cost, blowup)?,
    };
    let k = lqr_gain(&p, sys, cost)?;
    let rho = spectral_radius(&sys.closed_loop(&k)?)?;
    if rho >= 1.0 {
        return Err(not_stabilizable(format!("closed loop at the fixed point has spectral radius {rho}")));
    }
    let (p, residual, steps) = polish(p, sys, cost)?;
    if !residual_ok(residual, &p) {
        return Err(Error::Convergence { iterations: iterations + steps, residual });
    }
    let k = lqr_gain(&p, sys, cost)?;
    let l = sys.closed_loop(&k)?;
    let rho = spectral_radius(&l)?;
    if rho >= 1.0 {
        return Err(not_stabilizable(format!("closed loop spectral radius {rho}")));
    }
    Ok(RiccatiSolution { p, k, l, residual, iterations: iterations + steps })
}

/// Steady-state Kalman filter for an [`LqgSystem`].
#[derive(Debug, Clone, Serialize)]
pub struct KalmanSolution {
    /// Innovation gain `L = AΣCᵀ(CΣCᵀ + V)⁻¹`, used as
    /// `x̂' = A x̂ + B u + L (y - C x̂)` so that `A - L C` is stable.
    pub gain: Mat,
    /// Stationary one-step prediction error covariance.
    pub sigma: Mat,
    pub residual: f64,
}

impl KalmanSolution {
    /// The gain with the opposite sign, `-AΣCᵀ(CΣCᵀ + V)⁻¹`, matching texts
    /// that fold the minus sign into the gain.
    pub fn negated_gain(&self) -> Mat {
        -&self.gain
    }
}

/// Kalman gain through the dual DARE on `(Aᵀ, Cᵀ, W, V)`.
pub fn kalman_gain(sys: &LqgSystem) -> Result<KalmanSolution> {
    let dual = LinearSystem::new(sys.a().transpose(), sys.c().transpose())?;
    let noise = CostParams::new(sys.w().clone(), sys.v().clone())?;
    let sol = solve_dare(&dual, &noise).map_err(|e| match e {
        Error::Stabilizability(msg) => Error::Detectability(msg),
        other => other,
    })?;
    Ok(KalmanSolution { gain: -&sol.k.transpose(), sigma: sol.p, residual: sol.residual })
}
