//! Exact and Monte-Carlo evaluation of the average LQR cost of a gain.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Mat};
use crate::riccati::{solve_dlyap, CostParams, LinearSystem, RiccatiSolution};
use crate::rng::GaussianStream;

/// States whose norm exceeds this are reported as divergence.
pub const DIVERGENCE_NORM: f64 = 1e150;

fn stable_closed_loop(sys: &LinearSystem, k: &Mat) -> Result<Mat> {
    let l = sys.closed_loop(k)?;
    let rho = spectral_radius(&l)?;
    if rho >= 1.0 {
        return Err(Error::Stability { rho });
    }
    Ok(l)
}

/// Stationary state covariance `Σ(K) = Σ_k L^k σw² (L^k)ᵀ` with `L = A + BK`.
pub fn stationary_covariance(sys: &LinearSystem, k: &Mat, sigma_w: f64) -> Result<Mat> {
    let l = stable_closed_loop(sys, k)?;
    solve_dlyap(&l.transpose(), &Mat::identity(sys.n()).scale(sigma_w * sigma_w))
}

/// Average infinite-horizon cost `σw² Tr(P_K)` where `P_K` is the value
/// matrix of the gain `K`.
pub fn cost_of_gain(sys: &LinearSystem, cost: &CostParams, k: &Mat, sigma_w: f64) -> Result<f64> {
    cost.check_against(sys)?;
    let l = stable_closed_loop(sys, k)?;
    let m = (cost.q() + &k.tr_mul(&(cost.r() * k))).symmetrize();
    Ok(sigma_w * sigma_w * solve_dlyap(&l, &m)?.trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub j_star: f64,
    pub j_hat: f64,
    /// `Tr(Σ(K)(K - K⋆)ᵀ(R + BᵀP⋆B)(K - K⋆))`.
    pub gap: f64,
    /// `J(K) - J(K⋆)` from two separate cost evaluations.
    pub gap_difference: f64,
    pub sigma_k: Mat,
    pub method: GapMethod,
}

/// Suboptimality gap of `K` by the second-order expansion around `K⋆`.
pub fn exact_gap(
    sys: &LinearSystem,
    cost: &CostParams,
    sol: &RiccatiSolution,
    k: &Mat,
    sigma_w: f64,
) -> Result<GapReport> {
    let sigma_k = stationary_covariance(sys, k, sigma_w)?;
    let dk = k - &sol.k;
    let b = sys.b();
    let h = cost.r() + &b.tr_mul(&(&sol.p * b));
    let gap = (&sigma_k * &dk.tr_mul(&(&h * &dk))).trace();
    let j_hat = cost_of_gain(sys, cost, k, sigma_w)?;
    let j_star = cost_of_gain(sys, cost, &sol.k, sigma_w)?;
    Ok(GapReport { j_star, j_hat, gap, gap_difference: j_hat - j_star, sigma_k, method: GapMethod::Exact })
}

#[derive(Debug, Clone, Copy)]
pub struct RolloutOptions {
    /// Steps simulated and discarded before averaging.
    pub burn_in: usize,
    /// Start from `x₀ = 0` instead of `x₀ ~ N(0, I)`.
    pub zero_initial_state: bool,
    pub stream: u64,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self { burn_in: 1000, zero_initial_state: false, stream: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RolloutSummary {
    pub avg_cost: f64,
    pub steps_averaged: usize,
    pub final_state_norm: f64,
    pub max_state_norm: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Time-averaged stage cost of `u = K x` over `horizon` steps after the burn-in.
pub fn simulate_rollout(
    sys: &LinearSystem,
    cost: &CostParams,
    k: &Mat,
    sigma_w: f64,
    horizon: usize,
    seed: u64,
    opts: RolloutOptions,
) -> Result<RolloutSummary> {
    cost.check_against(sys)?;
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let l = sys.closed_loop(k)?;
    let (n, d) = (sys.n(), sys.d());
    let mut g = GaussianStream::new(seed, opts.stream);
    let mut x = if opts.zero_initial_state { vec![0.0; n] } else { g.normal_vec(n, 1.0) };
    let mut next = vec![0.0; n];
    let mut u = vec![0.0; d];
    let mut total = 0.0;
    let mut max_norm = norm2(&x);
    for t in 0..opts.burn_in + horizon {
        if t >= opts.burn_in {
            k.mul_vec_into(&x, &mut u);
            total += cost.q().quad_form(&x) + cost.r().quad_form(&u);
        }
        g.fill_normal(&mut next, sigma_w);
        l.mul_vec_add(&x, &mut next);
        std::mem::swap(&mut x, &mut next);
        let nx = norm2(&x);
        if !(nx <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { step: t + 1 });
        }
        max_norm = max_norm.max(nx);
    }
    Ok(RolloutSummary {
        avg_cost: total / horizon as f64,
        steps_averaged: horizon,
        final_state_norm: norm2(&x),
        max_state_norm: max_norm,
    })
}
