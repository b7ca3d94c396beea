//! ε-greedy adaptive LQR with least-squares identification on doubling epochs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, spectral_radius, sym_eigenvalues, Lu, Mat};
use crate::lqr_eval::{cost_of_gain, DIVERGENCE_NORM};
use crate::riccati::{solve_dare, CostParams, LinearSystem};
use crate::rng::GaussianStream;
use crate::stats::{ols, LineFit};
use crate::transient::tau;

/// Floor applied to nonpositive regret before taking logs.
pub const REGRET_FLOOR: f64 = 1e-9;

const NOISE_STREAM: u64 = 0;
const EXPLORATION_STREAM: u64 = 1;
const INITIAL_STATE_STREAM: u64 = 2;
const GAMMA_GRID: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct AdaptiveConfig {
    pub horizon: usize,
    /// Length of the first epoch; epoch `i` lasts `epoch_base · 2^i` steps.
    pub epoch_base: usize,
    pub exploration_exponent: f64,
    pub exploration_scale: f64,
    pub ridge_lambda: f64,
    pub seed: u64,
    pub k0: Mat,
    pub sigma_w: f64,
    /// Also run `K⋆` on the same process noise and report the cost difference.
    pub paired_baseline: bool,
    /// Multiplier of the least-squares error estimate used by the safety check.
    pub confidence_scale: f64,
}

impl AdaptiveConfig {
    pub fn new(horizon: usize, k0: Mat, seed: u64) -> Self {
        Self {
            horizon,
            epoch_base: 200,
            exploration_exponent: 0.5,
            exploration_scale: 1.0,
            ridge_lambda: 1e-6,
            seed,
            k0,
            sigma_w: 1.0,
            paired_baseline: true,
            confidence_scale: 1.0,
        }
    }

    fn validate(&self, sys: &LinearSystem) -> Result<()> {
        if !(self.exploration_exponent > 0.0 && self.exploration_exponent < 1.0) {
            return Err(Error::Domain(format!(
                "exploration exponent must lie in (0, 1), got {}",
                self.exploration_exponent
            )));
        }
        if self.horizon == 0 || self.epoch_base == 0 {
            return Err(Error::Domain("horizon and epoch base must be positive".into()));
        }
        for (name, v) in [
            ("exploration scale", self.exploration_scale),
            ("ridge lambda", self.ridge_lambda),
            ("sigma_w", self.sigma_w),
            ("confidence scale", self.confidence_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        let rho = spectral_radius(&sys.closed_loop(&self.k0)?)?;
        if rho >= 1.0 {
            return Err(Error::Stability { rho });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LsEstimate {
    pub a_hat: Mat,
    pub b_hat: Mat,
    /// Smallest eigenvalue of `Σ z zᵀ`, `z = [x; u]`, without the ridge term.
    pub cov_min_eig: f64,
}

/// Running sums for the ridge regression of `x'` on `[x; u]`.
#[derive(Debug, Clone)]
pub struct Regression {
    n: usize,
    d: usize,
    gram: Mat,
    cross: Mat,
    count: usize,
    z: Vec<f64>,
}

impl Regression {
    pub fn new(n: usize, d: usize) -> Self {
        Self { n, d, gram: Mat::zeros(n + d, n + d), cross: Mat::zeros(n + d, n), count: 0, z: vec![0.0; n + d] }
    }

    pub fn push(&mut self, x: &[f64], u: &[f64], x_next: &[f64]) {
        let m = self.n + self.d;
        self.z[..self.n].copy_from_slice(x);
        self.z[self.n..].copy_from_slice(u);
        for i in 0..m {
            let zi = self.z[i];
            for j in 0..m {
                self.gram[(i, j)] += zi * self.z[j];
            }
            for (j, xn) in x_next.iter().enumerate() {
                self.cross[(i, j)] += zi * xn;
            }
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn estimate(&self, lambda: f64) -> Result<LsEstimate> {
        if self.count < self.n + self.d {
            return Err(Error::Domain(format!(
                "need at least n + d = {} samples, got {}",
                self.n + self.d,
                self.count
            )));
        }
        let m = self.n + self.d;
        let g = &self.gram + &Mat::identity(m).scale(lambda);
        let theta_t = Lu::factor(&g)?.solve(&self.cross)?;
        Ok(LsEstimate {
            a_hat: theta_t.submatrix(0, 0, self.n, self.n).transpose(),
            b_hat: theta_t.submatrix(self.n, 0, self.d, self.n).transpose(),
            cov_min_eig: sym_eigenvalues(&self.gram.symmetrize())?[0],
        })
    }
}

/// Ridge estimate of `(A, B)` from `states[t+1] ≈ A states[t] + B inputs[t]`.
pub fn least_squares_id(states: &[Vec<f64>], inputs: &[Vec<f64>], ridge_lambda: f64) -> Result<LsEstimate> {
    if states.len() != inputs.len() + 1 {
        return Err(Error::Dimension(format!(
            "expected one more state than inputs, got {} states and {} inputs",
            states.len(),
            inputs.len()
        )));
    }
    if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
        return Err(Error::Domain(format!("ridge lambda must be nonnegative, got {ridge_lambda}")));
    }
    let n = states[0].len();
    let d = inputs.first().map_or(0, |u| u.len());
    let mut reg = Regression::new(n, d);
    for (t, u) in inputs.iter().enumerate() {
        if states[t].len() != n || states[t + 1].len() != n || u.len() != d {
            return Err(Error::Dimension(format!("sample {t} has inconsistent dimensions")));
        }
        reg.push(&states[t], u, &states[t + 1]);
    }
    reg.estimate(ridge_lambda)
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    /// Step at which the epoch ended and the gain was redesigned.
    pub t_end: usize,
    /// `‖[Â - A, B̂ - B]‖`.
    pub param_error: f64,
    /// Error estimate used by the safety check.
    pub eps_hat: f64,
    /// Whether the redesigned gain passed the check.
    pub accepted: bool,
    /// Gain executed during the next epoch.
    pub gain: Mat,
    /// `ρ(A + B K)` of the executed gain on the true system.
    pub executed_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegretTrace {
    pub j_star: f64,
    pub cum_cost: Vec<f64>,
    /// `cum_cost(t) - t J⋆`.
    pub regret: Vec<f64>,
    /// `cum_cost(t)` minus the cumulative cost of `K⋆` on the same noise.
    pub regret_paired: Option<Vec<f64>>,
    pub epochs: Vec<EpochRecord>,
    /// Fit of `regret` over the second half of the horizon.
    pub slope_fit: Option<LineFit>,
    pub slope_fit_paired: Option<LineFit>,
}

/// Accept `k` if the estimated closed loop keeps a margin against the
/// estimation error: for some `γ ∈ (ρ(Â + B̂K), 1)`,
/// `τ(Â + B̂K, γ) · ε̂ (1 + ‖K‖) ≤ (1 - γ)/2`.
fn certify_estimate(est: &LsEstimate, k: &Mat, eps_hat: f64) -> Result<bool> {
    let l_hat = &est.a_hat + &(&est.b_hat * k);
    let rho = spectral_radius(&l_hat)?;
    if rho >= 1.0 {
        return Ok(false);
    }
    let delta = eps_hat * (1.0 + operator_norm(k));
    for i in 1..GAMMA_GRID {
        let gamma = rho + (1.0 - rho) * i as f64 / GAMMA_GRID as f64;
        if tau(&l_hat, gamma)?.tau * delta <= 0.5 * (1.0 - gamma) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn state_ok(x: &[f64], step: usize) -> Result<()> {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(nx <= DIVERGENCE_NORM) {
        return Err(Error::Divergence { step });
    }
    Ok(())
}

/// Play `u = K_i x + η` with `η ~ N(0, σ²_η,t I)`, `σ²_η,t = scale σw² t^-α`,
/// re-identifying `(A, B)` from all past data at every epoch boundary.
///
/// A redesigned gain replaces the current one only if it passes the margin
/// test against the least-squares error estimate
/// `ε̂ = c σw √(n + d) / √λ_min(Σ z zᵀ + λI)`.
pub fn run_adaptive(sys: &LinearSystem, cost: &CostParams, config: &AdaptiveConfig) -> Result<RegretTrace> {
    cost.check_against(sys)?;
    config.validate(sys)?;
    let (n, d) = (sys.n(), sys.d());
    let sol = solve_dare(sys, cost)?;
    let j_star = cost_of_gain(sys, cost, &sol.k, config.sigma_w)?;
    let true_theta = Mat::hstack(&[sys.a().clone(), sys.b().clone()]);

    let mut noise = GaussianStream::new(config.seed, NOISE_STREAM);
    let mut explore = GaussianStream::new(config.seed, EXPLORATION_STREAM);
    let mut x = GaussianStream::new(config.seed, INITIAL_STATE_STREAM).normal_vec(n, 1.0);
    let mut x_base = x.clone();

    let mut k = config.k0.clone();
    let mut reg = Regression::new(n, d);
    let (mut u, mut u_base) = (vec![0.0; d], vec![0.0; d]);
    let (mut w, mut next, mut next_base) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut eta = vec![0.0; d];

    let t_max = config.horizon;
    let mut cum_cost = Vec::with_capacity(t_max);
    let mut regret = Vec::with_capacity(t_max);
    let mut paired = config.paired_baseline.then(|| Vec::with_capacity(t_max));
    let (mut cum, mut cum_base) = (0.0, 0.0);
    let mut epochs = Vec::new();
    let mut epoch_len = config.epoch_base;
    let mut boundary = config.epoch_base;
    let sw2 = config.sigma_w * config.sigma_w;

    for t in 1..=t_max {
        let sd = (config.exploration_scale * sw2 * (t as f64).powf(-config.exploration_exponent)).sqrt();
        explore.fill_normal(&mut eta, sd);
        k.mul_vec_into(&x, &mut u);
        for (ui, ei) in u.iter_mut().zip(&eta) {
            *ui += ei;
        }
        cum += cost.q().quad_form(&x) + cost.r().quad_form(&u);
        noise.fill_normal(&mut w, config.sigma_w);
        next.copy_from_slice(&w);
        sys.a().mul_vec_add(&x, &mut next);
        sys.b().mul_vec_add(&u, &mut next);
        reg.push(&x, &u, &next);
        std::mem::swap(&mut x, &mut next);
        state_ok(&x, t)?;

        if let Some(p) = paired.as_mut() {
            sol.k.mul_vec_into(&x_base, &mut u_base);
            cum_base += cost.q().quad_form(&x_base) + cost.r().quad_form(&u_base);
            next_base.copy_from_slice(&w);
            sol.l.mul_vec_add(&x_base, &mut next_base);
            std::mem::swap(&mut x_base, &mut next_base);
            p.push(cum - cum_base);
        }
        cum_cost.push(cum);
        regret.push(cum - t as f64 * j_star);

        if t == boundary && t < t_max {
            let est = reg.estimate(config.ridge_lambda)?;
            let err = operator_norm(&(&Mat::hstack(&[est.a_hat.clone(), est.b_hat.clone()]) - &true_theta));
            let lambda_min = (est.cov_min_eig + config.ridge_lambda).max(f64::MIN_POSITIVE);
            let eps_hat = config.confidence_scale * config.sigma_w * ((n + d) as f64).sqrt() / lambda_min.sqrt();
            let candidate = LinearSystem::new(est.a_hat.clone(), est.b_hat.clone())
                .and_then(|s| solve_dare(&s, cost))
                .ok()
                .map(|s| s.k);
            let accepted = match &candidate {
                Some(kn) => certify_estimate(&est, kn, eps_hat).unwrap_or(false),
                None => false,
            };
            if accepted {
                k = candidate.expect("accepted gains exist");
            }
            epochs.push(EpochRecord {
                t_end: t,
                param_error: err,
                eps_hat,
                accepted,
                gain: k.clone(),
                executed_rho: spectral_radius(&sys.closed_loop(&k)?)?,
            });
            epoch_len *= 2;
            boundary += epoch_len;
        }
    }
    let slope_fit = fit_regret_slope(&regret, 0.5).ok();
    let slope_fit_paired = paired.as_deref().and_then(|p| fit_regret_slope(p, 0.5).ok());
    Ok(RegretTrace { j_star, cum_cost, regret, regret_paired: paired, epochs, slope_fit, slope_fit_paired })
}

/// OLS of `log max(regret(t), 1e-9)` on `log t` over the trailing `window`
/// fraction of the horizon, with `t` starting at 1.
pub fn fit_regret_slope(regret: &[f64], window: f64) -> Result<LineFit> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Domain(format!("window must lie in (0, 1], got {window}")));
    }
    let t_max = regret.len();
    let start = ((1.0 - window) * t_max as f64).floor() as usize;
    let tail = &regret[start.min(t_max)..];
    if tail.iter().all(|r| !(*r > 0.0)) {
        return Err(Error::Fit("regret is nonpositive throughout the window".into()));
    }
    let lx: Vec<f64> = (start + 1..=t_max).map(|t| (t as f64).ln()).collect();
    let ly: Vec<f64> = tail.iter().map(|r| r.max(REGRET_FLOOR).ln()).collect();
    ols(&lx, &ly)
}
