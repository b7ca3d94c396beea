//! Partially observed systems: Kalman synthesis, the certainty-equivalent
//! observer-controller, exact cost through the lifted closed loop, and the
//! LQG suboptimality bounds.
//!
//! Sign convention: the stored Kalman gain multiplies the innovation with a
//! plus sign, `x̂' = Â x̂ + B̂ u + L̂ (y - Ĉ x̂)`, so the estimation error
//! evolves under `A - L C`. The control `u_t = K̂ x̂_t` uses measurements up
//! to `t - 1` only.

use serde::Serialize;

use crate::bounds::{dare_bound_fixed_point, BoundReport, ReportBuilder, SystemConstants};
use crate::error::{Error, Result};
use crate::linalg::{inverse, min_sym_eigenvalue, norm_scale, operator_norm, psd_factor, spectral_radius, Mat};
use crate::lqr_eval::{RolloutOptions, RolloutSummary, DIVERGENCE_NORM};
use crate::riccati::{kalman_gain, solve_dare, solve_dlyap, CostParams, KalmanSolution, LinearSystem, RiccatiSolution};
use crate::rng::GaussianStream;
use crate::transient::tau;

/// Default constant of [`lqg_gap_bound`]: `1136 · 64`.
pub const LQG_GAP_C1: f64 = 72_704.0;
/// Default constant of [`lqg_gap_bound_fast_rate`]: `C1 · 252²`, the product of
/// `C1` with the constants picked up by substituting the fixed-point bound
/// and the gain bound into `ε̄²`.
pub const LQG_FAST_RATE_C2: f64 = LQG_GAP_C1 * 63_504.0;

const SYM_TOL: f64 = 1e-10;

/// `x' = A x + B u + w`, `y = C x + v`, `w ~ N(0, W)`, `v ~ N(0, V)`, stage
/// cost `yᵀQy + uᵀRu` on the output.
#[derive(Debug, Clone, Serialize)]
pub struct LqgSystem {
    a: Mat,
    b: Mat,
    c: Mat,
    w: Mat,
    v: Mat,
    q: Mat,
    r: Mat,
}

fn dim_err(what: &str, m: &Mat, rows: usize, cols: usize) -> Error {
    Error::Dimension(format!("{what} is {}x{}, expected {rows}x{cols}", m.rows(), m.cols()))
}

fn expect_shape(what: &str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(dim_err(what, m, rows, cols));
    }
    Ok(())
}

impl LqgSystem {
    pub fn new(a: Mat, b: Mat, c: Mat, w: Mat, v: Mat, q: Mat, r: Mat) -> Result<Self> {
        let n = a.rows();
        expect_shape("A", &a, n, n)?;
        let d = b.cols();
        expect_shape("B", &b, n, d)?;
        let p = c.rows();
        expect_shape("C", &c, p, n)?;
        expect_shape("W", &w, n, n)?;
        expect_shape("V", &v, p, p)?;
        expect_shape("Q", &q, p, p)?;
        expect_shape("R", &r, d, d)?;
        for (name, m, definite) in [("W", &w, false), ("V", &v, true), ("Q", &q, false), ("R", &r, true)] {
            let min = min_sym_eigenvalue(m, SYM_TOL)?;
            let scale = norm_scale(m.max_abs());
            if min < -SYM_TOL * scale {
                return Err(Error::Cost(format!("{name} is not positive semidefinite (min eigenvalue {min:.3e})")));
            }
            if definite && min <= 1e-14 * scale {
                return Err(Error::Cost(format!("{name} is not positive definite (min eigenvalue {min:.3e})")));
            }
        }
        Ok(Self { a, b, c, w: w.symmetrize(), v: v.symmetrize(), q: q.symmetrize(), r: r.symmetrize() })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn w(&self) -> &Mat {
        &self.w
    }
    pub fn v(&self) -> &Mat {
        &self.v
    }
    pub fn q(&self) -> &Mat {
        &self.q
    }
    pub fn r(&self) -> &Mat {
        &self.r
    }
    pub fn n(&self) -> usize {
        self.a.rows()
    }
    pub fn d(&self) -> usize {
        self.b.cols()
    }
    pub fn p(&self) -> usize {
        self.c.rows()
    }

    /// `CᵀQC`.
    pub fn state_cost(&self) -> Mat {
        self.c.tr_mul(&(&self.q * &self.c)).symmetrize()
    }

    /// The full-information problem `(A, B, CᵀQC, R)`.
    pub fn lqr_problem(&self) -> Result<(LinearSystem, CostParams)> {
        Ok((LinearSystem::new(self.a.clone(), self.b.clone())?, CostParams::new(self.state_cost(), self.r.clone())?))
    }

    /// The same plant in coordinates `x ↦ T x`.
    pub fn transformed(&self, t: &Mat) -> Result<Self> {
        expect_shape("T", t, self.n(), self.n())?;
        let ti = inverse(t)?;
        Self::new(
            &(t * &self.a) * &ti,
            t * &self.b,
            &self.c * &ti,
            &(t * &self.w) * &t.transpose(),
            self.v.clone(),
            self.q.clone(),
            self.r.clone(),
        )
    }
}

/// The five matrices of the certainty-equivalent observer-controller.
#[derive(Debug, Clone, Serialize)]
pub struct ObserverController {
    pub a_hat: Mat,
    pub b_hat: Mat,
    pub c_hat: Mat,
    pub k_hat: Mat,
    pub l_hat: Mat,
}

impl ObserverController {
    /// The same controller in observer coordinates `x̂ ↦ T x̂`.
    pub fn transformed(&self, t: &Mat) -> Result<Self> {
        let ti = inverse(t)?;
        Ok(Self {
            a_hat: &(t * &self.a_hat) * &ti,
            b_hat: t * &self.b_hat,
            c_hat: &self.c_hat * &ti,
            k_hat: &self.k_hat * &ti,
            l_hat: t * &self.l_hat,
        })
    }

    fn check_against(&self, plant: &LqgSystem) -> Result<()> {
        let (n, d, p) = (plant.n(), plant.d(), plant.p());
        expect_shape("A_hat", &self.a_hat, n, n)?;
        expect_shape("B_hat", &self.b_hat, n, d)?;
        expect_shape("C_hat", &self.c_hat, p, n)?;
        expect_shape("K_hat", &self.k_hat, d, n)?;
        expect_shape("L_hat", &self.l_hat, n, p)
    }
}

/// Plant and observer stacked as `[x; x̂]`.
#[derive(Debug, Clone, Serialize)]
pub struct LiftedClosedLoop {
    /// `[[A, B K̂], [L̂ C, Â + B̂ K̂ - L̂ Ĉ]]`.
    pub m_hat: Mat,
    /// `S⁻¹ M̂ S`, in coordinates `[x; x̂ - x]`.
    pub n_hat: Mat,
    /// `blkdiag(I, L̂)`, mapping `[w; v]` into the lifted state.
    pub noise_map: Mat,
    /// `[[I, 0], [I, I]]`.
    pub s: Mat,
}

pub fn build_lifted(plant: &LqgSystem, oc: &ObserverController) -> Result<LiftedClosedLoop> {
    oc.check_against(plant)?;
    let n = plant.n();
    let eye = Mat::identity(n);
    let zero = Mat::zeros(n, n);
    let bk = plant.b() * &oc.k_hat;
    let observer = &(&oc.a_hat + &(&oc.b_hat * &oc.k_hat)) - &(&oc.l_hat * &oc.c_hat);
    let lc = &oc.l_hat * plant.c();
    let m_hat = Mat::block2x2(plant.a(), &bk, &lc, &observer);
    // S⁻¹ M S with S⁻¹ = [[I, 0], [-I, I]], written out blockwise.
    let top_left = plant.a() + &bk;
    let bottom_left = &(&(&lc + &observer) - plant.a()) - &bk;
    let bottom_right = &observer - &bk;
    let n_hat = Mat::block2x2(&top_left, &bk, &bottom_left, &bottom_right);
    Ok(LiftedClosedLoop {
        m_hat,
        n_hat,
        noise_map: Mat::block_diag(&eye, &oc.l_hat),
        s: Mat::block2x2(&eye, &zero, &eye, &eye),
    })
}

fn lifted_cost(plant: &LqgSystem, oc: &ObserverController, lifted: &LiftedClosedLoop) -> Result<f64> {
    let rho = spectral_radius(&lifted.m_hat)?;
    if rho >= 1.0 {
        return Err(Error::Stability { rho });
    }
    let noise = Mat::block_diag(plant.w(), &(&oc.l_hat * &(plant.v() * &oc.l_hat.transpose())).symmetrize());
    let sigma = solve_dlyap(&lifted.m_hat.transpose(), &noise)?;
    let weight = Mat::block_diag(&plant.state_cost(), &oc.k_hat.tr_mul(&(plant.r() * &oc.k_hat)));
    Ok((&weight * &sigma).trace() + (plant.q() * plant.v()).trace())
}

/// Exact average cost of the interconnection of `plant` and `oc`.
pub fn lqg_cost(plant: &LqgSystem, oc: &ObserverController) -> Result<f64> {
    let lifted = build_lifted(plant, oc)?;
    lifted_cost(plant, oc, &lifted)
}

#[derive(Debug, Clone, Serialize)]
pub struct LqgOptimal {
    pub k: Mat,
    pub kalman: KalmanSolution,
    /// Control Riccati solution for `(A, B, CᵀQC, R)`.
    pub lqr: RiccatiSolution,
    pub j_star: f64,
    pub oc: ObserverController,
}

impl LqgOptimal {
    pub fn p(&self) -> &Mat {
        &self.lqr.p
    }
    pub fn sigma(&self) -> &Mat {
        &self.kalman.sigma
    }
}

pub fn lqg_optimal(sys: &LqgSystem) -> Result<LqgOptimal> {
    let (lin, cost) = sys.lqr_problem()?;
    let lqr = solve_dare(&lin, &cost)?;
    let kalman = kalman_gain(sys)?;
    let oc = ObserverController {
        a_hat: sys.a().clone(),
        b_hat: sys.b().clone(),
        c_hat: sys.c().clone(),
        k_hat: lqr.k.clone(),
        l_hat: kalman.gain.clone(),
    };
    let j_star = lqg_cost(sys, &oc)?;
    Ok(LqgOptimal { k: lqr.k.clone(), kalman, lqr, j_star, oc })
}

/// `N⋆ = [[A + B K⋆, B K⋆], [0, A - L⋆ C]]`.
pub fn n_star(sys: &LqgSystem, opt: &LqgOptimal) -> Result<Mat> {
    Ok(build_lifted(sys, &opt.oc)?.n_hat)
}

/// Certainty-equivalent controller: `K̂` from the DARE on `(Â, B̂, ĈᵀQĈ, R)`.
pub fn certainty_equivalent_oc(
    a_hat: &Mat,
    b_hat: &Mat,
    c_hat: &Mat,
    l_hat: &Mat,
    q: &Mat,
    r: &Mat,
) -> Result<ObserverController> {
    let sys = LinearSystem::new(a_hat.clone(), b_hat.clone())?;
    if c_hat.cols() != sys.n() {
        return Err(dim_err("C_hat", c_hat, q.rows(), sys.n()));
    }
    let cost = CostParams::new(c_hat.tr_mul(&(q * c_hat)).symmetrize(), r.clone())?;
    let sol = solve_dare(&sys, &cost)?;
    expect_shape("L_hat", l_hat, sys.n(), c_hat.rows())?;
    Ok(ObserverController {
        a_hat: a_hat.clone(),
        b_hat: b_hat.clone(),
        c_hat: c_hat.clone(),
        k_hat: sol.k,
        l_hat: l_hat.clone(),
    })
}

/// Norm constants with `Γ⋆ = 1 + max(‖A‖, ‖B‖, ‖C‖, ‖K⋆‖, ‖L⋆‖, ‖P⋆‖)`.
pub fn lqg_constants(sys: &LqgSystem, opt: &LqgOptimal) -> Result<SystemConstants> {
    let (lin, cost) = sys.lqr_problem()?;
    Ok(SystemConstants::new(&lin, &cost, &opt.lqr)?.with_observer(operator_norm(sys.c()), operator_norm(&opt.kalman.gain)))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// Gap bound for a certainty-equivalent controller whose five matrices are
/// within `eps_bar` of the truth.
///
/// `C1 max(‖W‖, ‖V‖) (Tr(CᵀQC) + Tr(R)) τ(N⋆,γ)⁶/(1-γ²)³ Γ⋆⁶ ε̄²`, certified
/// when `ε̄ ≤ (1-γ)/(20 Γ⋆ τ(N⋆,γ))`.
pub fn lqg_gap_bound(
    plant: &LqgSystem,
    consts: &SystemConstants,
    eps_bar: f64,
    gamma: f64,
    tau_n: f64,
    c1: f64,
) -> Result<BoundReport> {
    check_gamma(gamma)?;
    if !(eps_bar.is_finite() && eps_bar >= 0.0) {
        return Err(Error::Domain(format!("eps_bar must be finite and nonnegative, got {eps_bar}")));
    }
    let g = consts.gamma_star;
    let noise = operator_norm(plant.w()).max(operator_norm(plant.v()));
    let traces = plant.state_cost().trace() + plant.r().trace();
    let shape = tau_n.powi(6) / (1.0 - gamma * gamma).powi(3);
    let bound = c1 * noise * traces * shape * g.powi(6) * eps_bar * eps_bar;
    let mut rb = ReportBuilder::new();
    rb.set("c1", c1)
        .set("eps_bar", eps_bar)
        .set("gamma", gamma)
        .set("tau_n", tau_n)
        .set("gamma_star", g)
        .set("noise", noise)
        .set("traces", traces);
    rb.require("stability", eps_bar, (1.0 - gamma) / (20.0 * g * tau_n)).require("eps_bar_le_one", eps_bar, 1.0);
    Ok(rb.finish("lqg_gap", bound))
}

/// Fast-rate LQG bound in terms of the parameter error `eps` of `A`, `B`, `C`
/// and the Kalman gain.
///
/// The report also carries the composed value `lqg_gap ∘ ε̄(eps)`, where
/// `ε̄ = 7Γ⋆³/σ̲(R) · max(eps, f(3‖C‖₊²‖Q‖₊ eps))` and `f` is the fixed-point
/// Riccati bound. Applicability needs the stated proviso on `eps`, the
/// fixed-point bound's own preconditions and the certificate of the composed
/// bound.
pub fn lqg_gap_bound_fast_rate(
    plant: &LqgSystem,
    opt: &LqgOptimal,
    eps: f64,
    gamma: f64,
    c2: f64,
) -> Result<BoundReport> {
    check_gamma(gamma)?;
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::Domain(format!("eps must be finite and nonnegative, got {eps}")));
    }
    let consts = lqg_constants(plant, opt)?;
    let nstar = n_star(plant, opt)?;
    let tau_n = tau(&nstar, gamma)?.tau;
    let g = consts.gamma_star;
    let noise = operator_norm(plant.w()).max(operator_norm(plant.v()));
    let traces = plant.state_cost().trace() + plant.r().trace();
    let norm_q = operator_norm(plant.q());
    let q_plus = norm_q + 1.0;
    let c_plus = operator_norm(plant.c()) + 1.0;
    let sr = consts.sigma_min_r;
    let one_m = 1.0 - gamma * gamma;
    let bound = c2 * noise * traces * q_plus * q_plus / (sr * sr) * g.powi(26) * tau_n.powi(10) / one_m.powi(5) * eps * eps;

    let (lin, cost) = plant.lqr_problem()?;
    let eps_riccati = 3.0 * c_plus * c_plus * q_plus * eps;
    let fp = dare_bound_fixed_point(&lin, &cost, &opt.lqr, eps_riccati, gamma)?;
    let f = fp.bound_value.max(eps);
    let eps_bar = 7.0 * g.powi(3) / sr * f;
    let composed = lqg_gap_bound(plant, &consts, eps_bar, gamma, tau_n, LQG_GAP_C1)?;

    let mut rb = ReportBuilder::new();
    rb.set("c2", c2)
        .set("eps", eps)
        .set("gamma", gamma)
        .set("tau_n", tau_n)
        .set("gamma_star", g)
        .set("eps_riccati", eps_riccati)
        .set("riccati_bound", fp.bound_value)
        .set("eps_bar", eps_bar)
        .set("composed", composed.bound_value);
    let proviso = one_m * one_m / (tau_n.powi(4) * g.powi(11) * norm_q);
    rb.require("proviso", eps, proviso)
        .require_slack("riccati", fp.applicability_margin)
        .require_slack("composed", composed.applicability_margin);
    Ok(rb.finish("lqg_gap_fast_rate", bound))
}

/// Time-averaged stage cost of the interconnection, simulated directly.
pub fn simulate_lqg_rollout(
    plant: &LqgSystem,
    oc: &ObserverController,
    horizon: usize,
    seed: u64,
    opts: RolloutOptions,
) -> Result<RolloutSummary> {
    oc.check_against(plant)?;
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let (n, d, p) = (plant.n(), plant.d(), plant.p());
    let fw = psd_factor(plant.w())?;
    let fv = psd_factor(plant.v())?;
    let obs = &(&oc.a_hat + &(&oc.b_hat * &oc.k_hat)) - &(&oc.l_hat * &oc.c_hat);
    let mut g = GaussianStream::new(seed, opts.stream);
    let mut x = if opts.zero_initial_state { vec![0.0; n] } else { g.normal_vec(n, 1.0) };
    let mut xh = vec![0.0; n];
    let (mut u, mut y) = (vec![0.0; d], vec![0.0; p]);
    let (mut xn, mut xhn) = (vec![0.0; n], vec![0.0; n]);
    let (mut zw, mut zv) = (vec![0.0; n], vec![0.0; p]);
    let mut total = 0.0;
    let mut max_norm: f64 = 0.0;
    for t in 0..opts.burn_in + horizon {
        oc.k_hat.mul_vec_into(&xh, &mut u);
        g.fill_normal(&mut zv, 1.0);
        fv.mul_vec_into(&zv, &mut y);
        plant.c().mul_vec_add(&x, &mut y);
        if t >= opts.burn_in {
            total += plant.q().quad_form(&y) + plant.r().quad_form(&u);
        }
        g.fill_normal(&mut zw, 1.0);
        fw.mul_vec_into(&zw, &mut xn);
        plant.a().mul_vec_add(&x, &mut xn);
        plant.b().mul_vec_add(&u, &mut xn);
        obs.mul_vec_into(&xh, &mut xhn);
        oc.l_hat.mul_vec_add(&y, &mut xhn);
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut xh, &mut xhn);
        let nx = x.iter().chain(&xh).map(|v| v * v).sum::<f64>().sqrt();
        if !(nx <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { step: t + 1 });
        }
        max_norm = max_norm.max(nx);
    }
    Ok(RolloutSummary {
        avg_cost: total / horizon as f64,
        steps_averaged: horizon,
        final_state_norm: x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        max_state_norm: max_norm,
    })
}
