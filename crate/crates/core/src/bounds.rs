//! Riccati perturbation bounds, the gain-perturbation and stability
//! certificates, and suboptimality-gap bounds for the certainty-equivalent
//! LQR controller.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{inverse, min_singular_value, operator_norm, spectral_radius};
use crate::riccati::{CostParams, LinearSystem, RiccatiSolution};
use crate::transient::{controllability, tau, tau_with};

/// Default constant of the composed LQR fast-rate bound: `200 · 32²`.
pub const FAST_RATE_C0: f64 = 204_800.0;

/// `‖·‖ + 1` of the matrices entering the fixed-point bound.
#[derive(Debug, Clone, Serialize)]
pub struct PlusNorms {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub r_inv: f64,
    pub l: f64,
}

/// Norm constants of an LQR (or LQG) instance.
#[derive(Debug, Clone, Serialize)]
pub struct SystemConstants {
    pub n: usize,
    pub d: usize,
    /// `1 + max(‖A‖, ‖B‖, ‖P‖, ‖K‖)`, extended by `‖C‖` and the Kalman gain for LQG.
    pub gamma_star: f64,
    /// `‖B R⁻¹ Bᵀ‖`.
    pub s_norm: f64,
    pub plus_norms: PlusNorms,
    pub norm_a: f64,
    pub norm_b: f64,
    pub norm_p: f64,
    pub norm_k: f64,
    pub norm_l: f64,
    pub norm_q: f64,
    pub norm_r: f64,
    pub sigma_min_q: f64,
    pub sigma_min_r: f64,
    pub sigma_min_p: f64,
    /// `‖R + BᵀPB‖`.
    pub norm_r_bpb: f64,
    pub norm_c: Option<f64>,
    pub norm_kalman: Option<f64>,
}

impl SystemConstants {
    pub fn new(sys: &LinearSystem, cost: &CostParams, sol: &RiccatiSolution) -> Result<Self> {
        cost.check_against(sys)?;
        let (a, b) = (sys.a(), sys.b());
        let r_inv = inverse(cost.r())?;
        let s = b * &r_inv.matmul(&b.transpose());
        let norm_a = operator_norm(a);
        let norm_b = operator_norm(b);
        let norm_p = operator_norm(&sol.p);
        let norm_k = operator_norm(&sol.k);
        let norm_l = operator_norm(&sol.l);
        Ok(Self {
            n: sys.n(),
            d: sys.d(),
            gamma_star: 1.0 + norm_a.max(norm_b).max(norm_p).max(norm_k),
            s_norm: operator_norm(&s),
            plus_norms: PlusNorms {
                a: norm_a + 1.0,
                b: norm_b + 1.0,
                p: norm_p + 1.0,
                r_inv: operator_norm(&r_inv) + 1.0,
                l: norm_l + 1.0,
            },
            norm_a,
            norm_b,
            norm_p,
            norm_k,
            norm_l,
            norm_q: operator_norm(cost.q()),
            norm_r: operator_norm(cost.r()),
            sigma_min_q: min_singular_value(cost.q()),
            sigma_min_r: min_singular_value(cost.r()),
            sigma_min_p: min_singular_value(&sol.p),
            norm_r_bpb: operator_norm(&(cost.r() + &b.tr_mul(&(&sol.p * b)))),
            norm_c: None,
            norm_kalman: None,
        })
    }

    /// Extend `Γ⋆` with the output matrix and the Kalman gain.
    pub fn with_observer(mut self, norm_c: f64, norm_kalman: f64) -> Self {
        self.gamma_star = self.gamma_star.max(1.0 + norm_c).max(1.0 + norm_kalman);
        self.norm_c = Some(norm_c);
        self.norm_kalman = Some(norm_kalman);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub bound_value: f64,
    pub applicable: bool,
    /// Smallest relative slack `1 - lhs/rhs` among the preconditions.
    pub applicability_margin: f64,
    pub components: BTreeMap<String, f64>,
}

/// Accumulates named factors and `lhs ≤ rhs` preconditions for a report.
#[derive(Debug, Default)]
pub(crate) struct ReportBuilder {
    components: BTreeMap<String, f64>,
    margin: f64,
}

impl ReportBuilder {
    pub(crate) fn new() -> Self {
        Self { components: BTreeMap::new(), margin: f64::INFINITY }
    }

    pub(crate) fn set(&mut self, name: &str, value: f64) -> &mut Self {
        self.components.insert(name.to_string(), value);
        self
    }

    /// Record the precondition `lhs ≤ rhs`.
    pub(crate) fn require(&mut self, name: &str, lhs: f64, rhs: f64) -> &mut Self {
        let slack = if lhs <= rhs {
            if rhs > 0.0 {
                1.0 - lhs / rhs
            } else {
                0.0
            }
        } else if rhs > 0.0 {
            1.0 - lhs / rhs
        } else {
            -f64::INFINITY
        };
        let slack = if slack.is_nan() { -f64::INFINITY } else { slack };
        self.components.insert(format!("slack_{name}"), slack);
        self.margin = self.margin.min(slack);
        self
    }

    /// Record a slack computed elsewhere, such as another report's margin.
    pub(crate) fn require_slack(&mut self, name: &str, slack: f64) -> &mut Self {
        let slack = if slack.is_nan() { -f64::INFINITY } else { slack };
        self.components.insert(format!("slack_{name}"), slack);
        self.margin = self.margin.min(slack);
        self
    }

    pub(crate) fn finish(self, name: &str, bound_value: f64) -> BoundReport {
        let margin = if self.margin.is_infinite() && self.margin > 0.0 { 1.0 } else { self.margin };
        BoundReport {
            name: name.to_string(),
            bound_value,
            applicable: margin >= 0.0 && bound_value.is_finite(),
            applicability_margin: margin,
            components: self.components,
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::Domain(format!("eps must be finite and nonnegative, got {eps}")));
    }
    Ok(())
}

fn check_gamma_open(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// Fixed-point (operator) bound on `‖P̂ - P⋆‖` for perturbations of `A`, `B`
/// and `Q` of size at most `eps`, at a radius `gamma ≥ ρ(L⋆)`.
///
/// When `σ̲(P⋆) < 1` the cost is rescaled by `c = 1/σ̲(P⋆)` (which leaves the
/// controller unchanged), the bound is evaluated for the scaled problem with
/// `c·eps` and mapped back by `1/c`.
pub fn dare_bound_fixed_point(
    sys: &LinearSystem,
    cost: &CostParams,
    sol: &RiccatiSolution,
    eps: f64,
    gamma: f64,
) -> Result<BoundReport> {
    check_eps(eps)?;
    check_gamma_open(gamma)?;
    let rho_l = spectral_radius(&sol.l)?;
    if gamma < rho_l {
        return Err(Error::Domain(format!("gamma = {gamma} is below rho(L) = {rho_l}")));
    }
    let sigma_p = min_singular_value(&sol.p);
    if sigma_p <= 0.0 {
        return Err(Error::Domain("P is singular, so it cannot be rescaled to sigma_min(P) >= 1".into()));
    }
    let c = if sigma_p < 1.0 { 1.0 / sigma_p } else { 1.0 };
    let consts = SystemConstants::new(sys, cost, sol)?;
    let tau_l = tau_with(&sol.l, gamma, true)?.tau;

    let eps_s = c * eps;
    let p_plus = c * consts.norm_p + 1.0;
    let r_inv_plus = (consts.plus_norms.r_inv - 1.0) / c + 1.0;
    let s_norm = consts.s_norm / c;
    let pn = &consts.plus_norms;
    let ratio = tau_l * tau_l / (1.0 - gamma * gamma);
    let nu = 6.0 * eps_s * ratio * pn.a * pn.a * p_plus * p_plus * pn.b * r_inv_plus;

    let mut rb = ReportBuilder::new();
    rb.set("eps", eps)
        .set("gamma", gamma)
        .set("tau_l", tau_l)
        .set("rho_l", rho_l)
        .set("sigma_min_p", sigma_p)
        .set("rescale", c)
        .set("eps_scaled", eps_s)
        .set("nu_scaled", nu)
        .set("s_norm", s_norm)
        .set("norm_l", consts.norm_l)
        .set("plus_a", pn.a)
        .set("plus_b", pn.b)
        .set("plus_p", p_plus)
        .set("plus_r_inv", r_inv_plus);
    let contraction_rhs = (1.0 - gamma * gamma) / (128.0 * tau_l * tau_l * consts.norm_l * consts.norm_l * s_norm);
    rb.require("contraction", nu, contraction_rhs)
        .require("nu_s_inv", nu * s_norm, 1.0)
        .require("nu_half", nu, 0.5)
        .require("eps_one", eps_s, 1.0)
        .require("eps_norm_b", eps_s, consts.norm_b)
        // The perturbation part of the Lipschitz constant must also stay below 1/4.
        .require("contraction_eps", (32.0 / 6.0) * nu * p_plus * pn.b * pn.b * r_inv_plus, 0.25);
    Ok(rb.finish("dare_fixed_point", nu / c))
}

/// Direct bound on `‖P̂ - P⋆‖` from `(ℓ, ν)`-controllability at a radius `rho ≥ ρ(A)`.
pub fn dare_bound_direct(
    sys: &LinearSystem,
    cost: &CostParams,
    sol: &RiccatiSolution,
    eps: f64,
    rho: f64,
    ell: usize,
) -> Result<BoundReport> {
    check_eps(eps)?;
    let tau_a = tau_with(sys.a(), rho, true)?.tau;
    let ctrl = controllability(sys, ell)?;
    if !ctrl.is_ell_nu_controllable {
        return Err(Error::Controllability { nu: ctrl.nu });
    }
    let consts = SystemConstants::new(sys, cost, sol)?;
    if consts.sigma_min_q <= 0.0 {
        return Err(Error::Cost("the direct bound needs Q positive definite".into()));
    }
    let nu = ctrl.nu;
    let beta = (eps * tau_a + rho).max(1.0);
    let cond = consts.norm_q.max(consts.norm_r) / consts.sigma_min_r.min(consts.sigma_min_q);
    let l = ell as f64;
    let bound = 32.0
        * eps
        * l.powf(2.5)
        * tau_a.powi(3)
        * beta.powi(2 * (ell as i32 - 1))
        * (1.0 + 1.0 / nu)
        * (1.0 + consts.norm_b).powi(2)
        * consts.norm_p
        * cond;
    let mut rb = ReportBuilder::new();
    rb.set("eps", eps)
        .set("rho", rho)
        .set("ell", l)
        .set("tau_a", tau_a)
        .set("beta", beta)
        .set("nu", nu)
        .set("cond", cond)
        .set("norm_b", consts.norm_b)
        .set("norm_p", consts.norm_p);
    rb.require("bound_le_one", bound, 1.0).require("sigma_min_r", 1.0, consts.sigma_min_r);
    Ok(rb.finish("dare_direct", bound))
}

/// `7 f Γ³ / σ̲(R)`: bound on `‖K̂ - K⋆‖` when `A`, `B`, `P` move by at most `f < 1`.
pub fn gain_perturb_bound(consts: &SystemConstants, f_eps: f64, sigma_min_r: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&f_eps) {
        return Err(Error::Domain(format!("the gain bound needs 0 <= f < 1, got {f_eps}")));
    }
    if sigma_min_r <= 0.0 {
        return Err(Error::Domain(format!("sigma_min(R) must be positive, got {sigma_min_r}")));
    }
    Ok(7.0 * f_eps * consts.gamma_star.powi(3) / sigma_min_r)
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityCertificate {
    pub stable_certified: bool,
    /// `τ(L⋆, γ)`; bounds `τ(A + B K̂, (1 + γ)/2)` when certified.
    pub new_tau_bound: f64,
    /// `7 f Γ³ / σ̲(R)`, infinite when `f ≥ 1`.
    pub k_gap_bound: f64,
    pub margin: f64,
}

/// Certify that every gain within the gain-perturbation bound of `K⋆`
/// stabilizes `(A, B)` with `τ(A + B K̂, (1 + γ)/2) ≤ τ(L⋆, γ)`.
///
/// The closed loop moves by `B(K̂ - K⋆)`, so the test is
/// `‖B‖ · 7fΓ³/σ̲(R) · τ(L⋆, γ) ≤ (1 - γ)/2`.
pub fn stability_margin_check(
    consts: &SystemConstants,
    sol: &RiccatiSolution,
    f_eps: f64,
    gamma: f64,
) -> Result<StabilityCertificate> {
    check_gamma_open(gamma)?;
    check_eps(f_eps)?;
    let rho_l = spectral_radius(&sol.l)?;
    if gamma <= rho_l {
        return Err(Error::Domain(format!("gamma = {gamma} must exceed rho(L) = {rho_l}")));
    }
    let tau_l = tau(&sol.l, gamma)?.tau;
    let k_gap_bound = gain_perturb_bound(consts, f_eps, consts.sigma_min_r).unwrap_or(f64::INFINITY);
    let lhs = consts.norm_b * k_gap_bound * tau_l;
    let rhs = 0.5 * (1.0 - gamma);
    Ok(StabilityCertificate {
        stable_certified: lhs <= rhs,
        new_tau_bound: tau_l,
        k_gap_bound,
        margin: 1.0 - lhs / rhs,
    })
}

/// Suboptimality gap of the certainty-equivalent gain given `‖P̂ - P⋆‖ ≤ f`
/// (with `f ≥ eps`): `200 σw² d Γ⋆⁹ τ_L²/(1 - γ²) f²`.
///
/// Applicable when the value is below `σw²` and the preconditions used in the
/// derivation hold: the stability certificate, `f < 1`, `σ̲(R) ≥ 1`,
/// `‖R + BᵀPB‖ ≤ Γ⋆³` and `d ≤ n`.
pub fn gap_bound_meta(
    consts: &SystemConstants,
    f_eps: f64,
    gamma: f64,
    tau_l: f64,
    d: usize,
    sigma_w: f64,
) -> Result<BoundReport> {
    check_eps(f_eps)?;
    check_gamma_open(gamma)?;
    let g = consts.gamma_star;
    let ratio = tau_l * tau_l / (1.0 - gamma * gamma);
    let sw2 = sigma_w * sigma_w;
    let bound = 200.0 * sw2 * d as f64 * g.powi(9) * ratio * f_eps * f_eps;
    let k_gap = 7.0 * f_eps * g.powi(3) / consts.sigma_min_r;
    let mut rb = ReportBuilder::new();
    rb.set("f_eps", f_eps)
        .set("gamma", gamma)
        .set("tau_l", tau_l)
        .set("gamma_star", g)
        .set("d", d as f64)
        .set("sigma_w", sigma_w)
        .set("k_gap_bound", k_gap);
    rb.require("bound_below_sigma_w2", bound, sw2)
        .require("stability", consts.norm_b * k_gap * tau_l, 0.5 * (1.0 - gamma))
        .require("f_below_one", f_eps, 1.0 - f64::EPSILON)
        .require("sigma_min_r", 1.0, consts.sigma_min_r)
        .require("r_bpb_le_gamma3", consts.norm_r_bpb, g.powi(3))
        .require("d_le_n", d as f64, consts.n as f64);
    Ok(rb.finish("gap_meta", bound))
}

/// Fast-rate gap bound obtained by feeding the direct Riccati bound into the
/// meta bound, with leading constant `c0`.
#[allow(clippy::too_many_arguments)]
pub fn gap_bound_fast_rate(
    sys: &LinearSystem,
    cost: &CostParams,
    sol: &RiccatiSolution,
    eps: f64,
    rho: f64,
    ell: usize,
    gamma: f64,
    sigma_w: f64,
    c0: f64,
) -> Result<BoundReport> {
    check_eps(eps)?;
    let direct = dare_bound_direct(sys, cost, sol, eps, rho, ell)?;
    let consts = SystemConstants::new(sys, cost, sol)?;
    let tau_l = tau(&sol.l, gamma)?.tau;
    let meta = gap_bound_meta(&consts, direct.bound_value.max(eps), gamma, tau_l, sys.d(), sigma_w)?;
    let c = &direct.components;
    let l = ell as f64;
    let g = consts.gamma_star;
    let cond2 = consts.norm_q.max(consts.norm_r).powi(2) / consts.sigma_min_q.min(consts.sigma_min_r).powi(2);
    let bound = c0
        * sigma_w
        * sigma_w
        * sys.d() as f64
        * l.powi(5)
        * g.powi(15)
        * c["tau_a"].powi(6)
        * c["beta"].powi(4 * (ell as i32 - 1))
        * (tau_l * tau_l / (1.0 - gamma * gamma))
        * cond2
        * (1.0 + 1.0 / c["nu"]).powi(2)
        * eps
        * eps;
    let mut rb = ReportBuilder::new();
    rb.set("c0", c0)
        .set("eps", eps)
        .set("rho", rho)
        .set("ell", l)
        .set("gamma", gamma)
        .set("tau_a", c["tau_a"])
        .set("tau_l", tau_l)
        .set("beta", c["beta"])
        .set("nu", c["nu"])
        .set("cond_sq", cond2)
        .set("gamma_star", g)
        .set("direct_bound", direct.bound_value)
        .set("meta_of_direct", meta.bound_value);
    rb.require_slack("direct", direct.applicability_margin)
        .require_slack("meta", meta.applicability_margin);
    Ok(rb.finish("gap_fast_rate", bound))
}
