#![allow(dead_code)]

use certeq::bounds::{dare_bound_direct, dare_bound_fixed_point, gap_bound_meta, gain_perturb_bound, SystemConstants};
use certeq::experiments::{lqg_draw, minimal_ell};
use certeq::linalg::{operator_norm, spectral_radius, Mat};
use certeq::lqg::{lqg_constants, lqg_gap_bound, lqg_optimal, n_star, LqgSystem, LQG_GAP_C1};
use certeq::lqr_eval::exact_gap;
use certeq::random;
use certeq::riccati::{solve_dare, CostParams, LinearSystem, RiccatiSolution};
use certeq::rng::GaussianStream;
use certeq::transient::{default_gamma, default_rho, tau};

/// Tally of a randomized validity check.
#[derive(Debug, Default, Clone)]
pub struct Tally {
    pub applicable: usize,
    pub violations: usize,
    /// Largest `true / bound` seen.
    pub worst_ratio: f64,
}

impl Tally {
    pub fn record(&mut self, truth: f64, bound: f64) {
        self.applicable += 1;
        if truth > bound {
            self.violations += 1;
        }
        if bound > 0.0 {
            self.worst_ratio = self.worst_ratio.max(truth / bound);
        }
    }
}

pub fn identity_cost(n: usize, d: usize) -> CostParams {
    CostParams::new(Mat::identity(n), Mat::identity(d)).unwrap()
}

/// Small, well-conditioned stable instance with `Q = R = I`.
pub fn benign_lqr(g: &mut GaussianStream) -> (LinearSystem, CostParams, RiccatiSolution) {
    loop {
        let n = 2 + g.below(2);
        let d = 1 + g.below(n);
        let sys = random::system(g, n, d, 0.2, 0.9);
        let cost = identity_cost(n, d);
        if let Ok(sol) = solve_dare(&sys, &cost) {
            if minimal_ell(&sys).is_ok() {
                return (sys, cost, sol);
            }
        }
    }
}

pub const EPS_LADDER: [f64; 9] = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6, 1e-7, 1e-8];

pub struct LqrBoundTallies {
    pub fixed_point: Tally,
    pub direct: Tally,
    pub gain: Tally,
    pub meta: Tally,
}

fn perturbed(sys: &LinearSystem, eps: f64, g: &mut GaussianStream) -> LinearSystem {
    let (n, d) = (sys.n(), sys.d());
    let a = sys.a() + &random::direction(g, n, n, eps);
    let b = sys.b() + &random::direction(g, n, d, eps);
    LinearSystem::new(a, b).unwrap()
}

/// Checks the fixed-point and direct Riccati bounds, the gain bound and the
/// meta gap bound on random instances until each has `target` applicable cases.
pub fn lqr_bound_suite(target: usize, seed: u64) -> LqrBoundTallies {
    let mut t = LqrBoundTallies {
        fixed_point: Tally::default(),
        direct: Tally::default(),
        gain: Tally::default(),
        meta: Tally::default(),
    };
    let mut stream = 0;
    while (t.fixed_point.applicable < target
        || t.direct.applicable < target
        || t.gain.applicable < target
        || t.meta.applicable < target)
        && stream < 50 * target as u64
    {
        let mut g = GaussianStream::new(seed, stream);
        stream += 1;
        let (sys, cost, sol) = benign_lqr(&mut g);
        let gamma = default_gamma(&sol.l).unwrap();
        let rho = default_rho(sys.a()).unwrap();
        let ell = minimal_ell(&sys).unwrap();
        let consts = SystemConstants::new(&sys, &cost, &sol).unwrap();
        let tau_l = tau(&sol.l, gamma).unwrap().tau;

        // Largest ε on the ladder at which the fixed-point bound applies.
        let Some((eps, fp)) = EPS_LADDER.iter().find_map(|&e| {
            let r = dare_bound_fixed_point(&sys, &cost, &sol, e, gamma).ok()?;
            r.applicable.then_some((e, r))
        }) else {
            continue;
        };
        let n = sys.n();
        let est = perturbed(&sys, eps, &mut g);
        let dq = random::direction(&mut g, n, n, eps);
        let q_hat = (cost.q() + &dq).symmetrize();
        let cost_hat = CostParams::new(q_hat, cost.r().clone()).unwrap();
        let Ok(sol_hat) = solve_dare(&est, &cost_hat) else { continue };
        let dp = operator_norm(&(&sol_hat.p - &sol.p));
        t.fixed_point.record(dp, fp.bound_value);

        // Direct bound: A and B only.
        let est_ab = perturbed(&sys, eps, &mut g);
        if let Ok(direct) = dare_bound_direct(&sys, &cost, &sol, eps, rho, ell) {
            if direct.applicable {
                if let Ok(s) = solve_dare(&est_ab, &cost) {
                    t.direct.record(operator_norm(&(&s.p - &sol.p)), direct.bound_value);
                }
            }
        }

        // Gain and meta bounds for the certainty-equivalent gain of the (A, B, Q) estimate.
        let f = fp.bound_value.max(eps);
        if let Ok(kb) = gain_perturb_bound(&consts, f, consts.sigma_min_r) {
            t.gain.record(operator_norm(&(&sol_hat.k - &sol.k)), kb);
        }
        let meta = gap_bound_meta(&consts, f, gamma, tau_l, sys.d(), 1.0).unwrap();
        if meta.applicable {
            let gap = exact_gap(&sys, &cost, &sol, &sol_hat.k, 1.0).unwrap().gap;
            t.meta.record(gap, meta.bound_value);
        }
    }
    t
}

/// Random LQG plant with `n ∈ {2, 3}`, one or two inputs and outputs.
pub fn random_lqg(g: &mut GaussianStream) -> LqgSystem {
    loop {
        let n = 2 + g.below(2);
        let d = 1 + g.below(2);
        let p = 1 + g.below(2);
        let sys = random::system(g, n, d, 0.2, 0.9);
        let c = g.normal_mat(p, n).scale(1.0 / (n as f64).sqrt());
        let w = random::psd(g, n, n, 0.1);
        let v = random::psd(g, p, p, 0.1);
        let plant = LqgSystem::new(
            sys.a().clone(),
            sys.b().clone(),
            c,
            w,
            v,
            Mat::identity(p),
            Mat::identity(d),
        )
        .unwrap();
        if lqg_optimal(&plant).is_ok() {
            return plant;
        }
    }
}

/// Certified LQG gap bound against the exact gap of perturbed CE controllers.
pub fn lqg_bound_suite(target: usize, seed: u64) -> Tally {
    let mut t = Tally::default();
    let mut stream = 0;
    while t.applicable < target && stream < 50 * target as u64 {
        let mut g = GaussianStream::new(seed, stream);
        stream += 1;
        let plant = random_lqg(&mut g);
        let opt = lqg_optimal(&plant).unwrap();
        let nstar = n_star(&plant, &opt).unwrap();
        let Ok(gamma) = default_gamma(&nstar) else { continue };
        let tau_n = tau(&nstar, gamma).unwrap().tau;
        let consts = lqg_constants(&plant, &opt).unwrap();
        for &eps in &EPS_LADDER {
            let Ok(draw) = lqg_draw(&plant, &opt.k, &opt.kalman.gain, opt.j_star, eps, &mut g) else { continue };
            let r = lqg_gap_bound(&plant, &consts, draw.eps_bar, gamma, tau_n, LQG_GAP_C1).unwrap();
            if r.applicable {
                t.record(draw.gap, r.bound_value);
                break;
            }
        }
    }
    t
}

/// `(M, ρ)` with `ρ ≥ ρ(M)`.
pub fn random_power_case(g: &mut GaussianStream) -> (Mat, f64) {
    let n = 2 + g.below(4);
    let m = g.normal_mat(n, n).scale(0.3 + g.uniform());
    let rho = spectral_radius(&m).unwrap() * (1.0 + 0.2 * g.uniform()) + 1e-3;
    (m, rho)
}
