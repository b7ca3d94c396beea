//! Sweeps and simulation studies shared by the command-line tool and the
//! acceptance tests. Work is spread over the rayon pool; results keep the
//! order of the inputs.

use rayon::prelude::*;
use serde::Serialize;

use crate::adaptive::{fit_regret_slope, run_adaptive, AdaptiveConfig};
use crate::bounds::{dare_bound_direct, dare_bound_fixed_point, gap_bound_fast_rate, gap_bound_meta, SystemConstants, FAST_RATE_C0};
use crate::error::{Error, Result};
use crate::linalg::{operator_norm, Mat};
use crate::lqg::{
    certainty_equivalent_oc, lqg_constants, lqg_cost, lqg_gap_bound, lqg_gap_bound_fast_rate, lqg_optimal, n_star,
    LqgSystem, LQG_FAST_RATE_C2, LQG_GAP_C1,
};
use crate::lqr_eval::exact_gap;
use crate::random;
use crate::riccati::{kalman_gain, solve_dare, CostParams, LinearSystem};
use crate::rng::GaussianStream;
use crate::stats::{loglog_fit, median, LineFit};
use crate::transient::{controllability, default_gamma, default_rho, tau};

/// Smallest `ℓ ≤ n` over which `(A, B)` is controllable.
pub fn minimal_ell(sys: &LinearSystem) -> Result<usize> {
    let mut last = 0.0;
    for ell in 1..=sys.n() {
        let r = controllability(sys, ell)?;
        if r.is_ell_nu_controllable {
            return Ok(ell);
        }
        last = r.nu;
    }
    Err(Error::Controllability { nu: last })
}

/// `ε` values `10^e` for `e` evenly spaced from `lo` to `hi` (inclusive).
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..points).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1) as f64)).collect()
}

/// Fixed 3-state, 2-input instance used by the LQR gap sweep.
pub fn gap_sweep_system(seed: u64) -> (LinearSystem, CostParams) {
    let mut g = GaussianStream::new(seed, 0);
    let sys = random::system(&mut g, 3, 2, 0.9, 1.1);
    (sys, CostParams::new(Mat::identity(3), Mat::identity(2)).expect("identity costs are valid"))
}

/// Fixed 3-state instance with one input and two outputs for the LQG sweep.
pub fn lqg_sweep_system(seed: u64) -> LqgSystem {
    let mut g = GaussianStream::new(seed, 0);
    let sys = random::system(&mut g, 3, 1, 0.8, 1.05);
    let c = g.normal_mat(2, 3).scale(1.0 / 3f64.sqrt());
    LqgSystem::new(
        sys.a().clone(),
        sys.b().clone(),
        c,
        Mat::identity(3),
        Mat::identity(2).scale(0.5),
        Mat::identity(2),
        Mat::scalar(1.0),
    )
    .expect("generated instance is consistent")
}

/// `A = 1.01 I₂`, `B = diag(1, β)`, `Q = R = I₂`.
pub fn beta_system(beta: f64) -> (LinearSystem, CostParams) {
    (
        LinearSystem::new(Mat::identity(2).scale(1.01), Mat::diag(&[1.0, beta])).expect("shapes agree"),
        CostParams::new(Mat::identity(2), Mat::identity(2)).expect("identity costs are valid"),
    )
}

/// Fixed stable 3-state, 2-input plant for the regret study with a coarse
/// warm-start gain (the optimal gain rounded to one decimal).
pub fn regret_system() -> (LinearSystem, CostParams, Mat) {
    let a = Mat::from_rows(&[[0.6, 0.2, 0.0], [0.0, 0.5, 0.2], [0.1, 0.0, 0.4]]).expect("literal");
    let b = Mat::from_rows(&[[1.0, 0.0], [0.0, 0.5], [0.5, 1.0]]).expect("literal");
    (
        LinearSystem::new(a, b).expect("shapes agree"),
        CostParams::new(Mat::identity(3), Mat::identity(2)).expect("identity costs are valid"),
        Mat::from_rows(&[[-0.3, -0.1, 0.0], [0.0, -0.1, -0.2]]).expect("literal"),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub eps: f64,
    pub gap_median: f64,
    pub gap_min: f64,
    pub gap_max: f64,
    pub draws: usize,
    pub failures: usize,
    pub bound_meta: f64,
    pub bound_meta_applicable: bool,
    pub bound_fast_rate: f64,
    pub bound_fast_rate_applicable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapSweep {
    pub gamma: f64,
    pub rho: f64,
    pub ell: usize,
    pub sigma_w: f64,
    pub rows: Vec<GapRow>,
    /// Log-log fit of the median gap against `ε`.
    pub fit: Option<LineFit>,
}

fn summarize(mut gaps: Vec<f64>) -> (f64, f64, f64) {
    if gaps.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    gaps.sort_by(f64::total_cmp);
    (median(&gaps), gaps[0], gaps[gaps.len() - 1])
}

/// Exact gap of the certainty-equivalent gain when `(A, B)` are perturbed by
/// random directions of operator norm `ε`.
pub fn gap_sweep(
    sys: &LinearSystem,
    cost: &CostParams,
    eps_grid: &[f64],
    draws: usize,
    seed: u64,
    sigma_w: f64,
) -> Result<GapSweep> {
    let sol = solve_dare(sys, cost)?;
    let gamma = default_gamma(&sol.l)?;
    let rho = default_rho(sys.a())?;
    let ell = minimal_ell(sys)?;
    let consts = SystemConstants::new(sys, cost, &sol)?;
    let tau_l = tau(&sol.l, gamma)?.tau;
    let rows = eps_grid
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| -> Result<GapRow> {
            let gaps: Vec<f64> = (0..draws)
                .filter_map(|j| {
                    let mut g = GaussianStream::new(seed, (i * draws + j) as u64);
                    let a_hat = sys.a() + &random::direction(&mut g, sys.n(), sys.n(), eps);
                    let b_hat = sys.b() + &random::direction(&mut g, sys.n(), sys.d(), eps);
                    let est = LinearSystem::new(a_hat, b_hat).ok()?;
                    let k_hat = solve_dare(&est, cost).ok()?.k;
                    exact_gap(sys, cost, &sol, &k_hat, sigma_w).ok().map(|r| r.gap)
                })
                .collect();
            let failures = draws - gaps.len();
            let (gap_median, gap_min, gap_max) = summarize(gaps);
            let fp = dare_bound_fixed_point(sys, cost, &sol, eps, gamma)?;
            let meta = gap_bound_meta(&consts, fp.bound_value.max(eps), gamma, tau_l, sys.d(), sigma_w)?;
            let fast = gap_bound_fast_rate(sys, cost, &sol, eps, rho, ell, gamma, sigma_w, FAST_RATE_C0)?;
            Ok(GapRow {
                eps,
                gap_median,
                gap_min,
                gap_max,
                draws,
                failures,
                bound_meta: meta.bound_value,
                bound_meta_applicable: meta.applicable && fp.applicable,
                bound_fast_rate: fast.bound_value,
                bound_fast_rate_applicable: fast.applicable,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_rows(rows.iter().map(|r| (r.eps, r.gap_median)));
    Ok(GapSweep { gamma, rho, ell, sigma_w, rows, fit })
}

fn fit_rows(points: impl Iterator<Item = (f64, f64)>) -> Option<LineFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = points.filter(|(_, v)| v.is_finite() && *v > 0.0).unzip();
    loglog_fit(&x, &y).ok()
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaRow {
    pub beta: f64,
    pub bound_fixed_point: f64,
    pub bound_fixed_point_applicable: bool,
    pub bound_direct: f64,
    pub bound_direct_applicable: bool,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaSweep {
    pub eps: f64,
    pub rows: Vec<BetaRow>,
    /// Slopes against `log(1/β)`.
    pub fit_fixed_point: Option<LineFit>,
    pub fit_direct: Option<LineFit>,
    pub fit_ratio: Option<LineFit>,
}

/// Fixed-point and direct Riccati bounds on [`beta_system`] across `β`.
/// The fixed-point bound uses `γ = (1 + ρ(L⋆))/2`; the direct bound uses
/// `ρ = ρ(A)` and `ℓ = 1`.
pub fn beta_sweep(betas: &[f64], eps: f64) -> Result<BetaSweep> {
    let rows = betas
        .par_iter()
        .map(|&beta| -> Result<BetaRow> {
            if !(beta > 0.0) {
                return Err(Error::Domain(format!("beta must be positive, got {beta}")));
            }
            let (sys, cost) = beta_system(beta);
            let sol = solve_dare(&sys, &cost)?;
            let gamma = default_gamma(&sol.l)?;
            let fp = dare_bound_fixed_point(&sys, &cost, &sol, eps, gamma)?;
            let direct = dare_bound_direct(&sys, &cost, &sol, eps, 1.01, 1)?;
            Ok(BetaRow {
                beta,
                bound_fixed_point: fp.bound_value,
                bound_fixed_point_applicable: fp.applicable,
                bound_direct: direct.bound_value,
                bound_direct_applicable: direct.applicable,
                ratio: fp.bound_value / direct.bound_value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let inv = |r: &BetaRow| 1.0 / r.beta;
    Ok(BetaSweep {
        eps,
        fit_fixed_point: fit_rows(rows.iter().map(|r| (inv(r), r.bound_fixed_point))),
        fit_direct: fit_rows(rows.iter().map(|r| (inv(r), r.bound_direct))),
        fit_ratio: fit_rows(rows.iter().map(|r| (inv(r), r.ratio))),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LqgRow {
    pub eps: f64,
    pub gap_median: f64,
    pub gap_min: f64,
    pub gap_max: f64,
    pub draws: usize,
    pub failures: usize,
    /// Median over draws of the largest error among `Â, B̂, Ĉ, K̂, L̂`.
    pub eps_bar_median: f64,
    pub bound: f64,
    pub bound_applicable: bool,
    pub bound_fast_rate: f64,
    pub bound_fast_rate_applicable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LqgSweep {
    pub gamma: f64,
    pub j_star: f64,
    pub rows: Vec<LqgRow>,
    pub fit: Option<LineFit>,
}

/// One perturbed certainty-equivalent controller and its exact gap.
#[derive(Debug, Clone, Serialize)]
pub struct LqgDraw {
    pub gap: f64,
    pub eps_bar: f64,
}

/// Perturb `A, B, C` by random directions of norm `eps`, design `L̂` by the
/// Kalman filter of the estimates and `K̂` by certainty equivalence.
pub fn lqg_draw(plant: &LqgSystem, k_star: &Mat, l_star: &Mat, j_star: f64, eps: f64, g: &mut GaussianStream) -> Result<LqgDraw> {
    let (n, d, p) = (plant.n(), plant.d(), plant.p());
    let a_hat = plant.a() + &random::direction(g, n, n, eps);
    let b_hat = plant.b() + &random::direction(g, n, d, eps);
    let c_hat = plant.c() + &random::direction(g, p, n, eps);
    let est = LqgSystem::new(
        a_hat.clone(),
        b_hat.clone(),
        c_hat.clone(),
        plant.w().clone(),
        plant.v().clone(),
        plant.q().clone(),
        plant.r().clone(),
    )?;
    let l_hat = kalman_gain(&est)?.gain;
    let oc = certainty_equivalent_oc(&a_hat, &b_hat, &c_hat, &l_hat, plant.q(), plant.r())?;
    let gap = lqg_cost(plant, &oc)? - j_star;
    let eps_bar = eps.max(operator_norm(&(&oc.k_hat - k_star))).max(operator_norm(&(&oc.l_hat - l_star)));
    Ok(LqgDraw { gap, eps_bar })
}

pub fn lqg_sweep(plant: &LqgSystem, eps_grid: &[f64], draws: usize, seed: u64) -> Result<LqgSweep> {
    let opt = lqg_optimal(plant)?;
    let nstar = n_star(plant, &opt)?;
    let gamma = default_gamma(&nstar)?;
    let tau_n = tau(&nstar, gamma)?.tau;
    let consts = lqg_constants(plant, &opt)?;
    let rows = eps_grid
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| -> Result<LqgRow> {
            let results: Vec<LqgDraw> = (0..draws)
                .filter_map(|j| {
                    let mut g = GaussianStream::new(seed, (i * draws + j) as u64);
                    lqg_draw(plant, &opt.k, &opt.kalman.gain, opt.j_star, eps, &mut g).ok()
                })
                .collect();
            let failures = draws - results.len();
            let eps_bar_median =
                if results.is_empty() { f64::NAN } else { median(&results.iter().map(|r| r.eps_bar).collect::<Vec<_>>()) };
            let (gap_median, gap_min, gap_max) = summarize(results.iter().map(|r| r.gap).collect());
            let (bound, bound_applicable) = if eps_bar_median.is_finite() {
                let r = lqg_gap_bound(plant, &consts, eps_bar_median, gamma, tau_n, LQG_GAP_C1)?;
                (r.bound_value, r.applicable)
            } else {
                (f64::NAN, false)
            };
            let fast = lqg_gap_bound_fast_rate(plant, &opt, eps, gamma, LQG_FAST_RATE_C2)?;
            Ok(LqgRow {
                eps,
                gap_median,
                gap_min,
                gap_max,
                draws,
                failures,
                eps_bar_median,
                bound,
                bound_applicable,
                bound_fast_rate: fast.bound_value,
                bound_fast_rate_applicable: fast.applicable,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_rows(rows.iter().map(|r| (r.eps, r.gap_median)));
    Ok(LqgSweep { gamma, j_star: opt.j_star, rows, fit })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegretRun {
    pub seed: u64,
    /// Error kind when the run diverged or failed; such runs are excluded.
    pub failure: Option<String>,
    pub final_regret: f64,
    pub final_regret_paired: f64,
    pub slope: Option<f64>,
    pub slope_paired: Option<f64>,
    /// `(t, regret, paired regret)` at the checkpoints.
    pub checkpoints: Vec<(usize, f64, f64)>,
    pub epoch_errors: Vec<f64>,
    pub epochs_accepted: usize,
    pub max_executed_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegretStudy {
    pub exponent: f64,
    pub horizon: usize,
    pub runs: Vec<RegretRun>,
    pub failure_rate: f64,
    /// Fit of the mean paired regret over successful runs, second half of the horizon.
    pub pooled_fit: Option<LineFit>,
    /// Same fit on the mean of `cum_cost(t) - t J⋆`.
    pub pooled_fit_raw: Option<LineFit>,
    pub median_final_regret: f64,
    pub median_final_regret_raw: f64,
}

/// About 60 log-spaced steps in `1..=horizon`, always including the last.
pub fn checkpoints(horizon: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=60)
        .map(|i| (horizon as f64).powf(i as f64 / 60.0).round() as usize)
        .filter(|&t| t >= 1)
        .collect();
    out.push(horizon);
    out.dedup();
    out
}

/// Runs of [`run_adaptive`] for `seeds` consecutive seeds starting at `base_seed`.
#[allow(clippy::too_many_arguments)]
pub fn regret_study(
    sys: &LinearSystem,
    cost: &CostParams,
    k0: &Mat,
    exponent: f64,
    horizon: usize,
    seeds: usize,
    base_seed: u64,
    configure: impl Fn(&mut AdaptiveConfig) + Sync,
) -> Result<RegretStudy> {
    let marks = checkpoints(horizon);
    let outcomes: Vec<(RegretRun, Option<(Vec<f64>, Vec<f64>)>)> = (0..seeds as u64)
        .into_par_iter()
        .map(|s| -> Result<_> {
            let seed = base_seed + s;
            let mut cfg = AdaptiveConfig::new(horizon, k0.clone(), seed);
            cfg.exploration_exponent = exponent;
            cfg.paired_baseline = true;
            configure(&mut cfg);
            match run_adaptive(sys, cost, &cfg) {
                Ok(tr) => {
                    let paired = tr.regret_paired.clone().expect("baseline enabled");
                    let run = RegretRun {
                        seed,
                        failure: None,
                        final_regret: *tr.regret.last().expect("horizon >= 1"),
                        final_regret_paired: *paired.last().expect("horizon >= 1"),
                        slope: tr.slope_fit.map(|f| f.slope),
                        slope_paired: tr.slope_fit_paired.map(|f| f.slope),
                        checkpoints: marks.iter().map(|&t| (t, tr.regret[t - 1], paired[t - 1])).collect(),
                        epoch_errors: tr.epochs.iter().map(|e| e.param_error).collect(),
                        epochs_accepted: tr.epochs.iter().filter(|e| e.accepted).count(),
                        max_executed_rho: tr.epochs.iter().map(|e| e.executed_rho).fold(0.0, f64::max),
                    };
                    Ok((run, Some((tr.regret, paired))))
                }
                Err(e @ (Error::Divergence { .. } | Error::Stability { .. })) => Ok((
                    RegretRun {
                        seed,
                        failure: Some(e.to_string()),
                        final_regret: f64::NAN,
                        final_regret_paired: f64::NAN,
                        slope: None,
                        slope_paired: None,
                        checkpoints: Vec::new(),
                        epoch_errors: Vec::new(),
                        epochs_accepted: 0,
                        max_executed_rho: f64::NAN,
                    },
                    None,
                )),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean_raw = vec![0.0; horizon];
    let mut mean_paired = vec![0.0; horizon];
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut curves = 0usize;
    for (run, curve) in outcomes {
        if let Some((raw, paired)) = curve {
            curves += 1;
            for t in 0..horizon {
                mean_raw[t] += raw[t];
                mean_paired[t] += paired[t];
            }
        }
        runs.push(run);
    }
    for t in 0..horizon {
        mean_raw[t] /= curves.max(1) as f64;
        mean_paired[t] /= curves.max(1) as f64;
    }
    let good: Vec<&RegretRun> = runs.iter().filter(|r| r.failure.is_none()).collect();
    let med = |f: fn(&RegretRun) -> f64| {
        if good.is_empty() {
            f64::NAN
        } else {
            median(&good.iter().map(|r| f(r)).collect::<Vec<_>>())
        }
    };
    Ok(RegretStudy {
        exponent,
        horizon,
        failure_rate: (runs.len() - good.len()) as f64 / runs.len().max(1) as f64,
        pooled_fit: if curves == 0 { None } else { fit_regret_slope(&mean_paired, 0.5).ok() },
        pooled_fit_raw: if curves == 0 { None } else { fit_regret_slope(&mean_raw, 0.5).ok() },
        median_final_regret: med(|r| r.final_regret_paired),
        median_final_regret_raw: med(|r| r.final_regret),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_and_checkpoints() {
        let g = log_grid(-4.0, -1.5, 8);
        assert_eq!(g.len(), 8);
        assert!((g[0] - 1e-4).abs() < 1e-18 && (g[7] - 10f64.powf(-1.5)).abs() < 1e-15);
        let c = checkpoints(1000);
        assert_eq!((c[0], *c.last().unwrap()), (1, 1000));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fixed_instances_are_well_posed() {
        let (sys, cost) = gap_sweep_system(7);
        assert!(solve_dare(&sys, &cost).is_ok());
        assert!(lqg_optimal(&lqg_sweep_system(11)).is_ok());
        let (sys, cost, k0) = regret_system();
        assert!(crate::lqr_eval::cost_of_gain(&sys, &cost, &k0, 1.0).is_ok());
    }
}
