//! Acceptance criteria 1–9. Each prints one PASS/FAIL line; the test fails
//! if any criterion fails.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use certeq::experiments::{
    beta_sweep, gap_sweep, gap_sweep_system, log_grid, lqg_draw, lqg_sweep, lqg_sweep_system, regret_study,
    regret_system,
};
use certeq::linalg::{inverse, operator_norm, spectral_radius, Mat};
use certeq::lqg::{build_lifted, lqg_cost, lqg_optimal, ObserverController};
use certeq::lqr_eval::{exact_gap, simulate_rollout, RolloutOptions};
use certeq::random;
use certeq::riccati::{riccati_residual, solve_dare, CostParams, LinearSystem};
use certeq::rng::GaussianStream;
use certeq::stats::{mean, std_dev};
use certeq::transient::{controllability, controllability_perturb_bound, power_perturb_bounds, tau_with};
use rayon::prelude::*;

use common::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn timed(limit: Duration, start: Instant) -> (bool, String) {
    let el = start.elapsed();
    (el <= limit, format!("{:.2}s (limit {}s)", el.as_secs_f64(), limit.as_secs()))
}

fn criterion1() -> Verdict {
    let start = Instant::now();
    let mut worst_rel = 0.0f64;
    let mut worst_rho = 0.0f64;
    let mut failures = 0;
    let mut solved = 0;
    let mut stream = 0;
    while solved < 100 {
        let mut g = GaussianStream::new(101, stream);
        stream += 1;
        let n = 1 + g.below(8);
        let d = 1 + g.below(4);
        let sys = random::system(&mut g, n, d, 0.5, 1.5);
        // Skip nearly uncontrollable draws.
        if controllability(&sys, n).unwrap().nu < 1e-3 {
            continue;
        }
        let cost = identity_cost(n, d);
        solved += 1;
        match solve_dare(&sys, &cost) {
            Ok(sol) => {
                let res = riccati_residual(&sol.p, &sys, &cost).unwrap();
                worst_rel = worst_rel.max(res / (1e-10 * (1.0 + operator_norm(&sol.p))));
                worst_rho = worst_rho.max(spectral_radius(&sol.l).unwrap());
            }
            Err(_) => failures += 1,
        }
    }
    let mut scalar_err = 0.0f64;
    for (a, b, q, r) in [(0.5, 1.0, 1.0, 1.0), (2.0, 1.0, 1.0, 1.0), (1.2, 0.3, 2.0, 0.5), (-0.9, 2.0, 0.1, 3.0)] {
        let sys = LinearSystem::new(Mat::scalar(a), Mat::scalar(b)).unwrap();
        let sol = solve_dare(&sys, &CostParams::new(Mat::scalar(q), Mat::scalar(r)).unwrap()).unwrap();
        // b² P² + (r(1 - a²) - q b²) P - q r = 0, positive root.
        let (qa, qb, qc) = (b * b, r * (1.0 - a * a) - q * b * b, -q * r);
        let p = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        scalar_err = scalar_err.max((sol.p[(0, 0)] - p).abs());
    }
    let (fast, time) = timed(Duration::from_secs(10), start);
    Verdict {
        pass: failures == 0 && worst_rel <= 1.0 && worst_rho < 1.0 && scalar_err <= 1e-10 && fast,
        detail: format!(
            "100 systems, {failures} failures, max residual/(1e-10(1+|P|)) = {worst_rel:.3e}, max rho(L) = {worst_rho:.4}, scalar error {scalar_err:.1e}, {time}"
        ),
    }
}

fn criterion2() -> Verdict {
    let start = Instant::now();
    let (sys, cost) = gap_sweep_system(7);
    let sweep = gap_sweep(&sys, &cost, &log_grid(-4.0, -1.5, 8), 20, 1, 1.0).unwrap();
    let fit = sweep.fit.unwrap();
    let (fast, time) = timed(Duration::from_secs(60), start);
    Verdict {
        pass: within(fit.slope, 2.0, 0.1) && fit.r2 >= 0.99 && fast,
        detail: format!("slope {:.4}, R^2 {:.5}, {time}", fit.slope, fit.r2),
    }
}

fn criterion3() -> Verdict {
    let betas = [0.1, 0.05, 0.025, 0.0125];
    let sweep = beta_sweep(&betas, 1e-8).unwrap();
    let s_fp = sweep.fit_fixed_point.unwrap().slope;
    let sd = sweep.fit_direct.unwrap().slope;
    let sr = sweep.fit_ratio.unwrap().slope;
    let applicable: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| format!("{}:{}/{}", r.beta, r.bound_fixed_point_applicable as u8, r.bound_direct_applicable as u8))
        .collect();
    Verdict {
        pass: within(s_fp, 4.0, 0.3) && within(sd, 3.0, 0.3) && within(sr, 1.0, 0.3),
        detail: format!(
            "eps 1e-8: fixed-point slope {s_fp:.3} (want 4), direct slope {sd:.3} (want 3), ratio slope {sr:.3} (want 1); applicable beta:fp/direct {}",
            applicable.join(" ")
        ),
    }
}

fn criterion4() -> Verdict {
    let lqr = lqr_bound_suite(200, 404);
    let lqg = lqg_bound_suite(200, 405);
    let all = [
        ("fixed-point", &lqr.fixed_point),
        ("direct", &lqr.direct),
        ("gain", &lqr.gain),
        ("meta", &lqr.meta),
        ("lqg", &lqg),
    ];
    let pass = all.iter().all(|(_, t)| t.applicable >= 200 && t.violations == 0);
    let detail = all
        .iter()
        .map(|(name, t)| format!("{name} {}/{} (worst ratio {:.2e})", t.violations, t.applicable, t.worst_ratio))
        .collect::<Vec<_>>()
        .join(", ");
    Verdict { pass, detail: format!("violations/applicable: {detail}") }
}

fn criterion5() -> Verdict {
    let mut power_viol = 0;
    for s in 0..500 {
        let mut g = GaussianStream::new(505, s);
        let (m, rho) = random_power_case(&mut g);
        let n = m.rows();
        let delta = 10f64.powf(-4.0 + 3.5 * g.uniform());
        let dm = random::direction(&mut g, n, n, delta);
        let k = 1 + g.below(40);
        let (pow_b, diff_b) = power_perturb_bounds(&m, rho, delta, k).unwrap();
        let mk = m.pow(k);
        let pk = (&m + &dm).pow(k);
        let slack = 1.0 + 1e-10;
        if operator_norm(&pk) > pow_b * slack || operator_norm(&(&pk - &mk)) > diff_b * slack {
            power_viol += 1;
        }
    }
    let mut psd_viol = 0;
    for s in 0..200 {
        let mut g = GaussianStream::new(506, s);
        let n = 1 + g.below(6);
        let draw = |g: &mut GaussianStream| {
            let (rank, scale) = (1 + g.below(n), 10f64.powf(-2.0 + 4.0 * g.uniform()));
            random::psd(g, n, rank, 0.0).scale(scale)
        };
        let m = draw(&mut g);
        let nn = draw(&mut g);
        let inv = inverse(&(&Mat::identity(n) + &(&m * &nn))).unwrap();
        if operator_norm(&(&nn * &inv)) > operator_norm(&nn) + 1e-10 {
            psd_viol += 1;
        }
    }
    let mut ctrl_viol = 0;
    let mut ctrl_checked = 0;
    let mut s = 0;
    while ctrl_checked < 200 {
        let mut g = GaussianStream::new(507, s);
        s += 1;
        let n = 2 + g.below(3);
        let d = 1 + g.below(n);
        let sys = random::system(&mut g, n, d, 0.3, 1.2);
        let ell = n;
        let report = controllability(&sys, ell).unwrap();
        if !report.is_ell_nu_controllable {
            continue;
        }
        let rho = spectral_radius(sys.a()).unwrap() * 1.05 + 1e-3;
        let tau_a = tau_with(sys.a(), rho, true).unwrap().tau;
        let eps = 10f64.powf(-5.0 + 4.0 * g.uniform());
        let a = sys.a() + &random::direction(&mut g, n, n, eps);
        let b = sys.b() + &random::direction(&mut g, n, d, eps);
        let moved = controllability(&LinearSystem::new(a, b).unwrap(), ell).unwrap();
        let lower = controllability_perturb_bound(&report, tau_a, rho, eps, operator_norm(sys.b()));
        ctrl_checked += 1;
        if moved.nu < lower - 1e-12 {
            ctrl_viol += 1;
        }
    }
    Verdict {
        pass: power_viol == 0 && psd_viol == 0 && ctrl_viol == 0,
        detail: format!(
            "matrix powers {power_viol}/500, psd norm {psd_viol}/200, controllability {ctrl_viol}/{ctrl_checked} violations"
        ),
    }
}

fn criterion6() -> Verdict {
    let start = Instant::now();
    let mut worst_rel = 0.0f64;
    let mut done = 0;
    let mut s = 0;
    while done < 500 {
        let mut g = GaussianStream::new(606, s);
        s += 1;
        let (sys, cost, sol) = benign_lqr(&mut g);
        let n = sys.n();
        let size = 0.01 + 0.1 * g.uniform();
        let k = &sol.k + &random::direction(&mut g, sys.d(), n, size);
        let Ok(r) = exact_gap(&sys, &cost, &sol, &k, 1.0) else { continue };
        done += 1;
        worst_rel = worst_rel.max((r.gap - r.gap_difference).abs() / r.gap.abs());
    }
    // Paired Monte Carlo: each rollout drives K̂ and K⋆ with the same noise.
    let mc: Vec<(f64, f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|i| {
            let mut g = GaussianStream::new(607, i);
            let (sys, cost, sol) = benign_lqr(&mut g);
            let k = &sol.k + &random::direction(&mut g, sys.d(), sys.n(), 0.3);
            let exact = exact_gap(&sys, &cost, &sol, &k, 1.0).unwrap().gap;
            let diffs: Vec<f64> = (0..200u64)
                .map(|j| {
                    let opts = RolloutOptions { stream: j, ..RolloutOptions::default() };
                    let a = simulate_rollout(&sys, &cost, &k, 1.0, 20_000, 6070 + i, opts).unwrap().avg_cost;
                    let b = simulate_rollout(&sys, &cost, &sol.k, 1.0, 20_000, 6070 + i, opts).unwrap().avg_cost;
                    a - b
                })
                .collect();
            let se = std_dev(&diffs) / (diffs.len() as f64).sqrt();
            (exact, mean(&diffs), se)
        })
        .collect();
    let worst_z = mc.iter().map(|(e, m, se)| (m - e).abs() / se).fold(0.0, f64::max);
    let (fast, time) = timed(Duration::from_secs(300), start);
    Verdict {
        pass: worst_rel <= 1e-8 && worst_z <= 3.0 && fast,
        detail: format!(
            "trace vs difference worst rel {worst_rel:.2e} on 500; Monte Carlo worst |z| {worst_z:.2} on 10 x 200 x 20000; {time}"
        ),
    }
}

fn criterion7() -> Verdict {
    let mut worst_sim = 0.0f64;
    let mut worse = 0;
    let mut checked = 0;
    let mut s = 0;
    while checked < 100 {
        let mut g = GaussianStream::new(707, s);
        s += 1;
        let plant = random_lqg(&mut g);
        let opt = lqg_optimal(&plant).unwrap();
        let eps = 10f64.powf(-3.0 + 2.0 * g.uniform());
        // Certainty-equivalent controller from perturbed estimates.
        let Ok(draw) = lqg_draw(&plant, &opt.k, &opt.kalman.gain, opt.j_star, eps, &mut g) else { continue };
        // Arbitrary perturbation of all five controller matrices.
        let (n, d, p) = (plant.n(), plant.d(), plant.p());
        let oc = ObserverController {
            a_hat: &opt.oc.a_hat + &random::direction(&mut g, n, n, eps),
            b_hat: &opt.oc.b_hat + &random::direction(&mut g, n, d, eps),
            c_hat: &opt.oc.c_hat + &random::direction(&mut g, p, n, eps),
            k_hat: &opt.oc.k_hat + &random::direction(&mut g, d, n, eps),
            l_hat: &opt.oc.l_hat + &random::direction(&mut g, n, p, eps),
        };
        let Ok(j) = lqg_cost(&plant, &oc) else { continue };
        checked += 1;
        let tol = 1e-12 * opt.j_star;
        if draw.gap < -tol || j < opt.j_star - tol {
            worse += 1;
        }
        for c in [&opt.oc, &oc] {
            let lifted = build_lifted(&plant, c).unwrap();
            let sim = &(&inverse(&lifted.s).unwrap() * &lifted.m_hat) * &lifted.s;
            worst_sim = worst_sim.max((&sim - &lifted.n_hat).max_abs());
        }
    }
    let sweep = lqg_sweep(&lqg_sweep_system(11), &log_grid(-4.0, -1.5, 8), 20, 1).unwrap();
    let fit = sweep.fit.unwrap();
    Verdict {
        pass: worst_sim <= 1e-10 && worse == 0 && within(fit.slope, 2.0, 0.15),
        detail: format!(
            "similarity error {worst_sim:.1e}, optimality violations {worse}/{checked}, sweep slope {:.4} (R^2 {:.4})",
            fit.slope, fit.r2
        ),
    }
}

fn criterion8() -> Verdict {
    let start = Instant::now();
    let (sys, cost, k0) = regret_system();
    let half = regret_study(&sys, &cost, &k0, 0.5, 100_000, 20, 1, |_| {}).unwrap();
    let third = regret_study(&sys, &cost, &k0, 1.0 / 3.0, 100_000, 20, 1, |_| {}).unwrap();
    let sh = half.pooled_fit.unwrap().slope;
    let st = third.pooled_fit.unwrap().slope;
    let rh = half.pooled_fit_raw.map_or(f64::NAN, |f| f.slope);
    let rt = third.pooled_fit_raw.map_or(f64::NAN, |f| f.slope);
    let (fast, time) = timed(Duration::from_secs(600), start);
    Verdict {
        pass: within(sh, 0.5, 0.15)
            && within(st, 2.0 / 3.0, 0.15)
            && half.median_final_regret_raw < third.median_final_regret_raw
            && fast,
        detail: format!(
            "pooled slopes {sh:.3} (1/2) and {st:.3} (1/3) [unpaired {rh:.3}, {rt:.3}]; median final regret {:.1} vs {:.1} [paired {:.1} vs {:.1}]; failure rates {}/{}; {time}",
            half.median_final_regret_raw,
            third.median_final_regret_raw,
            half.median_final_regret,
            third.median_final_regret,
            half.failure_rate,
            third.failure_rate
        ),
    }
}

fn run_cli(args: &[&str], threads: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_certeq"))
        .args(args)
        .env("CERTEQ_THREADS", threads)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    out.stdout
}

fn criterion9() -> Verdict {
    let commands: [&[&str]; 4] = [
        &["gap-sweep"],
        &["beta-sweep"],
        &["lqg-sweep", "--seeds", "5"],
        &["regret", "--T", "20000", "--seeds", "4"],
    ];
    let mut identical = 0;
    for args in commands {
        let first = run_cli(args, "1");
        let second = run_cli(args, "4");
        if first == second && !first.is_empty() {
            identical += 1;
        }
    }
    Verdict {
        pass: identical == commands.len(),
        detail: format!("{identical}/{} commands byte-identical across runs (1 and 4 threads)", commands.len()),
    }
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("DARE correctness", criterion1),
        ("LQR gap scales as eps^2", criterion2),
        ("bound separation on the beta example", criterion3),
        ("bound validity suite", criterion4),
        ("power, psd and controllability inequalities", criterion5),
        ("exact gap cross-check", criterion6),
        ("LQG lifted-system identities", criterion7),
        ("regret slopes", criterion8),
        ("CLI determinism", criterion9),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = f();
        println!("criterion {} {}: {} ({})", i + 1, if v.pass { "PASS" } else { "FAIL" }, name, v.detail);
        if !v.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
