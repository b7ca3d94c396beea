use certeq::linalg::{is_psd, operator_norm, spectral_radius, Mat};
use certeq::lqg::LqgSystem;
use certeq::random;
use certeq::riccati::{
    dlyap_residual, kalman_gain, lqr_gain, riccati_operator, riccati_operator_alt, riccati_residual, solve_dare,
    solve_dlyap, CostParams, LinearSystem,
};
use certeq::rng::GaussianStream;
use certeq::Error;
use proptest::prelude::*;

fn instance(seed: u64, n: usize, d: usize) -> (LinearSystem, CostParams) {
    let mut g = GaussianStream::new(seed, 0);
    let sys = random::system(&mut g, n, d, 0.3, 1.4);
    let q = random::psd(&mut g, n, n, 0.1);
    let r = random::psd(&mut g, d, d, 0.5);
    (sys, CostParams::new(q, r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dare_solution_is_a_stabilizing_fixed_point(seed in 0u64..10_000, n in 1usize..6, d in 1usize..4) {
        let (sys, cost) = instance(seed, n, d);
        let sol = solve_dare(&sys, &cost).unwrap();
        let scale = 1.0 + operator_norm(&sol.p);
        prop_assert!(sol.p.asymmetry() == 0.0);
        prop_assert!(is_psd(&sol.p, 1e-12).unwrap());
        prop_assert!(riccati_residual(&sol.p, &sys, &cost).unwrap() <= 1e-10 * scale);
        prop_assert!(spectral_radius(&sol.l).unwrap() < 1.0);
        // Both forms of the Riccati operator agree at the solution.
        let f1 = riccati_operator(&sol.p, &sys, &cost).unwrap();
        let f2 = riccati_operator_alt(&sol.p, &sys, &cost).unwrap();
        prop_assert!((&f1 - &f2).max_abs() <= 1e-9 * scale);
        prop_assert!((&lqr_gain(&sol.p, &sys, &cost).unwrap() - &sol.k).max_abs() <= 1e-12 * (1.0 + operator_norm(&sol.k)));
    }

    #[test]
    fn cost_scaling_scales_p_and_keeps_k(seed in 0u64..10_000, alpha in 0.01f64..100.0) {
        let (sys, cost) = instance(seed, 3, 2);
        let sol = solve_dare(&sys, &cost).unwrap();
        let scaled = solve_dare(&sys, &cost.scaled(alpha).unwrap()).unwrap();
        prop_assert!((&scaled.p - &sol.p.scale(alpha)).max_abs() <= 1e-9 * alpha * (1.0 + operator_norm(&sol.p)));
        prop_assert!((&scaled.k - &sol.k).max_abs() <= 1e-9 * (1.0 + operator_norm(&sol.k)));
    }

    #[test]
    fn dlyap_solves_the_stein_equation(seed in 0u64..10_000, n in 1usize..7) {
        let mut g = GaussianStream::new(seed, 1);
        let radius = 0.95 * g.uniform();
        let l = random::with_spectral_radius(&mut g, n, radius);
        let m = random::psd(&mut g, n, n, 0.0);
        let x = solve_dlyap(&l, &m).unwrap();
        prop_assert!(dlyap_residual(&l, &m, &x) <= 1e-10 * (1.0 + operator_norm(&x)));
        prop_assert!(is_psd(&x, 1e-12).unwrap());
        // Lᵀ X L - X + M = 0 with X = Σₖ (Lᵀ)ᵏ M Lᵏ ⪰ M.
        prop_assert!(is_psd(&(&x - &m), 1e-10).unwrap());
    }
}

#[test]
fn dual_kalman_gain_stabilizes_the_observer() {
    for seed in 0..50 {
        let mut g = GaussianStream::new(seed, 2);
        let (n, p) = (2 + g.below(3), 1 + g.below(2));
        let sys = random::system(&mut g, n, 1, 0.5, 1.3);
        let c = g.normal_mat(p, n);
        let w = random::psd(&mut g, n, n, 0.1);
        let v = random::psd(&mut g, p, p, 0.1);
        let plant = LqgSystem::new(sys.a().clone(), sys.b().clone(), c.clone(), w.clone(), v.clone(), Mat::identity(p), Mat::scalar(1.0)).unwrap();
        let kf = kalman_gain(&plant).unwrap();
        assert!(spectral_radius(&(sys.a() - &(&kf.gain * &c))).unwrap() < 1.0);
        // Σ = AΣAᵀ + W - AΣCᵀ(CΣCᵀ + V)⁻¹CΣAᵀ, and L(CΣCᵀ + V) = AΣCᵀ.
        let a = sys.a();
        let s = &kf.sigma;
        let innov = &(&(&c * s) * &c.transpose()) + &v;
        let lhs = &kf.gain * &innov;
        let rhs = &(a * s) * &c.transpose();
        assert!((&lhs - &rhs).max_abs() < 1e-9 * (1.0 + rhs.max_abs()), "seed {seed}");
        assert_eq!(kf.negated_gain(), -&kf.gain);
    }
}

#[test]
fn unstabilizable_and_undetectable_are_reported() {
    let sys = LinearSystem::new(Mat::diag(&[2.0, 0.5]), Mat::from_rows(&[[0.0], [1.0]]).unwrap()).unwrap();
    let cost = CostParams::new(Mat::identity(2), Mat::scalar(1.0)).unwrap();
    assert!(matches!(solve_dare(&sys, &cost), Err(Error::Stabilizability(_))));
    let plant = LqgSystem::new(
        Mat::diag(&[2.0, 0.5]),
        Mat::from_rows(&[[1.0], [0.0]]).unwrap(),
        Mat::from_rows(&[[0.0, 1.0]]).unwrap(),
        Mat::identity(2),
        Mat::scalar(1.0),
        Mat::scalar(1.0),
        Mat::scalar(1.0),
    )
    .unwrap();
    assert!(matches!(kalman_gain(&plant), Err(Error::Detectability(_))));
}
