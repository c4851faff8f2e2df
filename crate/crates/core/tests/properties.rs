use ampr_core::empirical::{evaluate, generate, lasso_cd, lasso_kkt, LassoOptions};
use ampr_core::general_l1::{prox_sigma, ProxOptions};
use ampr_core::scalar_l1::{solve_lasso_se, solve_ref_lasso_se, theory_risk, SolverOptions};
use ampr_core::special::soft;
use ampr_core::{CovarianceModel, Estimator, ProblemSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = ProblemSpec> {
    (0.2f64..2.0, 0.2f64..2.0, 0.01f64..0.3, 0.2f64..0.9)
        .prop_map(|(gx, gw, k, h)| ProblemSpec::iid_bg(gx, gw, k, h).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prox_satisfies_kkt(
        v in prop::collection::vec(-3.0f64..3.0, 12),
        theta in 0.0f64..2.0,
        rho in -0.6f64..0.9,
    ) {
        let m = CovarianceModel::ar1(12, rho);
        let s = prox_sigma(&m, &v, theta, &ProxOptions::default()).unwrap();
        let d: Vec<f64> = s.w.iter().zip(&v).map(|(a, b)| a - b).collect();
        let g = m.apply(&d);
        for j in 0..12 {
            if s.w[j] != 0.0 {
                prop_assert!((g[j] + theta * s.w[j].signum()).abs() < 1e-7);
            } else {
                prop_assert!(g[j].abs() <= theta + 1e-7);
            }
        }
    }

    #[test]
    fn identity_prox_is_soft_threshold(v in prop::collection::vec(-3.0f64..3.0, 8), theta in 0.0f64..2.0) {
        let s = prox_sigma(&CovarianceModel::Identity { p: 8 }, &v, theta, &ProxOptions::default()).unwrap();
        for (w, x) in s.w.iter().zip(&v) {
            prop_assert_eq!(*w, soft(*x, theta));
        }
    }

    #[test]
    fn coordinate_descent_meets_its_tolerance(seed in 0u64..1000, mu in 0.001f64..0.5) {
        let mut rng = ampr_core::seed::rng(seed);
        let z = DMatrix::from_fn(40, 15, |_, _| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng));
        let a = z.tr_mul(&z) / 40.0;
        let c: Vec<f64> = (0..15).map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let opts = LassoOptions::default();
        let sol = lasso_cd(&a, &c, mu, None, &opts).unwrap();
        let g: Vec<f64> = (a * nalgebra::DVector::from_column_slice(&sol.beta)).iter().zip(&c).map(|(x, y)| x - y).collect();
        prop_assert!(lasso_kkt(&sol.beta, &g, mu) <= opts.kkt_tol);
    }

    #[test]
    fn scalar_fixed_points_have_small_residuals(spec in spec_strategy(), lambda in 0.02f64..5.0) {
        let o = SolverOptions::default();
        let fp = solve_lasso_se(&spec, lambda, &o).unwrap();
        prop_assert!(fp.residual < 1e-9);
        match solve_ref_lasso_se(&spec, lambda, &o) {
            Ok(fp) => prop_assert!(fp.residual < 1e-9),
            // below the feasibility boundary when gamma_w > 1
            Err(ampr_core::Error::InfeasibleRegime(_)) | Err(ampr_core::Error::AlphaBelowMin { .. }) => prop_assert!(spec.gamma_w > 1.0),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn theory_risks_are_in_range(spec in spec_strategy(), log_lambda in -2.0f64..4.0) {
        let lambda = 10f64.powf(log_lambda);
        for est in Estimator::ALL {
            if let Ok(r) = theory_risk(&spec, est, lambda, &SolverOptions::default()) {
                prop_assert!(r.mse >= 0.0 && r.mse.is_finite());
                prop_assert!(r.r2 >= 0.0 && r.r2 <= spec.h2_s + 1e-12, "{:?} {}", est, r.r2);
            }
        }
    }

    #[test]
    fn empirical_risks_are_in_range(seed in 0u64..50, scale in -2.0f64..2.0) {
        let ds = generate(&ProblemSpec::iid_bg(0.5, 0.5, 0.1, 0.6).unwrap(), 60, seed).unwrap();
        let guess: Vec<f64> = ds.beta0.iter().enumerate().map(|(j, b)| scale * b + 0.01 * (j as f64).sin()).collect();
        let (mse, r2) = evaluate(&ds, &guess).unwrap();
        prop_assert!(mse >= 0.0);
        prop_assert!((0.0..=1.0).contains(&r2));
    }

    #[test]
    fn generation_is_deterministic(seed in 0u64..1000) {
        let s = ProblemSpec::iid_bg(1.0, 1.0, 0.1, 0.5).unwrap();
        prop_assert_eq!(generate(&s, 50, seed).unwrap(), generate(&s, 50, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lasso_alpha_map_inverts_the_solver(spec in spec_strategy(), lambda in 0.05f64..3.0) {
        let o = SolverOptions::default();
        let fp = solve_lasso_se(&spec, lambda, &o).unwrap();
        let back = ampr_core::scalar_l1::lasso_lambda_of_alpha(&spec, fp.alpha, &o).unwrap();
        prop_assert!((back - lambda).abs() < 1e-8 * lambda.max(1.0), "{back} vs {lambda}");
    }
}
