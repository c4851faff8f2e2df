use ampr_core::empirical::*;
use ampr_core::{CovarianceModel, Estimator, ProblemSpec};
use nalgebra::{DMatrix, DVector};

fn spec() -> ProblemSpec {
    ProblemSpec::iid_bg(0.5, 0.5, 0.05, 0.6).unwrap()
}

fn var(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

#[test]
fn heritability_and_design_scale() {
    let mut h = 0.0;
    for seed in 0..10 {
        let ds = generate(&spec(), 2000, seed).unwrap();
        let signal: Vec<f64> = ds.y_x.iter().zip(&ds.eps_x).map(|(y, e)| y - e).collect();
        h += var(&signal) / var(&ds.y_x) / 10.0;
        if seed == 0 {
            let tr = ds.s.iter().map(|v| v * v).sum::<f64>() / ds.n_s() as f64;
            assert!((tr / 2000.0 - 1.0).abs() < 0.05);
            let nz = ds.beta0.iter().filter(|b| **b != 0.0).count() as f64 / 2000.0;
            assert!((nz - 0.05).abs() < 3.0 * (0.05 * 0.95 / 2000.0f64).sqrt());
        }
    }
    assert!((h - 0.6).abs() < 0.03, "{h}");
}

#[test]
fn quadratic_forms_concentrate() {
    let s = spec().with_covariance(CovarianceModel::ar1(2000, 0.5));
    let ds = generate(&s, 2000, 4).unwrap();
    let mut rng = ampr_core::seed::rng(9);
    for _ in 0..3 {
        let u: Vec<f64> = (0..2000).map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let su = &ds.s * DVector::from_column_slice(&u);
        let q = su.norm_squared() / ds.n_s() as f64;
        assert!((q / ds.sigma.inner(&u, &u) - 1.0).abs() < 0.05);
    }
}

#[test]
fn responses_are_linear_in_the_signal() {
    let ds = generate(&spec(), 300, 2).unwrap();
    let xb = &ds.x * DVector::from_column_slice(&ds.beta0);
    for i in 0..ds.n_x() {
        assert_eq!(ds.y_x[i], xb[i] + ds.eps_x[i]);
    }
}

#[test]
fn unpenalised_ref_lasso_solves_the_normal_equations() {
    let ds = generate(&spec(), 200, 5).unwrap();
    let a = gram(&ds.w);
    let c = xty(&ds);
    let opts = LassoOptions { kkt_tol: 1e-12, ..Default::default() };
    let cd = lasso_cd(&a, &c, 0.0, None, &opts).unwrap();
    let direct = a.clone().lu().solve(&DVector::from_column_slice(&c)).unwrap();
    for (x, y) in cd.beta.iter().zip(direct.iter()) {
        assert!((x - y).abs() < 1e-6);
    }
    let ridge0 = ridge_solve(&a, &c, 0.0).unwrap();
    for (x, y) in ridge0.iter().zip(direct.iter()) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn large_penalty_gives_zero() {
    let ds = generate(&spec(), 200, 6).unwrap();
    let cmax = xty(&ds).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lambda = 1.01 * cmax * (200.0f64).sqrt();
    assert!(fit_ref_lasso(&ds, lambda).unwrap().iter().all(|b| *b == 0.0));
    assert!(fit_lasso(&ds, lambda).unwrap().iter().all(|b| *b == 0.0));
    let below = fit_ref_lasso(&ds, 0.9 * lambda).unwrap();
    assert!(below.iter().any(|b| *b != 0.0));
}

#[test]
fn panel_equal_to_training_collapses_estimators() {
    let mut ds = generate(&spec(), 200, 7).unwrap();
    ds.w = ds.x.clone();
    for lambda in [0.1, 1.0] {
        let a = fit_ref_lasso(&ds, lambda).unwrap();
        let b = fit_lasso(&ds, lambda).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-8));
        let a = fit_ref_ridge(&ds, lambda).unwrap();
        let b = fit_ridge(&ds, lambda).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-10));
    }
}

#[test]
fn ridge_solution_satisfies_its_linear_system() {
    let ds = generate(&spec(), 300, 8).unwrap();
    let a = gram(&ds.x);
    let c = xty(&ds);
    let b = fit_ridge(&ds, 0.3).unwrap();
    let res = (&a + DMatrix::identity(300, 300) * 0.3) * DVector::from_column_slice(&b) - DVector::from_column_slice(&c);
    assert!(res.amax() < 1e-10);

    // lambda ||beta|| tends to ||c|| for the reference ridge
    let cn = DVector::from_column_slice(&c).norm();
    let mut prev = f64::INFINITY;
    for lambda in [1e2, 1e3, 1e4] {
        let n = DVector::from_vec(fit_ref_ridge(&ds, lambda).unwrap()).norm() * lambda;
        let gap = (n / cn - 1.0).abs();
        assert!(gap < prev);
        prev = gap;
    }
    assert!(prev < 1e-3);
}

#[test]
fn evaluation_conventions() {
    let ds = generate(&spec(), 2000, 11).unwrap();
    let (mse, r2) = evaluate(&ds, &ds.beta0).unwrap();
    assert_eq!(mse, 0.0);
    assert!((r2 - 0.6).abs() < 0.03, "{r2}");
    let (mse, r2) = evaluate(&ds, &vec![0.0; 2000]).unwrap();
    assert!((mse - ds.sigma.inner(&ds.beta0, &ds.beta0)).abs() < 1e-15);
    assert_eq!(r2, 0.0);
    let fit = fit_ridge(&ds, 1.0).unwrap();
    let scaled: Vec<f64> = fit.iter().map(|b| 3.7 * b).collect();
    assert!((evaluate(&ds, &fit).unwrap().1 - evaluate(&ds, &scaled).unwrap().1).abs() < 1e-12);
}

#[test]
fn monte_carlo_errors_shrink_with_replicates() {
    let s = spec();
    for seed in 0..5 {
        let a = monte_carlo(&s, 100, 1.0, Estimator::Ridge, 20, seed).unwrap();
        let b = monte_carlo(&s, 100, 1.0, Estimator::Ridge, 80, seed + 100).unwrap();
        let ratio = a.mse_se / b.mse_se;
        assert!((1.2..3.5).contains(&ratio), "{seed}: {ratio}");
    }
}

#[test]
fn monte_carlo_is_reproducible() {
    let s = spec();
    let pts = [(Estimator::RefLasso, 0.5), (Estimator::Ridge, 1.0)];
    let a = monte_carlo_grid(&s, 120, &pts, 6, 42).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| monte_carlo_grid(&s, 120, &pts, 6, 42).unwrap());
    assert_eq!(a, b);
    assert_eq!(generate(&s, 100, 3).unwrap(), generate(&s, 100, 3).unwrap());
}

#[test]
fn dataset_files_round_trip() {
    let s = spec().with_covariance(CovarianceModel::ar1(80, 0.4));
    let ds = generate(&s, 80, 13).unwrap();
    let mut f = tempfile::tempfile().unwrap();
    write_dataset(&ds, &mut f).unwrap();
    use std::io::{Seek, SeekFrom};
    f.seek(SeekFrom::Start(0)).unwrap();
    let back = read_dataset(&mut f).unwrap();
    assert_eq!(ds, back);

    let mut bad: &[u8] = b"not a dataset";
    assert!(read_dataset(&mut bad).is_err());
}

// Gram matrices at p = 4000 take minutes; run with --ignored.
#[test]
#[ignore]
fn gap_to_theory_shrinks_with_dimension() {
    use ampr_core::scalar_l1::{theory_risk, SolverOptions};
    let s = spec();
    for est in Estimator::ALL {
        let th = theory_risk(&s, est, 0.5, &SolverOptions::default()).unwrap().mse;
        let gap = |p| {
            let r = monte_carlo(&s, p, 0.5, est, 10, 1).unwrap();
            (r.mse_mean / th - 1.0).abs()
        };
        assert!(gap(4000) <= gap(1000), "{est:?}");
    }
}

#[test]
fn signal_is_standardized_unless_disabled() {
    let s = spec().with_covariance(CovarianceModel::ar1(400, 0.3));
    let ds = generate(&s, 400, 21).unwrap();
    let target = s.m2() * ds.sigma.mean_eigenvalue();
    assert!((ds.sigma.inner(&ds.beta0, &ds.beta0) / target - 1.0).abs() < 1e-12);
    let raw = generate_with(&s, 400, 21, &GenerateOptions { standardize_signal: false }).unwrap();
    let f = ds.beta0.iter().zip(&raw.beta0).find(|(_, b)| **b != 0.0).map(|(a, b)| a / b).unwrap();
    assert!(ds.beta0.iter().zip(&raw.beta0).all(|(a, b)| (a - f * b).abs() < 1e-15));
    assert!((raw.sigma.inner(&raw.beta0, &raw.beta0) / target - 1.0).abs() > 1e-6);
}
