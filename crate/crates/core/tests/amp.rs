use ampr_core::amp::*;
use ampr_core::empirical::{fit_ref_lasso, fit_ref_ridge, generate, SyntheticDataset};
use ampr_core::ridge::c_star_iid;
use ampr_core::scalar_l1::{solve_ref_lasso_se, SolverOptions};
use ampr_core::special::soft;
use ampr_core::ProblemSpec;
use nalgebra::DMatrix;

fn spec() -> ProblemSpec {
    ProblemSpec::iid_bg(0.5, 0.5, 0.05, 0.6).unwrap()
}

fn rescaled(ds: &SyntheticDataset, beta: &[f64]) -> Vec<f64> {
    let sp = (ds.p() as f64).sqrt();
    beta.iter().map(|b| b * sp).collect()
}

fn second_moment(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>() / u.len() as f64
}

#[test]
fn goe_entries_and_norm() {
    let p = 1000;
    let a = sample_goe(p, 4);
    assert_eq!(a, a.transpose());
    let off: Vec<f64> = (0..p).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)]).collect();
    let n = off.len() as f64;
    let mean = off.iter().sum::<f64>() / n;
    let var = off.iter().map(|x| x * x).sum::<f64>() / n;
    // sd of the sample mean is sqrt(1/(p n)), of the sample variance sqrt(2/n)/p
    assert!(mean.abs() < 3.0 * (1.0 / (p as f64 * n)).sqrt());
    assert!((var * p as f64 - 1.0).abs() < 3.0 * (2.0 / n).sqrt());
    let diag = (0..p).map(|i| a[(i, i)].powi(2)).sum::<f64>() / p as f64;
    assert!((diag * p as f64 - 2.0).abs() < 0.3);

    let big = sample_goe(2000, 5);
    let eig = big.symmetric_eigenvalues();
    let norm = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((norm - 2.0).abs() < 0.15, "{norm}");
}

#[test]
fn lasso_fit_is_a_fixed_point() {
    let ds = generate(&spec(), 400, 3).unwrap();
    let fit = rescaled(&ds, &fit_ref_lasso(&ds, 0.5).unwrap());
    let run = run_ref_lasso_amp(&ds, 0.5, &AmpOptions { t_max: 5, init: AmpInit::Warm(fit.clone()), ..Default::default() }).unwrap();
    for w in run.states.windows(2) {
        assert!(mean_sq_dist(&w[0].beta, &w[1].beta) < 1e-6);
    }
    assert!(mean_sq_dist(&run.states[5].beta, &fit) < 1e-10);
}

#[test]
fn lasso_amp_converges_to_the_fit() {
    let ds = generate(&spec(), 500, 8).unwrap();
    for lambda in [0.2, 1.0] {
        let fit = rescaled(&ds, &fit_ref_lasso(&ds, lambda).unwrap());
        let run = run_ref_lasso_amp(&ds, lambda, &AmpOptions { t_max: 30, ..Default::default() }).unwrap();
        assert!(run.diverged_at.is_none());
        let d: Vec<f64> = run.states.iter().map(|s| mean_sq_dist(&s.beta, &fit)).collect();
        assert!(d[30] < 1e-3, "{lambda}: {}", d[30]);
        assert!(d[30] < d[5] && d[5] < d[0]);
        for s in &run.states {
            assert!(s.b > -1.0 && s.beta.iter().all(|x| x.is_finite()));
        }
    }
}

#[test]
fn iterates_follow_state_evolution() {
    let ds = generate(&spec(), 1000, 21).unwrap();
    let ispec = instance_spec(&spec(), &ds).unwrap();
    let lambda = 0.5;
    let run = run_ref_lasso_amp(&ds, lambda, &AmpOptions { t_max: 10, ..Default::default() }).unwrap();
    let se = se_recursion(&ispec, lambda, 10, SeInit::Zero, true).unwrap();
    for s in &run.states[1..] {
        let m = second_moment(&s.beta);
        assert!((m / se.second_moment[s.t] - 1.0).abs() < 0.1, "t {}: {m} vs {}", s.t, se.second_moment[s.t]);
        // The noise level itself fluctuates by about sqrt(2/p) relative.
        assert!((s.tau2_emp / se.tau2[s.t] - 1.0).abs() < 0.15, "t {}: {} vs {}", s.t, s.tau2_emp, se.tau2[s.t]);
    }
    for s in &run.states[2..] {
        assert!((s.cross_emp / se.tau_cross[s.t - 1] - 1.0).abs() < 0.15);
    }
}

#[test]
fn dropping_the_memory_term_breaks_tracking() {
    let ds = generate(&spec(), 1000, 21).unwrap();
    let ispec = instance_spec(&spec(), &ds).unwrap();
    // small lambda, where b_t is large enough for the memory term to matter
    let lambda = 0.1;
    let se = se_recursion(&ispec, lambda, 10, SeInit::Zero, true).unwrap();
    let dev = |onsager| {
        let run = run_ref_lasso_amp(&ds, lambda, &AmpOptions { t_max: 10, onsager, ..Default::default() }).unwrap();
        match (run.diverged_at, run.states.get(10)) {
            (None, Some(s)) => (second_moment(&s.beta) - se.second_moment[10]).abs(),
            _ => f64::INFINITY,
        }
    };
    let (with, without) = (dev(true), dev(false));
    assert!(without > 3.0 * with, "{without} vs {with}");

    let run = run_ref_lasso_amp(&ds, lambda, &AmpOptions { t_max: 3, onsager: false, ..Default::default() }).unwrap();
    assert!(run.states.iter().all(|s| s.b == 0.0));
}

#[test]
fn ridge_amp_reaches_c_star_and_the_closed_form() {
    let ds = generate(&spec(), 600, 2).unwrap();
    let lambda = 0.7;
    let run = run_ref_ridge_amp(&ds, lambda, &AmpOptions { t_max: 50, ..Default::default() }).unwrap();
    let c_star = c_star_iid(0.5, lambda);
    assert!((run.states[50].b - c_star).abs() < 1e-3);
    let fit = rescaled(&ds, &fit_ref_ridge(&ds, lambda).unwrap());
    assert!(mean_sq_dist(&run.states[50].beta, &fit) < 1e-4);
    // c_{t+1} = (1 + c_t) (1/n_w) sum_i s_i / (s_i + lambda (1 + c_t)) with s_i = 1
    let k = ds.p() as f64 / ds.n_w() as f64;
    for w in run.states.windows(2) {
        let c = w[0].b;
        assert_eq!(w[1].b, (1.0 + c) * (ds.p() as f64 * (1.0 / (1.0 + lambda * (1.0 + c)))) / ds.n_w() as f64);
        assert!(w[1].b <= k * (1.0 + c));
    }
}

#[test]
fn zero_response_keeps_iterates_at_zero() {
    let mut ds = generate(&spec(), 200, 6).unwrap();
    ds.y_x.iter_mut().for_each(|y| *y = 0.0);
    for run in [
        run_ref_ridge_amp(&ds, 1.0, &AmpOptions { t_max: 10, ..Default::default() }).unwrap(),
        run_ref_lasso_amp(&ds, 1.0, &AmpOptions { t_max: 10, ..Default::default() }).unwrap(),
    ] {
        assert!(run.states.iter().all(|s| s.beta.iter().all(|x| *x == 0.0)));
    }
}

#[test]
fn runs_are_deterministic() {
    let ds = generate(&spec(), 200, 12).unwrap();
    let fp = solve_ref_lasso_se(&spec(), 0.5, &SolverOptions::default()).unwrap();
    let opts = AmpOptions { t_max: 8, init: AmpInit::Oracle { tau: fp.tau_star, b: fp.b_star }, seed: 99, ..Default::default() };
    let a = run_ref_lasso_amp(&ds, 0.5, &opts).unwrap();
    let b = run_ref_lasso_amp(&ds, 0.5, &opts).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

struct Tanh;

impl MatrixDenoiser for Tanh {
    fn apply(&self, _: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.map(f64::tanh)
    }
}

struct Zero;

impl MatrixDenoiser for Zero {
    fn apply(&self, _: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::zeros(x.nrows(), x.ncols())
    }
}

#[test]
fn tanh_second_moments_follow_scalar_recursion() {
    let n = 4000;
    let mut rng = ampr_core::seed::rng(17);
    let x0 = DMatrix::from_fn(n, 1, |_, _| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng));
    let mut prog = MatrixAmpProgram::new(x0.clone(), Tanh);
    let xs = run_symmetric_matrix_amp(&mut prog, 3, 6).unwrap();
    // K_{t+1} = E tanh(sqrt(K_t) Z)^2, started from the realised m^0
    let mut k = x0.map(|v| v.tanh().powi(2)).sum() / n as f64;
    for x in &xs[1..] {
        let emp = x.norm_squared() / n as f64;
        assert!((emp / k - 1.0).abs() < 0.05, "{emp} vs {k}");
        let s = k.sqrt();
        k = ampr_core::quadrature::gaussian_expect_adaptive(|z| (s * z).tanh().powi(2), 1e-12);
    }
}

#[test]
fn zero_denoiser_gives_zero_iterates() {
    let x0 = DMatrix::from_element(300, 2, 1.0);
    let mut prog = MatrixAmpProgram::new(x0, Zero);
    let xs = run_symmetric_matrix_amp(&mut prog, 1, 4).unwrap();
    assert!(xs[1..].iter().all(|x| x.iter().all(|v| *v == 0.0)));
}

#[test]
fn hutchinson_is_exact_for_separable_maps() {
    let x = DMatrix::from_fn(500, 1, |i, _| (i as f64 * 0.37).sin());
    let b = hutchinson_jacobian(&Tanh, 0, &x, 8, 1, 1e-6);
    let exact = x.map(|v| 1.0 - v.tanh().powi(2)).sum() / 500.0;
    assert!((b[(0, 0)] - exact).abs() < 1e-8);
}

#[test]
fn matrix_embedding_reproduces_lasso_amp() {
    let ds = generate(&spec(), 300, 31).unwrap();
    let lambda = 0.4;
    let t_max = 10;
    let direct = run_ref_lasso_amp(&ds, lambda, &AmpOptions { t_max, ..Default::default() }).unwrap();
    let (a, mut prog) = ref_lasso_embedding(&ds, lambda, 7).unwrap();
    run_symmetric_matrix_amp_with(&a, &mut prog, 2 * t_max + 1).unwrap();
    let emb = &prog.denoiser;
    for t in 0..=t_max {
        let d = direct.states[t].beta.iter().zip(&emb.iterates[t]).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(d < 1e-8, "t {t}: {d}");
        assert!((direct.states[t].b - emb.b[t]).abs() < 1e-12);
    }
}

#[test]
fn oracle_start_is_stationary() {
    for lambda in [0.1, 0.5, 2.0] {
        let fp = solve_ref_lasso_se(&spec(), lambda, &SolverOptions::default()).unwrap();
        let se = se_recursion(&spec(), lambda, 20, SeInit::Oracle, true).unwrap();
        let t2 = fp.tau_star.powi(2);
        for t in 0..=20 {
            assert!((se.tau2[t] - t2).abs() < 1e-10, "{lambda} {t}: {} vs {t2}", se.tau2[t]);
            assert!((se.b[t] - fp.b_star).abs() < 1e-10);
        }
    }
}

#[test]
fn state_evolution_contracts_from_above() {
    let lambda = 0.5;
    let fp = solve_ref_lasso_se(&spec(), lambda, &SolverOptions::default()).unwrap();
    let t2 = fp.tau_star.powi(2);
    let se = se_recursion(&spec(), lambda, 100, SeInit::Custom { tau2: 10.0 * t2, b: fp.b_star }, true).unwrap();
    for w in se.tau2.windows(2) {
        assert!(w[1] <= w[0] + 1e-15);
    }
    assert!((se.tau2[100] - t2).abs() < 1e-6 * t2);
}

#[test]
fn data_term_bounds_tau_from_below() {
    let s = spec();
    for lambda in [0.05, 0.5, 5.0] {
        let se = se_recursion(&s, lambda, 30, SeInit::Zero, true).unwrap();
        for t in 1..=30 {
            let floor = s.gamma_x * (1.0 + se.b[t - 1]).powi(2) * s.m2() / s.h2_x;
            assert!(se.tau2[t] >= floor);
            assert!(se.tau2[t] > 0.0);
        }
    }
}

#[test]
fn cross_terms_match_a_direct_double_integral() {
    // E[u^1 u^2] from the noise covariance tau_{1,2}, against plain sampling.
    let s = spec();
    let lambda = 0.5;
    let se = se_recursion(&s, lambda, 4, SeInit::Zero, true).unwrap();
    let (v1, v2, c) = (se.tau2[1], se.tau2[2], se.tau_cross[1]);
    let (a1, a2) = (1.0 + se.b[0], 1.0 + se.b[1]);
    let rho = c / (v1 * v2).sqrt();
    let mut rng = ampr_core::seed::rng(5);
    let n = 400_000;
    let (mut acc, mut acc2) = (0.0, 0.0);
    for _ in 0..n {
        let b = s.prior.sample(&mut rng);
        let z1: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
        let z2: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
        let n1 = v1.sqrt() * z1;
        let n2 = v2.sqrt() * (rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * z2);
        let v = soft(a1 * b + n1, lambda * a1) * soft(a2 * b + n2, lambda * a2);
        acc += v;
        acc2 += v * v;
    }
    let mc = acc / n as f64;
    let se_mc = ((acc2 / n as f64 - mc * mc) / n as f64).sqrt();
    let pred = (se.tau_cross[2] - s.gamma_x * (1.0 + se.b[1]) * (1.0 + se.b[2]) * s.m2() / s.h2_x) / s.gamma_w;
    assert!((mc - pred).abs() < 4.0 * se_mc, "{mc} vs {pred} (se {se_mc})");
}

#[test]
fn trajectory_table_has_the_expected_columns() {
    let ds = generate(&spec(), 100, 1).unwrap();
    let run = run_ref_lasso_amp(&ds, 0.5, &AmpOptions { t_max: 3, ..Default::default() }).unwrap();
    let se = se_recursion(&spec(), 0.5, 3, SeInit::Zero, true).unwrap();
    let csv = trajectory_csv(&run, Some(&se), None);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,tau2_emp,tau2_se,b_t,dist_to_estimator");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,,,"));
    assert_eq!(lines[2].split(',').count(), 5);
}

#[test]
fn correlated_design_follows_monte_carlo_state_evolution() {
    use ampr_core::general_l1::{McOptions, McSample};
    use ampr_core::CovarianceModel;
    // With kappa p spikes the realised second moment fluctuates by roughly
    // 2 tau / sqrt(p m2) relative; p = 1500 keeps that near 5%.
    let p = 1500;
    let s = spec().with_covariance(CovarianceModel::ar1(p, 0.3));
    let ds = generate(&s, p, 40).unwrap();
    let ispec = instance_spec(&s, &ds).unwrap();
    let sample = McSample::new(&ispec, &McOptions { reps: 20, seed: 3, ..Default::default() }).unwrap();
    let lambda = 0.5;
    let se = se_recursion_mc(&ispec, &sample, lambda, 8, SeInit::Zero, true).unwrap();
    let run = run_ref_lasso_amp(&ds, lambda, &AmpOptions { t_max: 8, ..Default::default() }).unwrap();
    for st in &run.states[1..] {
        let m = ds.sigma.inner(&st.beta, &st.beta) / p as f64;
        assert!((m / se.second_moment[st.t] - 1.0).abs() < 0.1, "t {}: {m} vs {}", st.t, se.second_moment[st.t]);
    }
    let fit = rescaled(&ds, &fit_ref_lasso(&ds, lambda).unwrap());
    assert!(mean_sq_dist(&run.states[8].beta, &fit) < 1e-3);
}

#[test]
fn monte_carlo_state_evolution_agrees_with_closed_form() {
    use ampr_core::general_l1::{McOptions, McSample};
    let sample = McSample::new(&spec(), &McOptions { reps: 60, seed: 8, ..Default::default() }).unwrap();
    let a = se_recursion(&spec(), 0.5, 10, SeInit::Zero, true).unwrap();
    let b = se_recursion_mc(&spec(), &sample, 0.5, 10, SeInit::Zero, true).unwrap();
    for t in 1..=10 {
        assert!((a.tau2[t] / b.tau2[t] - 1.0).abs() < 0.02, "{t}: {} vs {}", a.tau2[t], b.tau2[t]);
    }
}
