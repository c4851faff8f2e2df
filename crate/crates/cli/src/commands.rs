//! Subcommands that turn an [`ExperimentConfig`] into CSV tables.

use ampr_core::amp::{
    instance_spec, run_ref_lasso_amp_with, run_ref_ridge_amp_with, se_recursion, se_recursion_mc, trajectory_csv, AmpData,
    AmpInit, AmpOptions, SeInit,
};
use ampr_core::empirical::{fit_ref_lasso, fit_ref_ridge, generate, monte_carlo_grid, EmpiricalRisk};
use ampr_core::general_l1::{self, general_l1_risk, solve_general_l1_se_with, McOptions, McSample};
use ampr_core::scalar_l1::{
    lasso_alpha_min, lasso_lambda_of_alpha, ref_lasso_alpha_min, ref_lasso_calibrate_alpha, ref_lasso_lambda_of_alpha,
    solve_lasso_se, solve_ref_lasso_se, theory_risk, SolverOptions,
};
use ampr_core::{Error, Estimator, ProblemSpec, Result, RiskReport, SignalPrior};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, InitKind};
use crate::output::{num, Table};

pub const SWEEP_HEADER: &[&str] = &[
    "gamma_x",
    "gamma_w",
    "h2_x",
    "kappa",
    "estimator",
    "lambda",
    "alpha",
    "tau_star",
    "b_star",
    "mse_theory",
    "r2_theory",
    "mse_emp",
    "mse_emp_se",
    "r2_emp",
    "r2_emp_se",
];

/// No fixed point exists at this tuning value; reported as blank cells.
pub fn is_infeasible(e: &Error) -> bool {
    matches!(e, Error::InfeasibleRegime(_) | Error::AlphaBelowMin { .. } | Error::NonPositiveRho(_))
}

fn feasible<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if is_infeasible(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn kappa_of(spec: &ProblemSpec) -> Option<f64> {
    match spec.prior {
        SignalPrior::BernoulliGaussian { kappa, .. } => Some(kappa),
        _ => None,
    }
}

pub fn spec_cells(spec: &ProblemSpec) -> Vec<String> {
    vec![num(Some(spec.gamma_x)), num(Some(spec.gamma_w)), num(Some(spec.h2_x)), num(kappa_of(spec))]
}

fn mc_options(cfg: &ExperimentConfig) -> McOptions {
    McOptions { p_mc: cfg.mc_p, reps: cfg.mc_reps, seed: cfg.seed, ..Default::default() }
}

fn needs_sample(spec: &ProblemSpec, estimators: &[Estimator]) -> bool {
    !spec.covariance.is_identity() && estimators.contains(&Estimator::RefLasso)
}

/// Theory at one point; `None` where no fixed point exists.
pub fn theory_point(spec: &ProblemSpec, est: Estimator, lambda: f64, sample: Option<&McSample>) -> Result<Option<RiskReport>> {
    let identity_or_ridge = spec.covariance.is_identity() || matches!(est, Estimator::Ridge | Estimator::RefRidge);
    feasible(if identity_or_ridge {
        theory_risk(spec, est, lambda, &SolverOptions::default())
    } else {
        match (est, sample) {
            (Estimator::RefLasso, Some(s)) => solve_general_l1_se_with(spec, s, lambda).and_then(|fp| general_l1_risk(spec, s, &fp)),
            _ => Err(Error::Unsupported("lasso theory under identity covariance only")),
        }
    })
}

pub fn sweep_row(spec: &ProblemSpec, est: Estimator, lambda: f64, th: Option<&RiskReport>, emp: Option<&EmpiricalRisk>) -> Vec<String> {
    let mut row = spec_cells(spec);
    let pair = th.map(|r| r.fixed_point.pair());
    row.extend([
        est.name().to_string(),
        num(Some(lambda)),
        num(th.and_then(|r| r.fixed_point.alpha())),
        num(pair.map(|p| p.0)),
        num(pair.map(|p| p.1)),
        num(th.map(|r| r.mse)),
        num(th.map(|r| r.r2)),
        num(emp.map(|e| e.mse_mean)),
        num(emp.map(|e| e.mse_se)),
        num(emp.map(|e| e.r2_mean)),
        num(emp.map(|e| e.r2_se)),
    ]);
    row
}

fn theory_rows(cfg: &ExperimentConfig, spec: &ProblemSpec) -> Result<Vec<(Estimator, f64, Option<RiskReport>)>> {
    let sample = if needs_sample(spec, &cfg.estimators) { Some(McSample::new(spec, &mc_options(cfg))?) } else { None };
    let points: Vec<(Estimator, f64)> =
        cfg.estimators.iter().flat_map(|&e| cfg.lambdas.iter().map(move |&l| (e, l))).collect();
    points
        .par_iter()
        .map(|&(e, l)| Ok((e, l, theory_point(spec, e, l, sample.as_ref())?)))
        .collect()
}

pub fn theory_sweep(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    cfg.require_lambdas()?;
    let mut t = Table::new("theory_sweep.csv", SWEEP_HEADER);
    for spec in cfg.specs()? {
        for (e, l, th) in theory_rows(cfg, &spec)? {
            t.rows.push(sweep_row(&spec, e, l, th.as_ref(), None));
        }
    }
    Ok(vec![t])
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    cfg.require_lambdas()?;
    let mut t = Table::new("simulate.csv", SWEEP_HEADER);
    for spec in cfg.specs()? {
        let th = theory_rows(cfg, &spec)?;
        let points: Vec<(Estimator, f64)> = th.iter().map(|(e, l, _)| (*e, *l)).collect();
        let emp = monte_carlo_grid(&spec, cfg.p, &points, cfg.reps, cfg.seed)?;
        for ((e, l, th), emp) in th.iter().zip(&emp) {
            t.rows.push(sweep_row(&spec, *e, *l, th.as_ref(), Some(emp)));
        }
    }
    Ok(vec![t])
}

pub const CALIBRATE_HEADER: &[&str] =
    &["gamma_x", "gamma_w", "h2_x", "kappa", "estimator", "direction", "lambda", "alpha", "alpha_min", "roundtrip_error"];

struct Calibrator<'a> {
    spec: &'a ProblemSpec,
    est: Estimator,
    sample: Option<McSample>,
}

impl Calibrator<'_> {
    fn alpha_min(&self) -> Result<f64> {
        match (&self.sample, self.est) {
            (Some(s), _) => general_l1::alpha_min(self.spec, s),
            (None, Estimator::RefLasso) => ref_lasso_alpha_min(self.spec),
            (None, _) => lasso_alpha_min(self.spec.gamma_x),
        }
    }

    fn alpha_of(&self, lambda: f64) -> Result<f64> {
        let o = SolverOptions::default();
        match (&self.sample, self.est) {
            (Some(s), _) => general_l1::calibrate_alpha(self.spec, s, lambda),
            (None, Estimator::RefLasso) => ref_lasso_calibrate_alpha(self.spec, lambda, &o),
            (None, _) => Ok(solve_lasso_se(self.spec, lambda, &o)?.alpha),
        }
    }

    fn lambda_of(&self, alpha: f64) -> Result<f64> {
        let o = SolverOptions::default();
        match (&self.sample, self.est) {
            (Some(s), _) => general_l1::lambda_of_alpha(self.spec, s, alpha),
            (None, Estimator::RefLasso) => ref_lasso_lambda_of_alpha(self.spec, alpha, &o),
            (None, _) => lasso_lambda_of_alpha(self.spec, alpha, &o),
        }
    }
}

pub fn calibrate(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    if cfg.lambdas.is_empty() && cfg.alphas.is_empty() {
        return Err(Error::ConfigParse("calibrate needs lambda, lambda.grid or alpha".into()));
    }
    let ests: Vec<Estimator> =
        cfg.estimators.iter().copied().filter(|e| matches!(e, Estimator::Lasso | Estimator::RefLasso)).collect();
    if ests.is_empty() {
        return Err(Error::ConfigParse("calibrate needs lasso or ref_lasso among the estimators".into()));
    }
    let mut t = Table::new("calibrate.csv", CALIBRATE_HEADER);
    for spec in cfg.specs()? {
        for &est in &ests {
            let sample = if spec.covariance.is_identity() { None } else { Some(McSample::new(&spec, &mc_options(cfg))?) };
            let cal = Calibrator { spec: &spec, est, sample };
            let amin = cal.alpha_min()?;
            let lam_rows: Vec<Vec<String>> = cfg
                .lambdas
                .par_iter()
                .map(|&l| {
                    let a = feasible(cal.alpha_of(l))?;
                    let back = match a {
                        Some(a) => feasible(cal.lambda_of(a))?,
                        None => None,
                    };
                    let mut row = spec_cells(&spec);
                    row.extend([
                        est.name().into(),
                        "lambda_to_alpha".into(),
                        num(Some(l)),
                        num(a),
                        num(Some(amin)),
                        num(back.map(|b| (b - l).abs())),
                    ]);
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            let alpha_rows: Vec<Vec<String>> = cfg
                .alphas
                .par_iter()
                .map(|&a| {
                    // lambda(alpha) is zero where the divergence reaches one
                    let l = feasible(cal.lambda_of(a))?.filter(|l| *l > 0.0);
                    let back = match l {
                        Some(l) => feasible(cal.alpha_of(l))?,
                        None => None,
                    };
                    let mut row = spec_cells(&spec);
                    row.extend([
                        est.name().into(),
                        "alpha_to_lambda".into(),
                        num(l),
                        num(Some(a)),
                        num(Some(amin)),
                        num(back.map(|b| (b - a).abs())),
                    ]);
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            t.rows.extend(lam_rows);
            t.rows.extend(alpha_rows);
        }
    }
    Ok(vec![t])
}

pub const AMP_HEADER: &[&str] = &["gamma_x", "gamma_w", "h2_x", "kappa", "lambda", "t", "tau2_emp", "tau2_se", "b_t", "dist_to_estimator"];

/// One synthetic instance per spec; AMP trajectories against the state
/// evolution evaluated at the instance's own coefficient law.
pub fn amp_run(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let lambdas = cfg.require_lambdas()?;
    if cfg.amp_estimator == Estimator::RefRidge && cfg.amp_init == InitKind::Oracle {
        return Err(Error::ConfigParse("amp.init = oracle is available for ref_lasso only".into()));
    }
    let mut t = Table::new("amp_run.csv", AMP_HEADER);
    for spec in cfg.specs()? {
        let ds = generate(&spec, cfg.p, cfg.seed)?;
        let data = AmpData::from_dataset(&ds)?;
        let inst = instance_spec(&spec, &ds)?;
        let identity = spec.covariance.is_identity();
        let sample = if !identity && cfg.amp_estimator == Estimator::RefLasso {
            Some(McSample::new(&inst, &mc_options(cfg))?)
        } else {
            None
        };
        let sp = (cfg.p as f64).sqrt();
        let tables: Vec<String> = lambdas
            .par_iter()
            .map(|&l| -> Result<String> {
                let mut opts = AmpOptions { t_max: cfg.t_max, seed: cfg.seed, ..Default::default() };
                let (run, se, fit) = match cfg.amp_estimator {
                    Estimator::RefRidge => (run_ref_ridge_amp_with(&data, l, &opts)?, None, fit_ref_ridge(&ds, l)?),
                    _ => {
                        let se_init = if cfg.amp_init == InitKind::Oracle { SeInit::Oracle } else { SeInit::Zero };
                        let se = match &sample {
                            None => feasible(se_recursion(&inst, l, cfg.t_max, se_init, true))?,
                            Some(s) => feasible(se_recursion_mc(&inst, s, l, cfg.t_max, se_init, true))?,
                        };
                        if cfg.amp_init == InitKind::Oracle {
                            let (tau, b) = match &sample {
                                None => {
                                    let fp = solve_ref_lasso_se(&inst, l, &SolverOptions::default())?;
                                    (fp.tau_star, fp.b_star)
                                }
                                Some(s) => {
                                    let fp = solve_general_l1_se_with(&inst, s, l)?;
                                    (fp.tau_star, fp.b_star)
                                }
                            };
                            opts.init = AmpInit::Oracle { tau, b };
                        }
                        (run_ref_lasso_amp_with(&data, l, &opts)?, se, fit_ref_lasso(&ds, l)?)
                    }
                };
                if let Some(at) = run.diverged_at {
                    eprintln!("note: AMP iterate passed the divergence guard at t = {at} (lambda {l})");
                }
                let fit: Vec<f64> = fit.iter().map(|b| b * sp).collect();
                Ok(trajectory_csv(&run, se.as_ref(), Some(&fit)))
            })
            .collect::<Result<_>>()?;
        for (l, csv) in lambdas.iter().zip(&tables) {
            for line in csv.lines().skip(1) {
                let mut row = spec_cells(&spec);
                row.push(num(Some(*l)));
                row.extend(line.split(',').map(|c| num(c.parse::<f64>().ok())));
                t.rows.push(row);
            }
        }
    }
    Ok(vec![t])
}
