//! Figure recipes: theory curves at biobank scale (p = 461,488), with an
//! optional desk-scale Monte Carlo check at the same aspect ratios.

use ampr_core::empirical::{monte_carlo, EmpiricalRisk};
use ampr_core::scalar_l1::{
    best_lambda, lasso_alpha_min, lasso_lambda_of_alpha, log_grid, ref_lasso_alpha_min, ref_lasso_lambda_of_alpha, theory_risk,
    Objective, SolverOptions,
};
use ampr_core::{Error, Estimator, ProblemSpec, Result, RiskReport};
use clap::ValueEnum;
use rayon::prelude::*;

use crate::commands::{is_infeasible, sweep_row, SWEEP_HEADER};
use crate::output::{num, Table};

pub const P_FIG: f64 = 461_488.0;
const SIZES: [f64; 3] = [50_000.0, 100_000.0, 200_000.0];
const L1: [Estimator; 2] = [Estimator::Lasso, Estimator::RefLasso];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Recipe {
    /// Best R^2 of lasso and reference lasso over sparsity and heritability.
    SparsityHeritability,
    /// Best R^2 as the panel size and the training size vary.
    PanelSize,
    /// Reference-lasso MSE and R^2 along a lambda grid.
    LambdaCurves,
    /// Lasso and reference-lasso risks along an alpha grid.
    AlphaCurves,
}

impl Recipe {
    pub fn file(&self) -> &'static str {
        match self {
            Recipe::SparsityHeritability => "fig_sparsity_heritability.csv",
            Recipe::PanelSize => "fig_panel_size.csv",
            Recipe::LambdaCurves => "fig_lambda_curves.csv",
            Recipe::AlphaCurves => "fig_alpha_curves.csv",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Recipe::SparsityHeritability => "sparsity-heritability",
            Recipe::PanelSize => "panel-size",
            Recipe::LambdaCurves => "lambda-curves",
            Recipe::AlphaCurves => "alpha-curves",
        }
    }
}

/// Settings the recipes read from an optional config.
#[derive(Debug, Clone)]
pub struct FigureSettings {
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub validate: bool,
    pub p: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct Point {
    series: &'static str,
    n_x: f64,
    n_w: Option<f64>,
    h2: f64,
    kappa: f64,
    est: Estimator,
}

impl Point {
    fn spec(&self) -> Result<ProblemSpec> {
        // the plain lasso does not use the panel; any gamma_w works
        let n_w = self.n_w.unwrap_or(self.n_x);
        ProblemSpec::iid_bg(P_FIG / self.n_x, P_FIG / n_w, self.kappa, self.h2)
    }
}

fn header() -> Vec<&'static str> {
    let mut h = vec!["series", "n_x", "n_w"];
    h.extend_from_slice(SWEEP_HEADER);
    h
}

fn optional(r: Result<RiskReport>) -> Result<Option<RiskReport>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if is_infeasible(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

fn validation(spec: &ProblemSpec, est: Estimator, lambda: f64, s: &FigureSettings) -> Result<Option<EmpiricalRisk>> {
    if !s.validate {
        return Ok(None);
    }
    match monte_carlo(spec, s.p, lambda, est, s.reps, s.seed) {
        Ok(r) => Ok(Some(r)),
        // aspect ratios whose sample sizes round below the minimum at desk scale
        Err(Error::DimensionTooSmall(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn row(pt: &Point, spec: &ProblemSpec, lambda: Option<f64>, th: Option<&RiskReport>, emp: Option<&EmpiricalRisk>) -> Vec<String> {
    let mut r = vec![pt.series.to_string(), num(Some(pt.n_x)), num(pt.n_w)];
    let mut rest = sweep_row(spec, pt.est, lambda.unwrap_or(f64::NAN), th, emp);
    if pt.n_w.is_none() {
        rest[1] = String::new();
    }
    r.extend(rest);
    r
}

/// One row per point at the R^2-maximizing lambda.
fn best_rows(points: &[Point], s: &FigureSettings) -> Result<Vec<Vec<String>>> {
    let grid = log_grid(1e-3, 1e3, 61);
    points
        .par_iter()
        .map(|pt| {
            let spec = pt.spec()?;
            let best = match best_lambda(&spec, pt.est, Objective::MaxR2, &grid) {
                Ok((l, r)) => Some((l, r)),
                Err(e) if is_infeasible(&e) => None,
                Err(e) => return Err(e),
            };
            let emp = match &best {
                Some((l, _)) => validation(&spec, pt.est, *l, s)?,
                None => None,
            };
            Ok(row(pt, &spec, best.as_ref().map(|b| b.0), best.as_ref().map(|b| &b.1), emp.as_ref()))
        })
        .collect()
}

fn sparsity_heritability(s: &FigureSettings) -> Result<Vec<Vec<String>>> {
    let mut pts = Vec::new();
    for &n_x in &SIZES {
        for &n_w in &SIZES {
            for kappa in [0.001, 0.005, 0.01, 0.05] {
                for h2 in [0.1, 0.3, 0.5, 0.7, 0.9] {
                    for est in L1 {
                        if est == Estimator::Lasso && n_w != n_x {
                            continue;
                        }
                        let n_w = (est == Estimator::RefLasso).then_some(n_w);
                        pts.push(Point { series: "grid", n_x, n_w, h2, kappa, est });
                    }
                }
            }
        }
    }
    best_rows(&pts, s)
}

fn panel_size(s: &FigureSettings) -> Result<Vec<Vec<String>>> {
    let mut pts = Vec::new();
    for &n_x in &SIZES {
        for kappa in [0.001, 0.01] {
            pts.push(Point { series: "vary_n_w", n_x, n_w: None, h2: 0.3, kappa, est: Estimator::Lasso });
            for n_w in log_grid(1_000.0, 200_000.0, 25) {
                pts.push(Point { series: "vary_n_w", n_x, n_w: Some(n_w.round()), h2: 0.3, kappa, est: Estimator::RefLasso });
            }
        }
    }
    for kappa in [0.001, 0.005, 0.01, 0.05] {
        for n in log_grid(1_000.0, 400_000.0, 25) {
            let n = n.round();
            pts.push(Point { series: "vary_n", n_x: n, n_w: None, h2: 0.3, kappa, est: Estimator::Lasso });
            pts.push(Point { series: "vary_n", n_x: n, n_w: Some(n), h2: 0.3, kappa, est: Estimator::RefLasso });
        }
    }
    best_rows(&pts, s)
}

fn lambda_curves(s: &FigureSettings) -> Result<Vec<Vec<String>>> {
    let lambdas = if s.lambdas.is_empty() { log_grid(1e-2, 1e3, 101) } else { s.lambdas.clone() };
    let mut jobs = Vec::new();
    for &n_x in &SIZES {
        for &n_w in &SIZES {
            for &l in &lambdas {
                let pt = Point { series: "lambda", n_x, n_w: Some(n_w), h2: 0.6, kappa: 0.005, est: Estimator::RefLasso };
                jobs.push((pt, l));
            }
        }
    }
    jobs.par_iter()
        .map(|(pt, l)| {
            let spec = pt.spec()?;
            let th = optional(theory_risk(&spec, pt.est, *l, &SolverOptions::default()))?;
            let emp = if th.is_some() { validation(&spec, pt.est, *l, s)? } else { None };
            Ok(row(pt, &spec, Some(*l), th.as_ref(), emp.as_ref()))
        })
        .collect()
}

fn alpha_curves(s: &FigureSettings) -> Result<Vec<Vec<String>>> {
    let alphas: Vec<f64> = if s.alphas.is_empty() { (1..=80).map(|i| 0.05 * i as f64).collect() } else { s.alphas.clone() };
    let mut jobs = Vec::new();
    for kappa in [0.001, 0.005, 0.05] {
        for n_x in [50_000.0, 200_000.0] {
            for est in L1 {
                let panels: Vec<Option<f64>> =
                    if est == Estimator::RefLasso { SIZES.iter().map(|n| Some(*n)).collect() } else { vec![None] };
                for n_w in panels {
                    for &a in &alphas {
                        jobs.push((Point { series: "alpha", n_x, n_w, h2: 0.6, kappa, est }, a));
                    }
                }
            }
        }
    }
    let o = SolverOptions::default();
    jobs.par_iter()
        .map(|(pt, a)| {
            let spec = pt.spec()?;
            let amin = match pt.est {
                Estimator::Lasso => lasso_alpha_min(spec.gamma_x)?,
                _ => ref_lasso_alpha_min(&spec)?,
            };
            let lambda = if *a > amin {
                match pt.est {
                    Estimator::Lasso => optional_f(lasso_lambda_of_alpha(&spec, *a, &o))?,
                    _ => optional_f(ref_lasso_lambda_of_alpha(&spec, *a, &o))?,
                }
            } else {
                None
            }
            .filter(|l| *l > 0.0);
            let th = match lambda {
                Some(l) => optional(theory_risk(&spec, pt.est, l, &o))?,
                None => None,
            };
            let emp = match (lambda, &th) {
                (Some(l), Some(_)) => validation(&spec, pt.est, l, s)?,
                _ => None,
            };
            let mut r = row(pt, &spec, lambda, th.as_ref(), emp.as_ref());
            // alpha column holds the requested grid value
            r[3 + 6] = num(Some(*a));
            Ok(r)
        })
        .collect()
}

fn optional_f(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if is_infeasible(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn run(recipe: Recipe, s: &FigureSettings) -> Result<Table> {
    let rows = match recipe {
        Recipe::SparsityHeritability => sparsity_heritability(s)?,
        Recipe::PanelSize => panel_size(s)?,
        Recipe::LambdaCurves => lambda_curves(s)?,
        Recipe::AlphaCurves => alpha_curves(s)?,
    };
    let mut t = Table::new(recipe.file(), &header());
    t.rows = rows;
    Ok(t)
}
