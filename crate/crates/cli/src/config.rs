//! Experiment configuration: the problem spec plus sweep axes and run
//! parameters, in the same `key = value` format.

use std::collections::BTreeMap;

use ampr_core::scalar_l1::log_grid;
use ampr_core::spec::{parse_kv, parse_list, SPEC_KEYS};
use ampr_core::{Error, Estimator, ProblemSpec, Result, SignalPrior};

const EXPERIMENT_KEYS: &[&str] = &[
    "lambda",
    "lambda.grid",
    "alpha",
    "estimators",
    "kappa.grid",
    "h2.grid",
    "gamma_x.grid",
    "gamma_w.grid",
    "p",
    "reps",
    "seed",
    "t_max",
    "amp.init",
    "amp.estimator",
    "mc.p",
    "mc.reps",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Zero,
    Oracle,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub spec: ProblemSpec,
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub estimators: Vec<Estimator>,
    pub kappa_grid: Option<Vec<f64>>,
    pub h2_grid: Option<Vec<f64>>,
    pub gamma_x_grid: Option<Vec<f64>>,
    pub gamma_w_grid: Option<Vec<f64>>,
    pub p: usize,
    pub reps: usize,
    pub seed: u64,
    pub t_max: usize,
    pub amp_init: InitKind,
    pub amp_estimator: Estimator,
    pub mc_p: usize,
    pub mc_reps: usize,
    /// Sorted `key = value` lines; hashed into the provenance line.
    pub canonical: String,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::ConfigParse(msg.into())
}

fn sorted_grid(key: &str, v: &str) -> Result<Vec<f64>> {
    let g = parse_list(key, v)?;
    if g.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(parse_err(format!("{key}: values must be strictly increasing")));
    }
    Ok(g)
}

fn count(kv: &BTreeMap<String, String>, key: &str, default: usize) -> Result<usize> {
    match kv.get(key) {
        None => Ok(default),
        Some(v) => v.trim().parse::<usize>().map_err(|_| parse_err(format!("{key}: expected a non-negative integer, got {v:?}"))),
    }
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        for k in kv.keys() {
            if !SPEC_KEYS.contains(&k.as_str()) && !EXPERIMENT_KEYS.contains(&k.as_str()) {
                return Err(parse_err(format!("unknown key {k}")));
            }
        }
        let spec = ProblemSpec::from_kv(&kv)?;

        let lambdas = match (kv.get("lambda"), kv.get("lambda.grid")) {
            (Some(_), Some(_)) => return Err(parse_err("give either lambda or lambda.grid, not both")),
            (Some(v), None) => sorted_grid("lambda", v)?,
            (None, Some(v)) => {
                let g = parse_list("lambda.grid", v)?;
                if g.len() != 3 || !(g[0] > 0.0 && g[1] > g[0]) || g[2] < 1.0 || g[2].fract() != 0.0 {
                    return Err(parse_err("lambda.grid: expected lo, hi, n with 0 < lo < hi and integer n >= 1"));
                }
                log_grid(g[0], g[1], g[2] as usize)
            }
            (None, None) => Vec::new(),
        };
        if lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(parse_err("lambda values must be positive"));
        }
        let alphas = match kv.get("alpha") {
            Some(v) => sorted_grid("alpha", v)?,
            None => Vec::new(),
        };

        let estimators = match kv.get("estimators") {
            None => Estimator::ALL.to_vec(),
            Some(v) => {
                let mut out = Vec::new();
                for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let e = Estimator::parse(name).ok_or_else(|| parse_err(format!("unknown estimator {name}")))?;
                    if !out.contains(&e) {
                        out.push(e);
                    }
                }
                if out.is_empty() {
                    return Err(parse_err("estimators: empty list"));
                }
                out
            }
        };
        if !spec.covariance.is_identity() && estimators.contains(&Estimator::Lasso) {
            return Err(parse_err("lasso theory needs identity covariance; remove lasso from estimators"));
        }

        let grid = |k: &str| kv.get(k).map(|v| sorted_grid(k, v)).transpose();
        let kappa_grid = grid("kappa.grid")?;
        if kappa_grid.is_some() && !matches!(spec.prior, SignalPrior::BernoulliGaussian { .. }) {
            return Err(parse_err("kappa.grid needs a bernoulli_gaussian prior"));
        }
        let seed = match kv.get("seed") {
            Some(v) => v.trim().parse::<u64>().map_err(|_| parse_err(format!("seed: cannot parse {v:?}")))?,
            None => 1,
        };
        let amp_init = match kv.get("amp.init").map(String::as_str) {
            None | Some("zero") => InitKind::Zero,
            Some("oracle") => InitKind::Oracle,
            Some(o) => return Err(parse_err(format!("amp.init: expected zero or oracle, got {o}"))),
        };
        let amp_estimator = match kv.get("amp.estimator").map(String::as_str) {
            None => Estimator::RefLasso,
            Some(s) => match Estimator::parse(s) {
                Some(e @ (Estimator::RefLasso | Estimator::RefRidge)) => e,
                _ => return Err(parse_err(format!("amp.estimator: expected ref_lasso or ref_ridge, got {s}"))),
            },
        };
        let canonical: String = kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        Ok(ExperimentConfig {
            spec,
            lambdas,
            alphas,
            estimators,
            kappa_grid,
            h2_grid: grid("h2.grid")?,
            gamma_x_grid: grid("gamma_x.grid")?,
            gamma_w_grid: grid("gamma_w.grid")?,
            p: count(&kv, "p", 1000)?,
            reps: count(&kv, "reps", 20)?,
            seed,
            t_max: count(&kv, "t_max", 30)?,
            amp_init,
            amp_estimator,
            mc_p: count(&kv, "mc.p", 400)?,
            mc_reps: count(&kv, "mc.reps", 100)?,
            canonical,
        })
    }

    /// Specs over the product of the configured sweep axes, in a fixed order.
    pub fn specs(&self) -> Result<Vec<ProblemSpec>> {
        let one = |g: &Option<Vec<f64>>| g.clone().map(|v| v.into_iter().map(Some).collect()).unwrap_or_else(|| vec![None]);
        let mut out = Vec::new();
        for gx in one(&self.gamma_x_grid) {
            for gw in one(&self.gamma_w_grid) {
                for h2 in one(&self.h2_grid) {
                    for kappa in one(&self.kappa_grid) {
                        let mut s = self.spec.clone();
                        if let Some(v) = gx {
                            s.gamma_x = v;
                            s.gamma_s = v;
                        }
                        if let Some(v) = gw {
                            s.gamma_w = v;
                        }
                        if let Some(v) = h2 {
                            s.h2_x = v;
                            s.h2_s = v;
                        }
                        if let (Some(v), SignalPrior::BernoulliGaussian { sigma_beta2, .. }) = (kappa, &s.prior) {
                            s.prior = SignalPrior::BernoulliGaussian { kappa: v, sigma_beta2: *sigma_beta2 };
                        }
                        s.validate().map_err(|e| parse_err(e.to_string()))?;
                        out.push(s);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn require_lambdas(&self) -> Result<&[f64]> {
        if self.lambdas.is_empty() {
            return Err(parse_err("empty lambda grid: set lambda or lambda.grid"));
        }
        Ok(&self.lambdas)
    }
}
