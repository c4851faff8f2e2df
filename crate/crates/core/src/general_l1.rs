//! Reference-panel lasso theory for a general feature covariance.
//!
//! The proximal operator of theta ||.||_1 in the Sigma metric has no closed
//! form, so the state-evolution expectations are Monte Carlo averages over a
//! fixed sample of (Z, beta_0) draws, reused across every solver iteration.

use std::sync::Mutex;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::covariance::{dot, CovarianceModel};
use crate::error::{Error, Result};
use crate::report::{Estimator, FixedPoint, GeneralSEFixedPoint, RiskReport};
use crate::roots::brent;
use crate::scalar_l1::solve_zeta;
use crate::seed;
use crate::special::soft;
use crate::spec::ProblemSpec;

/// Stopping rules of the coordinate-descent prox solver. Both tolerances
/// are relative to max(1, |v|_inf).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxOptions {
    pub change_tol: f64,
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    pub max_dim: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        ProxOptions { change_tol: 1e-10, kkt_tol: 1e-8, max_sweeps: 100_000, max_dim: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxSolution {
    pub w: Vec<f64>,
    pub active_set: Vec<usize>,
    pub kkt_residual: f64,
    pub sweeps: usize,
}

/// KKT residual of w for min 1/2 ||w - v||^2_Sigma + theta ||w||_1, given
/// the gradient g = Sigma (w - v).
fn kkt(w: &[f64], g: &[f64], theta: f64) -> f64 {
    w.iter()
        .zip(g)
        .map(|(&wj, &gj)| if wj != 0.0 { (gj + theta * wj.signum()).abs() } else { (gj.abs() - theta).max(0.0) })
        .fold(0.0, f64::max)
}

fn active(w: &[f64]) -> Vec<usize> {
    w.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(j, _)| j).collect()
}

/// Sigma-metric soft threshold: argmin_w 1/2 ||w - v||^2_Sigma + theta ||w||_1.
pub fn prox_sigma(sigma: &CovarianceModel, v: &[f64], theta: f64, opts: &ProxOptions) -> Result<ProxSolution> {
    prox_sigma_warm(sigma, v, theta, None, opts)
}

/// [`prox_sigma`] started from `warm` (dense covariance only).
pub fn prox_sigma_warm(
    sigma: &CovarianceModel,
    v: &[f64],
    theta: f64,
    warm: Option<&[f64]>,
    opts: &ProxOptions,
) -> Result<ProxSolution> {
    if !(theta >= 0.0) {
        return Err(Error::OutOfRange(theta));
    }
    let p = v.len();
    if sigma.dim() != p && !matches!(sigma, CovarianceModel::Identity { .. }) {
        return Err(Error::InvalidCovariance(format!("covariance dimension {} for a vector of length {p}", sigma.dim())));
    }
    match sigma {
        CovarianceModel::Identity { .. } => {
            let w: Vec<f64> = v.iter().map(|&x| soft(x, theta)).collect();
            Ok(ProxSolution { active_set: active(&w), w, kkt_residual: 0.0, sweeps: 0 })
        }
        CovarianceModel::Spectrum { eigenvalues } => {
            let w: Vec<f64> = v.iter().zip(eigenvalues).map(|(&x, &s)| soft(x, theta / s)).collect();
            let g: Vec<f64> = w.iter().zip(v).zip(eigenvalues).map(|((a, b), s)| s * (a - b)).collect();
            Ok(ProxSolution { active_set: active(&w), kkt_residual: kkt(&w, &g, theta), w, sweeps: 0 })
        }
        CovarianceModel::DenseSPD { matrix } => {
            if p > opts.max_dim {
                return Err(Error::DimensionTooSmall(format!("prox dimension {p} above the limit {}", opts.max_dim)));
            }
            cd_prox(matrix, v, theta, warm, opts)
        }
    }
}

fn cd_prox(m: &DMatrix<f64>, v: &[f64], theta: f64, warm: Option<&[f64]>, opts: &ProxOptions) -> Result<ProxSolution> {
    let p = v.len();
    let mut w: Vec<f64> = match warm {
        Some(w0) if w0.len() == p => w0.to_vec(),
        _ => vec![0.0; p],
    };
    // g = Sigma (w - v), kept current through rank-one column updates.
    let diff: Vec<f64> = w.iter().zip(v).map(|(a, b)| a - b).collect();
    let mut g = vec![0.0; p];
    for (j, dj) in diff.iter().enumerate() {
        if *dj != 0.0 {
            let col = m.column(j);
            for (gi, ci) in g.iter_mut().zip(col.iter()) {
                *gi += dj * ci;
            }
        }
    }
    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let (change_tol, kkt_tol) = (opts.change_tol * scale, opts.kkt_tol * scale);
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let sjj = m[(j, j)];
            let new = soft(w[j] - g[j] / sjj, theta / sjj);
            let delta = new - w[j];
            if delta != 0.0 {
                w[j] = new;
                let col = m.column(j);
                for (gi, ci) in g.iter_mut().zip(col.iter()) {
                    *gi += delta * ci;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < change_tol {
            residual = kkt(&w, &g, theta);
            if residual < kkt_tol {
                return Ok(ProxSolution { active_set: active(&w), w, kkt_residual: residual, sweeps: sweep });
            }
        }
    }
    Err(Error::NoConvergence { max_iter: opts.max_sweeps, residual })
}

/// Divergence of the prox at its input: the size of the active set.
pub fn div_eta(sol: &ProxSolution) -> usize {
    sol.active_set.len()
}

/// Monte Carlo settings for the general-covariance theory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub p_mc: usize,
    pub reps: usize,
    pub seed: u64,
    pub prox: ProxOptions,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { p_mc: 400, reps: 100, seed: 20240607, prox: ProxOptions::default() }
    }
}

/// Per-replicate functionals of w = prox_alpha(Sigma^{-1/2} z + zeta u),
/// each divided by p.
#[derive(Debug, Clone)]
pub struct McEval {
    /// ||w||^2_Sigma / p
    pub norm2: Vec<f64>,
    /// |active set| / p
    pub active: Vec<f64>,
    /// <u, w>_Sigma / p
    pub cross: Vec<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Fixed Monte Carlo sample with common random numbers.
pub struct McSample {
    pub cov: CovarianceModel,
    pub p: usize,
    /// Sigma^{-1/2} z_r
    pub noise: Vec<Vec<f64>>,
    /// sqrt(p) beta_0 draws u_r
    pub signal: Vec<Vec<f64>>,
    pub seed: u64,
    prox: ProxOptions,
    warm: Vec<Mutex<Option<Vec<f64>>>>,
}

impl McSample {
    pub fn new(spec: &ProblemSpec, opts: &McOptions) -> Result<Self> {
        spec.validate()?;
        if opts.reps < 2 {
            return Err(Error::InvalidSpec("at least two Monte Carlo replicates are needed".into()));
        }
        let p = match &spec.covariance {
            CovarianceModel::DenseSPD { matrix } => matrix.nrows(),
            _ => opts.p_mc,
        };
        if p < 2 {
            return Err(Error::DimensionTooSmall(format!("p_mc = {p}")));
        }
        let cov = spec.covariance_at(p)?;
        let root_inv = match &cov {
            CovarianceModel::DenseSPD { .. } => Some(cov.matrix_power(-0.5)),
            _ => None,
        };
        let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..opts.reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = seed::rng(seed::derive(opts.seed, r as u64));
                let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
                let u = spec.prior.sample_vector(p, &mut rng);
                let x = match (&cov, &root_inv) {
                    (CovarianceModel::Spectrum { eigenvalues }, _) => {
                        z.iter().zip(eigenvalues).map(|(a, s)| a / s.sqrt()).collect()
                    }
                    (_, Some(r)) => (r * nalgebra::DVector::from_vec(z)).iter().cloned().collect(),
                    _ => z,
                };
                (x, u)
            })
            .collect();
        let (noise, signal) = draws.into_iter().unzip();
        Ok(McSample {
            cov,
            p,
            noise,
            signal,
            seed: opts.seed,
            prox: opts.prox,
            warm: (0..opts.reps).map(|_| Mutex::new(None)).collect(),
        })
    }

    pub fn reps(&self) -> usize {
        self.noise.len()
    }

    pub fn mean_eigenvalue(&self) -> f64 {
        self.cov.mean_eigenvalue()
    }

    /// Prox of x_r = noise_r + zeta u_r at threshold alpha for every replicate.
    fn solve_all(&self, zeta: f64, alpha: f64) -> Result<Vec<(Vec<f64>, usize)>> {
        (0..self.reps())
            .into_par_iter()
            .map(|r| {
                let x: Vec<f64> = self.noise[r].iter().zip(&self.signal[r]).map(|(n, u)| n + zeta * u).collect();
                let mut slot = self.warm[r].lock().expect("warm-start lock");
                let sol = prox_sigma_warm(&self.cov, &x, alpha, slot.as_deref(), &self.prox)
                    .map_err(|e| Error::Replicate { index: r, source: Box::new(e) })?;
                if matches!(self.cov, CovarianceModel::DenseSPD { .. }) {
                    *slot = Some(sol.w.clone());
                }
                let k = div_eta(&sol);
                Ok((sol.w, k))
            })
            .collect()
    }

    pub fn eval(&self, zeta: f64, alpha: f64) -> Result<McEval> {
        let sols = self.solve_all(zeta, alpha)?;
        let p = self.p as f64;
        let mut out = McEval { norm2: Vec::new(), active: Vec::new(), cross: Vec::new() };
        for (r, (w, k)) in sols.iter().enumerate() {
            let sw = self.cov.apply(w);
            out.norm2.push(dot(w, &sw) / p);
            out.active.push(*k as f64 / p);
            out.cross.push(dot(&self.signal[r], &sw) / p);
        }
        Ok(out)
    }

    /// g(alpha) = gamma_w mean ||eta_alpha(Sigma^{-1/2} z)||^2_Sigma / p.
    pub fn g_hat(&self, gamma_w: f64, alpha: f64) -> Result<f64> {
        Ok(gamma_w * mean(&self.eval(0.0, alpha)?.norm2))
    }
}

fn signal_norm(spec: &ProblemSpec, sample: &McSample) -> f64 {
    spec.m2() * sample.mean_eigenvalue()
}

/// f(zeta, alpha) = gamma_w mean ||w||^2_Sigma / p + gamma_x zeta^2 E||beta||^2_Sigma / h^2.
fn f_map(spec: &ProblemSpec, sample: &McSample, ev: &McEval, zeta: f64) -> f64 {
    spec.gamma_w * mean(&ev.norm2) + spec.gamma_x * zeta * zeta * signal_norm(spec, sample) / spec.h2_x
}

/// alpha_min: the root of g(alpha) = 1 when gamma_w > 1, zero otherwise.
pub fn alpha_min(spec: &ProblemSpec, sample: &McSample) -> Result<f64> {
    if spec.gamma_w <= 1.0 {
        return Ok(0.0);
    }
    let failure = std::cell::Cell::new(None::<Error>);
    let g = |a: f64| match sample.g_hat(spec.gamma_w, a) {
        Ok(v) => v - 1.0,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    let mut hi = 1.0;
    let mut k = 0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        k += 1;
        if k > 60 {
            return Err(Error::BracketFailure { lo: 0.0, hi });
        }
    }
    let r = brent(g, 0.0, hi, 1e-13, 300);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(r?.x)
}

/// Root zeta(alpha) of f(zeta, alpha) = 1 at fixed alpha > alpha_min.
pub fn zeta_of_alpha(spec: &ProblemSpec, sample: &McSample, alpha: f64) -> Result<f64> {
    let failure = std::cell::Cell::new(None::<Error>);
    let f = |z: f64| match sample.eval(z, alpha) {
        Ok(ev) => f_map(spec, sample, &ev, z) - 1.0,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    let f0 = f(0.0);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    if !(f0 < 0.0) {
        return Err(Error::AlphaBelowMin { alpha, alpha_min: alpha_min(spec, sample)? });
    }
    let zeta_inf = (spec.h2_x / (spec.gamma_x * signal_norm(spec, sample))).sqrt();
    let r = brent(f, 0.0, zeta_inf * (1.0 + 1e-12), 1e-14 * zeta_inf.max(1.0), 300);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(r?.x)
}

/// lambda(alpha) = alpha tau (1 - gamma_w E Div / p) = alpha / zeta(alpha);
/// zero where the divergence bracket is clamped.
pub fn lambda_of_alpha(spec: &ProblemSpec, sample: &McSample, alpha: f64) -> Result<f64> {
    let zeta = zeta_of_alpha(spec, sample, alpha)?;
    let d = spec.gamma_w * mean(&sample.eval(zeta, alpha)?.active);
    if d >= 1.0 {
        return Ok(0.0);
    }
    Ok(alpha / zeta)
}

/// alpha(lambda) = lambda zeta*(lambda).
pub fn calibrate_alpha(spec: &ProblemSpec, sample: &McSample, lambda: f64) -> Result<f64> {
    Ok(solve_general_l1_se_with(spec, sample, lambda)?.alpha)
}

/// Fixed point of the general-covariance reference-lasso state evolution.
pub fn solve_general_l1_se(spec: &ProblemSpec, lambda: f64, opts: &McOptions) -> Result<GeneralSEFixedPoint> {
    let sample = McSample::new(spec, opts)?;
    solve_general_l1_se_with(spec, &sample, lambda)
}

pub fn solve_general_l1_se_with(spec: &ProblemSpec, sample: &McSample, lambda: f64) -> Result<GeneralSEFixedPoint> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::OutOfRange(lambda));
    }
    let gw = spec.gamma_w;
    let eval = |z: f64| -> Result<(f64, f64)> {
        let ev = sample.eval(z, lambda * z)?;
        Ok((f_map(spec, sample, &ev, z) - 1.0, gw * mean(&ev.active)))
    };
    let zeta_inf = (spec.h2_x / (spec.gamma_x * signal_norm(spec, sample))).sqrt();
    let d_inf = eval(1e6 * zeta_inf.max(1.0))?.1;
    let root = solve_zeta(eval, gw, zeta_inf, d_inf, 1e-14, 500)?;
    let zeta = root.zeta;
    let ev = sample.eval(zeta, lambda * zeta)?;
    let d = gw * mean(&ev.active);
    let clamped = d >= 1.0;
    if clamped {
        return Err(Error::InfeasibleRegime(format!("divergence {d} >= 1 at the fixed point")));
    }
    let b = d / (1.0 - d);
    let tau2 = 1.0 / ((1.0 - d).powi(2) * zeta * zeta);

    // Influence functions of zeta and tau^2 over replicates. The map is
    // differentiated along alpha = lambda zeta with common random numbers.
    let reps = sample.reps() as f64;
    let h = 1e-4 * zeta;
    let fp = f_map(spec, sample, &sample.eval(zeta + h, lambda * (zeta + h))?, zeta + h);
    let fm = f_map(spec, sample, &sample.eval(zeta - h, lambda * (zeta - h))?, zeta - h);
    let fprime = (fp - fm) / (2.0 * h);
    let wide = 0.05 * zeta;
    let dp = gw * mean(&sample.eval(zeta + wide, lambda * (zeta + wide))?.active);
    let dm = gw * mean(&sample.eval(zeta - wide, lambda * (zeta - wide))?.active);
    let dprime = (dp - dm) / (2.0 * wide);
    let nbar = mean(&ev.norm2);
    let abar = mean(&ev.active);
    let if_zeta: Vec<f64> = ev.norm2.iter().map(|n| -gw * (n - nbar) / fprime).collect();
    let dtau_dzeta = -2.0 / ((1.0 - d).powi(2) * zeta.powi(3));
    let dtau_dd = 2.0 / ((1.0 - d).powi(3) * zeta * zeta);
    let if_tau2: Vec<f64> = if_zeta
        .iter()
        .zip(&ev.active)
        .map(|(iz, a)| dtau_dzeta * iz + dtau_dd * (gw * (a - abar) + dprime * iz))
        .collect();

    Ok(GeneralSEFixedPoint {
        tau_star: tau2.sqrt(),
        b_star: b,
        zeta_star: zeta,
        alpha: lambda * zeta,
        lambda,
        mc_reps: sample.reps(),
        seed: sample.seed,
        residual: root.residual,
        zeta_se: sd(&if_zeta) / reps.sqrt(),
        tau2_se: sd(&if_tau2) / reps.sqrt(),
        clamped,
    })
}

/// MSE and R^2 of the reference-panel lasso from the Monte Carlo sample.
/// Standard errors are replicate spreads at the fixed point.
pub fn general_l1_risk(spec: &ProblemSpec, sample: &McSample, fp: &GeneralSEFixedPoint) -> Result<RiskReport> {
    let ev = sample.eval(fp.zeta_star, fp.alpha)?;
    let tau = fp.tau_star;
    let reps = sample.reps() as f64;
    let p = sample.p as f64;
    let mut mse_r = Vec::with_capacity(sample.reps());
    for r in 0..sample.reps() {
        let su = sample.cov.apply(&sample.signal[r]);
        let uu = dot(&sample.signal[r], &su) / p;
        mse_r.push(tau * tau * ev.norm2[r] - 2.0 * tau * ev.cross[r] + uu);
    }
    let c: Vec<f64> = ev.cross.iter().map(|x| tau * x).collect();
    let n: Vec<f64> = ev.norm2.iter().map(|x| tau * tau * x).collect();
    let (cbar, nbar) = (mean(&c), mean(&n));
    let s = signal_norm(spec, sample);
    let (r2, r2_se) = if nbar > 0.0 {
        let k = spec.h2_s / s;
        let infl: Vec<f64> =
            c.iter().zip(&n).map(|(ci, ni)| k * (2.0 * cbar * (ci - cbar) / nbar - cbar * cbar * (ni - nbar) / (nbar * nbar))).collect();
        (k * cbar * cbar / nbar, sd(&infl) / reps.sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(RiskReport {
        estimator: Estimator::RefLasso,
        lambda: fp.lambda,
        mse: mean(&mse_r).max(0.0),
        r2,
        mse_se: sd(&mse_r) / reps.sqrt(),
        r2_se,
        fixed_point: FixedPoint::General(fp.clone()),
    })
}
