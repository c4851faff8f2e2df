//! AMP recursions for the reference-panel lasso and ridge, a symmetric
//! matrix-AMP core with Onsager correction, and the state evolution the
//! iterates follow.
//!
//! Iterates live in rescaled coordinates u = sqrt(p) beta, where entries are
//! of order one and (1/p)||u - u'||^2 = ||beta - beta'||^2.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariance::{CovarianceModel, Spectral};
use crate::empirical::SyntheticDataset;
use crate::error::{Error, Result};
use crate::general_l1::{prox_sigma_warm, solve_general_l1_se_with, McSample, ProxOptions};
use crate::prior::SignalPrior;
use crate::quadrature::gaussian_expect_split;
use crate::scalar_l1::{solve_ref_lasso_se, Moments, SolverOptions};
use crate::seed;
use crate::special::{phi, q_tail, soft};
use crate::spec::ProblemSpec;

/// Iterates whose sup norm passes this are flagged as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e8;

/// Symmetric p x p matrix G + G^T with G_ij ~ N(0, 1/(2p)).
pub fn sample_goe(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed);
    let sd = (0.5 / p as f64).sqrt();
    let g = DMatrix::from_fn(p, p, |_, _| sd * Distribution::<f64>::sample(&StandardNormal, &mut rng));
    &g + g.transpose()
}

/// Data of one instance in AMP units.
pub struct AmpData {
    /// W / sqrt(n_w)
    pub wn: DMatrix<f64>,
    /// sqrt(p) X^T y_x / n_x
    pub c: Vec<f64>,
    /// sqrt(p) beta_0
    pub u0: Vec<f64>,
    pub sigma: CovarianceModel,
    sigma_inv: Option<DMatrix<f64>>,
    spectral: Option<Spectral>,
}

impl AmpData {
    pub fn from_dataset(ds: &SyntheticDataset) -> Result<Self> {
        let p = ds.p();
        let sp = (p as f64).sqrt();
        let c: Vec<f64> = crate::empirical::xty(ds).into_iter().map(|v| v * sp).collect();
        let u0 = ds.beta0.iter().map(|b| b * sp).collect();
        let wn = &ds.w / (ds.n_w() as f64).sqrt();
        let (sigma_inv, spectral) = match &ds.sigma {
            CovarianceModel::DenseSPD { .. } => (Some(ds.sigma.matrix_power(-1.0)), Some(ds.sigma.spectral())),
            _ => (None, None),
        };
        Ok(AmpData { wn, c, u0, sigma: ds.sigma.clone(), sigma_inv, spectral })
    }

    pub fn p(&self) -> usize {
        self.u0.len()
    }

    pub fn n_w(&self) -> usize {
        self.wn.nrows()
    }

    fn sigma_inv(&self, x: &[f64]) -> Vec<f64> {
        match (&self.sigma, &self.sigma_inv) {
            (CovarianceModel::Spectrum { eigenvalues }, _) => x.iter().zip(eigenvalues).map(|(a, s)| a / s).collect(),
            (_, Some(m)) => (m * DVector::from_column_slice(x)).iter().cloned().collect(),
            _ => x.to_vec(),
        }
    }

    fn eigenvalues(&self) -> Vec<f64> {
        match &self.spectral {
            Some(sp) => sp.values.clone(),
            None => self.sigma.eigenvalues(),
        }
    }

    /// Sigma (Sigma + theta I)^{-1} v and its trace.
    fn resolvent(&self, theta: f64, v: &[f64]) -> (Vec<f64>, f64) {
        match (&self.sigma, &self.spectral) {
            (CovarianceModel::Identity { .. }, _) => {
                let k = 1.0 / (1.0 + theta);
                (v.iter().map(|x| x * k).collect(), v.len() as f64 * k)
            }
            (CovarianceModel::Spectrum { eigenvalues }, _) => {
                let out = v.iter().zip(eigenvalues).map(|(x, s)| x * s / (s + theta)).collect();
                (out, eigenvalues.iter().map(|s| s / (s + theta)).sum())
            }
            (_, Some(sp)) => {
                let vecs = sp.vectors.as_ref().expect("dense spectral decomposition");
                let mut coef = vecs.tr_mul(&DVector::from_column_slice(v));
                let mut tr = 0.0;
                for (ci, s) in coef.iter_mut().zip(&sp.values) {
                    *ci *= s / (s + theta);
                    tr += s / (s + theta);
                }
                ((vecs * coef).iter().cloned().collect(), tr)
            }
            _ => unreachable!("dense covariance without spectral data"),
        }
    }

    /// Sigma^{-1/2} z for a fresh standard Gaussian z.
    fn correlated_noise<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.p()).map(|_| StandardNormal.sample(rng)).collect();
        match &self.sigma {
            CovarianceModel::Identity { .. } => z,
            CovarianceModel::Spectrum { eigenvalues } => z.iter().zip(eigenvalues).map(|(a, s)| a / s.sqrt()).collect(),
            CovarianceModel::DenseSPD { .. } => {
                (self.sigma.matrix_power(-0.5) * DVector::from_vec(z)).iter().cloned().collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AmpInit {
    Zero,
    /// u^0 = eta(tau Sigma^{-1/2} z + (1 + b) u_0) with fresh z, from a
    /// theory fixed point (tau, b).
    Oracle { tau: f64, b: f64 },
    /// Start at a given point in rescaled units, with the memory terms set as
    /// if it were a fixed point.
    Warm(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpOptions {
    pub t_max: usize,
    pub init: AmpInit,
    /// Keep the memory term; `false` sets b_t = 0 throughout.
    pub onsager: bool,
    /// Seed of the oracle-initialization noise.
    pub seed: u64,
    pub prox: ProxOptions,
}

impl Default for AmpOptions {
    fn default() -> Self {
        AmpOptions { t_max: 30, init: AmpInit::Zero, onsager: true, seed: 0, prox: ProxOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub t: usize,
    /// u^t = sqrt(p) beta^t
    pub beta: Vec<f64>,
    /// r^t, empty for the last recorded state
    pub r: Vec<f64>,
    /// b_t (c_t for ridge)
    pub b: f64,
    /// (1/p)||v^{t-1} - (1 + b_{t-1}) u_0||^2_Sigma, NaN at t = 0
    pub tau2_emp: f64,
    /// Empirical covariance of the effective noises of steps t-1 and t.
    pub cross_emp: f64,
    /// Size of the support of u^t (lasso) or the resolvent trace (ridge).
    pub divergence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpRun {
    pub states: Vec<AmpState>,
    /// First t whose iterate passed [`DIVERGENCE_GUARD`]; the run stops there.
    pub diverged_at: Option<usize>,
}

#[derive(Clone, Copy)]
enum Kind {
    Lasso,
    Ridge,
}

fn denoise(data: &AmpData, kind: Kind, theta: f64, v: &[f64], warm: &[f64], prox: &ProxOptions) -> Result<(Vec<f64>, f64)> {
    match kind {
        Kind::Lasso => {
            let warm = if matches!(data.sigma, CovarianceModel::DenseSPD { .. }) { Some(warm) } else { None };
            let sol = prox_sigma_warm(&data.sigma, v, theta, warm, prox)?;
            let k = sol.active_set.len() as f64;
            Ok((sol.w, k))
        }
        Kind::Ridge => Ok(data.resolvent(theta, v)),
    }
}

fn run(data: &AmpData, lambda: f64, opts: &AmpOptions, kind: Kind) -> Result<AmpRun> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::OutOfRange(lambda));
    }
    let p = data.p();
    let nw = data.n_w() as f64;
    let pf = p as f64;
    let sinv_c = data.sigma_inv(&data.c);

    let (u_init, b_prev, r_prev) = match &opts.init {
        AmpInit::Zero => (vec![0.0; p], 0.0, vec![0.0; data.n_w()]),
        AmpInit::Oracle { tau, b } => {
            let mut rng = seed::rng(opts.seed);
            let z = data.correlated_noise(&mut rng);
            let v: Vec<f64> = z.iter().zip(&data.u0).map(|(zi, ui)| tau * zi + (1.0 + b) * ui).collect();
            let (u, _) = denoise(data, kind, lambda * (1.0 + b), &v, &vec![0.0; p], &opts.prox)?;
            (u, *b, vec![0.0; data.n_w()])
        }
        AmpInit::Warm(u) => {
            if u.len() != p {
                return Err(Error::InvalidSpec(format!("warm start of length {} for p = {p}", u.len())));
            }
            let b = match kind {
                Kind::Lasso => {
                    let k = u.iter().filter(|x| **x != 0.0).count() as f64 / nw;
                    if k >= 1.0 {
                        return Err(Error::InfeasibleRegime("warm start has at least n_w active coordinates".into()));
                    }
                    k / (1.0 - k)
                }
                Kind::Ridge => crate::ridge::solve_divergence(pf / nw, lambda, &data.eigenvalues())?,
            };
            let wu = &data.wn * DVector::from_column_slice(u);
            (u.clone(), b, wu.iter().map(|x| (1.0 + b) * x).collect())
        }
    };
    let div0 = match (&opts.init, kind) {
        (AmpInit::Zero, _) => 0.0,
        (_, Kind::Lasso) => u_init.iter().filter(|x| **x != 0.0).count() as f64,
        (_, Kind::Ridge) => {
            let th = lambda * (1.0 + b_prev);
            data.eigenvalues().iter().map(|s| s / (s + th)).sum::<f64>()
        }
    };
    let b0 = if opts.onsager { (1.0 + b_prev) * div0 / nw } else { 0.0 };

    let mut states = vec![AmpState {
        t: 0,
        beta: u_init,
        r: Vec::new(),
        b: b0,
        tau2_emp: f64::NAN,
        cross_emp: f64::NAN,
        divergence: div0,
    }];
    let (mut b_prev, mut r_prev) = (if opts.onsager { b_prev } else { 0.0 }, r_prev);
    let mut noise_prev: Option<Vec<f64>> = None;
    let mut diverged_at = None;
    for t in 0..opts.t_max {
        let cur = states.last().expect("non-empty trajectory");
        let (u, b) = (&cur.beta, cur.b);
        let coef = if opts.onsager { b / (1.0 + b_prev) } else { 0.0 };
        let wu = &data.wn * DVector::from_column_slice(u);
        let r: Vec<f64> = wu.iter().zip(&r_prev).map(|(a, rp)| a + coef * rp).collect();
        let wtr: Vec<f64> = data.wn.tr_mul(&DVector::from_column_slice(&r)).iter().cloned().collect();
        let sinv_wtr = data.sigma_inv(&wtr);
        let v: Vec<f64> = (0..p).map(|j| (1.0 + b) * sinv_c[j] - sinv_wtr[j] + u[j]).collect();
        let noise: Vec<f64> = v.iter().zip(&data.u0).map(|(vj, uj)| vj - (1.0 + b) * uj).collect();
        let tau2 = data.sigma.inner(&noise, &noise) / pf;
        let cross = noise_prev.as_ref().map_or(f64::NAN, |np| data.sigma.inner(np, &noise) / pf);
        let (u_new, div) = denoise(data, kind, lambda * (1.0 + b), &v, u, &opts.prox)?;
        let b_new = if opts.onsager { (1.0 + b) * div / nw } else { 0.0 };
        states.last_mut().expect("non-empty trajectory").r = r.clone();
        if u_new.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_GUARD) {
            diverged_at = Some(t + 1);
            break;
        }
        states.push(AmpState { t: t + 1, beta: u_new, r: Vec::new(), b: b_new, tau2_emp: tau2, cross_emp: cross, divergence: div });
        b_prev = b;
        r_prev = r;
        noise_prev = Some(noise);
    }
    Ok(AmpRun { states, diverged_at })
}

/// Reference-panel lasso AMP with the Sigma-metric soft threshold.
pub fn run_ref_lasso_amp(ds: &SyntheticDataset, lambda: f64, opts: &AmpOptions) -> Result<AmpRun> {
    run(&AmpData::from_dataset(ds)?, lambda, opts, Kind::Lasso)
}

pub fn run_ref_lasso_amp_with(data: &AmpData, lambda: f64, opts: &AmpOptions) -> Result<AmpRun> {
    run(data, lambda, opts, Kind::Lasso)
}

/// Reference-panel ridge AMP with the resolvent denoiser
/// (I + lambda (1 + c_t) Sigma^{-1})^{-1}.
pub fn run_ref_ridge_amp(ds: &SyntheticDataset, lambda: f64, opts: &AmpOptions) -> Result<AmpRun> {
    run(&AmpData::from_dataset(ds)?, lambda, opts, Kind::Ridge)
}

pub fn run_ref_ridge_amp_with(data: &AmpData, lambda: f64, opts: &AmpOptions) -> Result<AmpRun> {
    run(data, lambda, opts, Kind::Ridge)
}

/// (1/p)||a - b||^2.
pub fn mean_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Initial condition of the state evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeInit {
    Zero,
    /// Start at the fixed point of the theory.
    Oracle,
    /// u^0 = eta(tau0 z + (1 + b) beta_bar) at threshold lambda (1 + b).
    Custom { tau2: f64, b: f64 },
}

/// State evolution of the reference-lasso AMP, indexed by t.
///
/// u^t has the law of eta(tau_t z + (1 + b_{t-1}) beta_bar, lambda (1 + b_{t-1})),
/// with tau_{t+1}^2 = gamma_w E (u^t)^2 + gamma_x (1 + b_t)^2 E||beta||^2_Sigma / h^2
/// and b_t = (1 + b_{t-1}) gamma_w P(u^t != 0).
#[derive(Debug, Clone, PartialEq)]
pub struct SETrajectory {
    pub tau2: Vec<f64>,
    pub b: Vec<f64>,
    /// E (u^t)^2, in the Sigma norm for general covariance
    pub second_moment: Vec<f64>,
    pub active: Vec<f64>,
    /// tau_{t,t+1}: covariance of the effective noises of steps t and t+1.
    /// Filled for identity covariance only.
    pub tau_cross: Vec<f64>,
}

fn se_core<M>(mom: M, gamma_w: f64, k: f64, lambda: f64, t_max: usize, start: Option<(f64, f64)>, onsager: bool) -> Result<SETrajectory>
where
    M: Fn(f64, f64) -> Result<(f64, f64)>,
{
    // Moments of u with noise variance tau2 and bias scale a = 1 + b.
    let law = |tau2: f64, a: f64| -> Result<(f64, f64)> {
        let tau = tau2.sqrt();
        let zeta = a / tau;
        let (e2, d) = mom(zeta, lambda * zeta)?;
        Ok((tau2 * e2, d))
    };
    let mut tr = SETrajectory { tau2: Vec::new(), b: Vec::new(), second_moment: Vec::new(), active: Vec::new(), tau_cross: Vec::new() };
    let b_m1 = match start {
        None => {
            tr.tau2.push(0.0);
            tr.second_moment.push(0.0);
            tr.active.push(0.0);
            0.0
        }
        Some((tau2, b)) => {
            let (m, d) = law(tau2, 1.0 + b)?;
            tr.tau2.push(tau2);
            tr.second_moment.push(m);
            tr.active.push(d);
            if onsager {
                b
            } else {
                0.0
            }
        }
    };
    tr.b.push(if onsager { (1.0 + b_m1) * gamma_w * tr.active[0] } else { 0.0 });
    for t in 0..t_max {
        let b = tr.b[t];
        let tau2 = gamma_w * tr.second_moment[t] + k * (1.0 + b).powi(2);
        let (m, d) = law(tau2, 1.0 + b)?;
        tr.tau2.push(tau2);
        tr.second_moment.push(m);
        tr.active.push(d);
        tr.b.push(if onsager { (1.0 + b) * gamma_w * d } else { 0.0 });
    }
    Ok(tr)
}

/// E soft(Y, theta) for Y ~ N(m, s^2).
fn soft_mean(m: f64, s: f64, theta: f64) -> f64 {
    if s <= 0.0 {
        return soft(m, theta);
    }
    let pos = |mu: f64| (mu - theta) * q_tail((theta - mu) / s) + s * phi((mu - theta) / s);
    pos(m) - pos(-m)
}

/// E[eta(a1 B + n1, th1) eta(a2 B + n2, th2)] for (n1, n2) centred Gaussian
/// with variances (v1, v2) and covariance c, B ~ prior.
fn joint_soft_moment(spec: &ProblemSpec, v1: f64, v2: f64, c: f64, a1: f64, th1: f64, a2: f64, th2: f64) -> f64 {
    spec.prior
        .components()
        .iter()
        .filter(|comp| comp.weight > 0.0)
        .map(|comp| {
            let (m1, m2) = (a1 * comp.mean, a2 * comp.mean);
            let s11 = v1 + a1 * a1 * comp.var;
            let s22 = v2 + a2 * a2 * comp.var;
            let s12 = c + a1 * a2 * comp.var;
            let sd1 = s11.sqrt();
            let cond_sd = (s22 - s12 * s12 / s11).max(0.0).sqrt();
            let g = |z: f64| {
                let x = m1 + sd1 * z;
                soft(x, th1) * soft_mean(m2 + s12 / sd1 * z, cond_sd, th2)
            };
            comp.weight * gaussian_expect_split(g, &[(-th1 - m1) / sd1, (th1 - m1) / sd1], 1e-13)
        })
        .sum()
}

/// Copy of `spec` whose prior is the empirical law of the instance's
/// rescaled coefficients sqrt(p) beta_0, with zeros pooled into one atom.
pub fn instance_spec(spec: &ProblemSpec, ds: &SyntheticDataset) -> Result<ProblemSpec> {
    let p = ds.p() as f64;
    let sp = p.sqrt();
    let w = 1.0 / p;
    let zeros = ds.beta0.iter().filter(|b| **b == 0.0).count() as f64;
    let mut atoms: Vec<(f64, f64)> = ds.beta0.iter().filter(|b| **b != 0.0).map(|b| (b * sp, w)).collect();
    if zeros > 0.0 {
        atoms.push((0.0, zeros * w));
    }
    // Rounding in the weights must not trip the sum-to-one check.
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    for a in atoms.iter_mut() {
        a.1 /= total;
    }
    let mut out = spec.clone();
    out.prior = SignalPrior::DiscreteMixture { atoms };
    out.validate()?;
    Ok(out)
}

/// State evolution for identity covariance through the soft-threshold
/// moments, with the cross covariances tau_{t,t+1}.
pub fn se_recursion(spec: &ProblemSpec, lambda: f64, t_max: usize, init: SeInit, onsager: bool) -> Result<SETrajectory> {
    if !spec.covariance.is_identity() {
        return Err(Error::Unsupported("closed-form state evolution needs identity covariance; use se_recursion_mc"));
    }
    let opts = SolverOptions::default();
    let mom = Moments::new(spec, &opts)?;
    let start = match init {
        SeInit::Zero => None,
        SeInit::Oracle => {
            let fp = solve_ref_lasso_se(spec, lambda, &opts)?;
            Some((fp.tau_star.powi(2), fp.b_star))
        }
        SeInit::Custom { tau2, b } => Some((tau2, b)),
    };
    let k = spec.gamma_x * spec.m2() / spec.h2_x;
    let mut tr = se_core(
        |z, a| {
            let m = mom.at(z, a)?;
            Ok((m.e2, m.d))
        },
        spec.gamma_w,
        k,
        lambda,
        t_max,
        start,
        onsager,
    )?;
    // The first effective noise is independent of the data, so tau_{0,1} = 0.
    tr.tau_cross.push(0.0);
    for t in 1..t_max {
        let eu = if t == 1 && start.is_none() {
            0.0
        } else {
            // u^{t-1} and u^t are driven by the noises of steps t-1 and t.
            let (a1, a2) = (1.0 + b_at(&tr, t, 2), 1.0 + b_at(&tr, t, 1));
            joint_soft_moment(spec, tr.tau2[t - 1], tr.tau2[t], tr.tau_cross[t - 1], a1, lambda * a1, a2, lambda * a2)
        };
        let c = spec.gamma_w * eu + k * (1.0 + tr.b[t - 1]) * (1.0 + tr.b[t]);
        tr.tau_cross.push(c);
    }
    Ok(tr)
}

/// b_{t - back}, where b_{-1} is read off the start of the trajectory.
fn b_at(tr: &SETrajectory, t: usize, back: usize) -> f64 {
    if t >= back {
        tr.b[t - back]
    } else {
        // b_{-1} solves b_0 = (1 + b_{-1}) gamma_w P(u^0 != 0); the only
        // caller with t < back uses the oracle or custom start.
        f64::NAN
    }
}

/// State evolution for general covariance through a Monte Carlo sample.
pub fn se_recursion_mc(spec: &ProblemSpec, sample: &McSample, lambda: f64, t_max: usize, init: SeInit, onsager: bool) -> Result<SETrajectory> {
    let start = match init {
        SeInit::Zero => None,
        SeInit::Oracle => {
            let fp = solve_general_l1_se_with(spec, sample, lambda)?;
            Some((fp.tau_star.powi(2), fp.b_star))
        }
        SeInit::Custom { tau2, b } => Some((tau2, b)),
    };
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let k = spec.gamma_x * spec.m2() * sample.mean_eigenvalue() / spec.h2_x;
    se_core(
        |z, a| {
            let ev = sample.eval(z, a)?;
            Ok((mean(&ev.norm2), mean(&ev.active)))
        },
        spec.gamma_w,
        k,
        lambda,
        t_max,
        start,
        onsager,
    )
}

/// Trajectory table with columns t, tau2_emp, tau2_se, b_t, dist_to_estimator.
/// `estimate` is in rescaled units.
pub fn trajectory_csv(run: &AmpRun, se: Option<&SETrajectory>, estimate: Option<&[f64]>) -> String {
    let mut out = String::from("t,tau2_emp,tau2_se,b_t,dist_to_estimator\n");
    let fmt = |x: Option<f64>| x.filter(|v| v.is_finite()).map_or(String::new(), |v| format!("{v:e}"));
    for s in &run.states {
        let se_val = se.and_then(|tr| tr.tau2.get(s.t).copied()).filter(|_| s.t > 0);
        let dist = estimate.map(|e| mean_sq_dist(&s.beta, e));
        out.push_str(&format!("{},{},{},{},{}\n", s.t, fmt(Some(s.tau2_emp)), fmt(se_val), fmt(Some(s.b)), fmt(dist)));
    }
    out
}

/// Denoiser of a symmetric matrix AMP. `apply` must be a pure function of
/// (step, x); state that depends on the realised iterates is updated in
/// `commit`, which runs once per step after `apply`.
pub trait MatrixDenoiser {
    fn apply(&self, step: usize, x: &DMatrix<f64>) -> DMatrix<f64>;

    /// (1/N') sum_i d f_i / d x_i, when known in closed form.
    fn jacobian(&self, _step: usize, _x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn commit(&mut self, _step: usize, _x: &DMatrix<f64>, _out: &DMatrix<f64>) {}
}

pub struct MatrixAmpProgram<D: MatrixDenoiser> {
    pub dim: usize,
    pub q: usize,
    /// Block sizes of the rows, informational; empty or summing to `dim`.
    pub blocks: Vec<usize>,
    pub x0: DMatrix<f64>,
    pub denoiser: D,
    /// Rademacher probes of the Jacobian-trace estimator.
    pub probes: usize,
    pub probe_seed: u64,
    pub fd_step: f64,
}

impl<D: MatrixDenoiser> MatrixAmpProgram<D> {
    pub fn new(x0: DMatrix<f64>, denoiser: D) -> Self {
        MatrixAmpProgram { dim: x0.nrows(), q: x0.ncols(), blocks: Vec::new(), x0, denoiser, probes: 8, probe_seed: 0x5eed, fd_step: 1e-6 }
    }

    fn validate(&self) -> Result<()> {
        if self.x0.nrows() != self.dim || self.x0.ncols() != self.q || self.q == 0 {
            return Err(Error::InvalidSpec("initial iterate does not match (dim, q)".into()));
        }
        if !self.blocks.is_empty() && self.blocks.iter().sum::<usize>() != self.dim {
            return Err(Error::InvalidSpec("block sizes do not add up to dim".into()));
        }
        Ok(())
    }
}

/// Hutchinson estimate of (1/N') sum_i d f_i / d x_i from central
/// differences along Rademacher probes.
pub fn hutchinson_jacobian<D: MatrixDenoiser>(den: &D, step: usize, x: &DMatrix<f64>, probes: usize, seed: u64, eps: f64) -> DMatrix<f64> {
    let (n, q) = x.shape();
    let mut rng = seed::rng(seed::derive(seed, step as u64));
    let mut b = DMatrix::zeros(q, q);
    for col in 0..q {
        for _ in 0..probes {
            let xi: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let mut xp = x.clone();
            let mut xm = x.clone();
            for i in 0..n {
                xp[(i, col)] += eps * xi[i];
                xm[(i, col)] -= eps * xi[i];
            }
            let d = (den.apply(step, &xp) - den.apply(step, &xm)) / (2.0 * eps);
            for a in 0..q {
                let s: f64 = (0..n).map(|i| xi[i] * d[(i, a)]).sum();
                b[(a, col)] += s / (n as f64 * probes as f64);
            }
        }
    }
    b
}

/// X^{t+1} = A m^t - m^{t-1} (B^t)^T on a GOE(dim) matrix drawn from `seed`.
pub fn run_symmetric_matrix_amp<D: MatrixDenoiser>(program: &mut MatrixAmpProgram<D>, seed: u64, t_max: usize) -> Result<Vec<DMatrix<f64>>> {
    let a = sample_goe(program.dim, seed);
    run_symmetric_matrix_amp_with(&a, program, t_max)
}

/// As [`run_symmetric_matrix_amp`] with a caller-supplied symmetric matrix.
/// Returns X^0, ..., X^{t_max}.
pub fn run_symmetric_matrix_amp_with<D: MatrixDenoiser>(a: &DMatrix<f64>, program: &mut MatrixAmpProgram<D>, t_max: usize) -> Result<Vec<DMatrix<f64>>> {
    program.validate()?;
    if a.nrows() != program.dim || a.ncols() != program.dim {
        return Err(Error::InvalidSpec("matrix does not match the program dimension".into()));
    }
    let mut xs = vec![program.x0.clone()];
    let mut m_prev = DMatrix::zeros(program.dim, program.q);
    for t in 0..t_max {
        let x = xs.last().expect("non-empty");
        let m = program.denoiser.apply(t, x);
        if m.shape() != x.shape() {
            return Err(Error::InvalidSpec("denoiser changed the iterate shape".into()));
        }
        let b = match program.denoiser.jacobian(t, x) {
            Some(b) => b,
            None => hutchinson_jacobian(&program.denoiser, t, x, program.probes, program.probe_seed, program.fd_step),
        };
        program.denoiser.commit(t, x, &m);
        let next: DMatrix<f64> = a * &m - &m_prev * b.transpose();
        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD) {
            return Err(Error::Diverged(t + 1));
        }
        xs.push(next);
        m_prev = m;
    }
    Ok(xs)
}

/// The reference-lasso AMP (identity covariance, zero start) written as a
/// symmetric matrix AMP with q = 3 columns on dim = n_w + n_x + p rows.
///
/// Even steps 2t apply F^t on the last p rows: column 0 carries u_0,
/// column 1 the iterate u^t, column 2 is zero. Odd steps 2t+1 apply G^t on
/// the first n_w + n_x rows, producing -sqrt(N/n_w) r^t over the panel rows
/// and sqrt(N/n_x) (1 + b_t) y~ over the training rows.
pub struct RefLassoEmbedding {
    n_w: usize,
    n_x: usize,
    p: usize,
    lambda: f64,
    u0: Vec<f64>,
    /// sqrt(p) eps_x / sqrt(n_x)
    noise: Vec<f64>,
    /// b_0, b_1, ...
    pub b: Vec<f64>,
    /// u^0, u^1, ... as produced by the even steps
    pub iterates: Vec<Vec<f64>>,
}

impl RefLassoEmbedding {
    fn big_n(&self) -> f64 {
        (self.n_w + self.n_x) as f64
    }

    fn dim(&self) -> f64 {
        (self.n_w + self.n_x + self.p) as f64
    }

    fn scale(&self) -> f64 {
        (self.dim() / self.big_n()).sqrt()
    }

    fn iterate(&self, t: usize, x: &DMatrix<f64>) -> Vec<f64> {
        if t == 0 {
            return vec![0.0; self.p];
        }
        let a = 1.0 + self.b[t - 1];
        let off = self.n_w + self.n_x;
        (0..self.p).map(|j| soft(x[(off + j, 1)] + a * self.u0[j], self.lambda * a)).collect()
    }
}

impl MatrixDenoiser for RefLassoEmbedding {
    fn apply(&self, step: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.scale();
        let n = self.big_n();
        let mut out = DMatrix::zeros(x.nrows(), 3);
        if step % 2 == 0 {
            let u = self.iterate(step / 2, x);
            let off = self.n_w + self.n_x;
            for j in 0..self.p {
                out[(off + j, 0)] = s * self.u0[j];
                out[(off + j, 1)] = s * u[j];
            }
        } else {
            let bt = self.b[step / 2];
            for i in 0..self.n_w {
                out[(i, 1)] = -s * n / self.n_w as f64 * x[(i, 1)];
            }
            let k = (n / self.n_x as f64).sqrt();
            for i in 0..self.n_x {
                let row = self.n_w + i;
                out[(row, 1)] = s * k * (1.0 + bt) * (k * x[(row, 0)] + self.noise[i]);
            }
        }
        out
    }

    fn jacobian(&self, step: usize, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let r = (self.big_n() / self.dim()).sqrt();
        let mut b = DMatrix::zeros(3, 3);
        if step % 2 == 0 {
            let t = step / 2;
            if t > 0 {
                let active = self.iterate(t, x).iter().filter(|v| **v != 0.0).count() as f64;
                b[(1, 1)] = r * active / self.big_n();
            }
        } else {
            b[(1, 1)] = -r;
            b[(1, 0)] = r * (1.0 + self.b[step / 2]);
        }
        Some(b)
    }

    fn commit(&mut self, step: usize, x: &DMatrix<f64>, _out: &DMatrix<f64>) {
        if step % 2 == 0 {
            let t = step / 2;
            let u = self.iterate(t, x);
            let k = u.iter().filter(|v| **v != 0.0).count() as f64 / self.n_w as f64;
            let b = if t == 0 { 0.0 } else { (1.0 + self.b[t - 1]) * k };
            self.b.push(b);
            self.iterates.push(u);
        }
    }
}

/// Builds the symmetric matrix [[B1, A0], [A0^T, B2]] sqrt(N/N') around the
/// data blocks A0 = [W / sqrt(N); X / sqrt(N)] and the program reproducing
/// [`run_ref_lasso_amp`] from a zero start.
pub fn ref_lasso_embedding(ds: &SyntheticDataset, lambda: f64, seed: u64) -> Result<(DMatrix<f64>, MatrixAmpProgram<RefLassoEmbedding>)> {
    if !ds.sigma.is_identity() {
        return Err(Error::Unsupported("the matrix-AMP embedding is implemented for identity covariance"));
    }
    let (n_w, n_x, p) = (ds.n_w(), ds.n_x(), ds.p());
    let n = n_w + n_x;
    let dim = n + p;
    let nf = n as f64;
    let sp = (p as f64).sqrt();
    let a0 = {
        let mut m = DMatrix::zeros(n, p);
        m.rows_mut(0, n_w).copy_from(&(&ds.w / nf.sqrt()));
        m.rows_mut(n_w, n_x).copy_from(&(&ds.x / nf.sqrt()));
        m
    };
    let b1 = sample_goe(n, seed::derive(seed, 1));
    let b2 = sample_goe(p, seed::derive(seed, 2)) * (p as f64 / nf).sqrt();
    let mut a = DMatrix::zeros(dim, dim);
    a.view_mut((0, 0), (n, n)).copy_from(&b1);
    a.view_mut((0, n), (n, p)).copy_from(&a0);
    a.view_mut((n, 0), (p, n)).copy_from(&a0.transpose());
    a.view_mut((n, n), (p, p)).copy_from(&b2);
    a *= (nf / dim as f64).sqrt();
    let den = RefLassoEmbedding {
        n_w,
        n_x,
        p,
        lambda,
        u0: ds.beta0.iter().map(|b| b * sp).collect(),
        noise: ds.eps_x.iter().map(|e| e * sp / (n_x as f64).sqrt()).collect(),
        b: Vec::new(),
        iterates: Vec::new(),
    };
    let mut prog = MatrixAmpProgram::new(DMatrix::zeros(dim, 3), den);
    prog.blocks = vec![n_w, n_x, p];
    Ok((a, prog))
}

