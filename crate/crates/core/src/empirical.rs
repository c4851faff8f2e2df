//! Finite-sample ground truth: synthetic data, convex solvers for the four
//! estimators, risk evaluation and seeded Monte Carlo replication.
//!
//! Units follow the data model: rows of X, W, S are N(0, Sigma), beta_0 has
//! entries of order 1/sqrt(p), and the lasso penalty is (lambda/sqrt(p))||beta||_1.

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::covariance::{dot, CovarianceModel};
use crate::error::{Error, Result};
use crate::report::Estimator;
use crate::seed;
use crate::special::soft;
use crate::spec::ProblemSpec;

pub const MIN_P: usize = 50;
pub const MAX_P: usize = 10_000;
const MIN_N: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub x: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub y_x: Vec<f64>,
    pub y_s: Vec<f64>,
    pub beta0: Vec<f64>,
    pub eps_x: Vec<f64>,
    pub eps_s: Vec<f64>,
    pub sigma: CovarianceModel,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn p(&self) -> usize {
        self.beta0.len()
    }
    pub fn n_x(&self) -> usize {
        self.x.nrows()
    }
    pub fn n_w(&self) -> usize {
        self.w.nrows()
    }
    pub fn n_s(&self) -> usize {
        self.s.nrows()
    }
}

fn sample_size(p: usize, gamma: f64, name: &str) -> Result<usize> {
    let n = (p as f64 / gamma).round() as usize;
    if n < MIN_N {
        return Err(Error::DimensionTooSmall(format!("{name} = {n} < {MIN_N}")));
    }
    Ok(n)
}

fn gaussian_rows<R: rand::Rng>(n: usize, p: usize, root: &Option<DMatrix<f64>>, scale: &Option<Vec<f64>>, rng: &mut R) -> DMatrix<f64> {
    let mut z = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng));
    if let Some(d) = scale {
        for (j, dj) in d.iter().enumerate() {
            z.column_mut(j).scale_mut(*dj);
        }
        z
    } else if let Some(r) = root {
        z * r
    } else {
        z
    }
}

/// Options for [`generate_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Rescale beta_0 so ||beta_0||^2_Sigma equals its expectation
    /// m2 tr(Sigma) / p. With about kappa p nonzero effects the raw draw
    /// fluctuates by roughly sqrt(2 / (kappa p)) relative.
    pub standardize_signal: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions { standardize_signal: true }
    }
}

/// Draws one dataset with the default options.
pub fn generate(spec: &ProblemSpec, p: usize, seed: u64) -> Result<SyntheticDataset> {
    generate_with(spec, p, seed, &GenerateOptions::default())
}

/// Draws one dataset. Noise variances are set from the realized
/// ||beta_0||^2_Sigma so the heritabilities hold exactly in expectation.
pub fn generate_with(spec: &ProblemSpec, p: usize, seed: u64, opts: &GenerateOptions) -> Result<SyntheticDataset> {
    spec.validate()?;
    if p < MIN_P {
        return Err(Error::DimensionTooSmall(format!("p = {p} < {MIN_P}")));
    }
    if p > MAX_P {
        return Err(Error::InvalidSpec(format!("p = {p} above the dense-storage limit {MAX_P}")));
    }
    let n_x = sample_size(p, spec.gamma_x, "n_x")?;
    let n_w = sample_size(p, spec.gamma_w, "n_w")?;
    let n_s = sample_size(p, spec.gamma_s, "n_s")?;
    let sigma = spec.covariance_at(p)?;
    let (root, scale) = match &sigma {
        CovarianceModel::Identity { .. } => (None, None),
        CovarianceModel::Spectrum { eigenvalues } => (None, Some(eigenvalues.iter().map(|s| s.sqrt()).collect())),
        CovarianceModel::DenseSPD { .. } => (Some(sigma.matrix_power(0.5)), None),
    };
    let mut rng = seed::rng(seed);
    let sp = (p as f64).sqrt();
    let mut beta0: Vec<f64> = spec.prior.sample_vector(p, &mut rng).into_iter().map(|u| u / sp).collect();
    let x = gaussian_rows(n_x, p, &root, &scale, &mut rng);
    let w = gaussian_rows(n_w, p, &root, &scale, &mut rng);
    let s = gaussian_rows(n_s, p, &root, &scale, &mut rng);
    let mut signal = sigma.inner(&beta0, &beta0);
    if opts.standardize_signal && signal > 0.0 {
        let target = spec.m2() * sigma.mean_eigenvalue();
        let f = (target / signal).sqrt();
        beta0.iter_mut().for_each(|b| *b *= f);
        signal = sigma.inner(&beta0, &beta0);
    }
    let sd_x = (signal * (1.0 - spec.h2_x) / spec.h2_x).sqrt();
    let sd_s = (signal * (1.0 - spec.h2_s) / spec.h2_s).sqrt();
    let eps_x: Vec<f64> = (0..n_x).map(|_| sd_x * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let eps_s: Vec<f64> = (0..n_s).map(|_| sd_s * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let b = DVector::from_column_slice(&beta0);
    let y_x: Vec<f64> = (&x * &b).iter().zip(&eps_x).map(|(a, e)| a + e).collect();
    let y_s: Vec<f64> = (&s * &b).iter().zip(&eps_s).map(|(a, e)| a + e).collect();
    Ok(SyntheticDataset { x, w, s, y_x, y_s, beta0, eps_x, eps_s, sigma, seed })
}

/// M^T M / n.
pub fn gram(m: &DMatrix<f64>) -> DMatrix<f64> {
    // gemm on an explicit transpose is far faster than tr_mul here
    let mut g = m.transpose() * m;
    let n = m.nrows() as f64;
    for j in 0..g.ncols() {
        for i in 0..j {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]) / n;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        g[(j, j)] /= n;
    }
    g
}

/// X^T y_x / n_x.
pub fn xty(ds: &SyntheticDataset) -> Vec<f64> {
    let v = ds.x.tr_mul(&DVector::from_column_slice(&ds.y_x)) / ds.n_x() as f64;
    v.iter().cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    /// Full sweeps before restricting to the active set.
    pub screen_after: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { kkt_tol: 1e-7, max_sweeps: 100_000, screen_after: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdSolution {
    pub beta: Vec<f64>,
    pub kkt_residual: f64,
    pub sweeps: usize,
}

/// KKT residual of 1/2 b^T A b - b^T c + mu ||b||_1 given g = A b - c.
pub fn lasso_kkt(beta: &[f64], g: &[f64], mu: f64) -> f64 {
    beta.iter()
        .zip(g)
        .map(|(&b, &gj)| if b != 0.0 { (gj + mu * b.signum()).abs() } else { (gj.abs() - mu).max(0.0) })
        .fold(0.0, f64::max)
}

fn gradient(a: &DMatrix<f64>, beta: &[f64], c: &[f64]) -> Vec<f64> {
    let ab = a * DVector::from_column_slice(beta);
    ab.iter().zip(c).map(|(x, y)| x - y).collect()
}

/// Coordinate descent on 1/2 b^T A b - b^T c + mu ||b||_1 in covariance form.
pub fn lasso_cd(a: &DMatrix<f64>, c: &[f64], mu: f64, warm: Option<&[f64]>, opts: &LassoOptions) -> Result<CdSolution> {
    let p = c.len();
    if a.nrows() != p || a.ncols() != p {
        return Err(Error::InvalidSpec("Gram matrix and linear term disagree in size".into()));
    }
    if !(mu >= 0.0) {
        return Err(Error::OutOfRange(mu));
    }
    let mut beta = match warm {
        Some(w) if w.len() == p => w.to_vec(),
        _ => vec![0.0; p],
    };
    let mut g = gradient(a, &beta, c);
    let sweep = |idx: &mut dyn Iterator<Item = usize>, beta: &mut Vec<f64>, g: &mut Vec<f64>| -> f64 {
        let mut max_change: f64 = 0.0;
        for j in idx {
            let ajj = a[(j, j)];
            if ajj <= 0.0 {
                continue;
            }
            let new = soft(beta[j] - g[j] / ajj, mu / ajj);
            let delta = new - beta[j];
            if delta != 0.0 {
                beta[j] = new;
                for (gi, ci) in g.iter_mut().zip(a.column(j).iter()) {
                    *gi += delta * ci;
                }
                max_change = max_change.max(delta.abs() * ajj.sqrt());
            }
        }
        max_change
    };
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < opts.max_sweeps {
        sweep(&mut (0..p), &mut beta, &mut g);
        sweeps += 1;
        if sweeps >= opts.screen_after {
            loop {
                let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
                let ch = sweep(&mut active.into_iter(), &mut beta, &mut g);
                sweeps += 1;
                if ch < 0.1 * opts.kkt_tol || sweeps >= opts.max_sweeps {
                    break;
                }
            }
        }
        g = gradient(a, &beta, c);
        residual = lasso_kkt(&beta, &g, mu);
        if residual < opts.kkt_tol {
            return Ok(CdSolution { beta, kkt_residual: residual, sweeps });
        }
    }
    Err(Error::NoConvergence { max_iter: opts.max_sweeps, residual })
}

/// Solves (A + lambda I) b = c by Cholesky.
pub fn ridge_solve(a: &DMatrix<f64>, c: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::OutOfRange(lambda));
    }
    let p = c.len();
    let m = a + DMatrix::identity(p, p) * lambda;
    let ch = Cholesky::new(m).ok_or(Error::SingularSystem)?;
    let b = ch.solve(&DVector::from_column_slice(c));
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(b.iter().cloned().collect())
}

fn penalty(ds: &SyntheticDataset, lambda: f64) -> f64 {
    lambda / (ds.p() as f64).sqrt()
}

pub fn fit_ref_lasso(ds: &SyntheticDataset, lambda: f64) -> Result<Vec<f64>> {
    Ok(lasso_cd(&gram(&ds.w), &xty(ds), penalty(ds, lambda), None, &LassoOptions::default())?.beta)
}

pub fn fit_lasso(ds: &SyntheticDataset, lambda: f64) -> Result<Vec<f64>> {
    Ok(lasso_cd(&gram(&ds.x), &xty(ds), penalty(ds, lambda), None, &LassoOptions::default())?.beta)
}

pub fn fit_ref_ridge(ds: &SyntheticDataset, lambda: f64) -> Result<Vec<f64>> {
    ridge_solve(&gram(&ds.w), &xty(ds), lambda)
}

pub fn fit_ridge(ds: &SyntheticDataset, lambda: f64) -> Result<Vec<f64>> {
    ridge_solve(&gram(&ds.x), &xty(ds), lambda)
}

/// Summary statistics of one dataset, computed once and shared by all fits.
pub struct Prepared<'a> {
    pub ds: &'a SyntheticDataset,
    pub c: Vec<f64>,
    gram_x: Option<DMatrix<f64>>,
    gram_w: Option<DMatrix<f64>>,
}

impl<'a> Prepared<'a> {
    pub fn new(ds: &'a SyntheticDataset) -> Self {
        Prepared { ds, c: xty(ds), gram_x: None, gram_w: None }
    }

    fn gram_for(&mut self, est: Estimator) -> &DMatrix<f64> {
        let ds = self.ds;
        match est {
            Estimator::Lasso | Estimator::Ridge => self.gram_x.get_or_insert_with(|| gram(&ds.x)),
            Estimator::RefLasso | Estimator::RefRidge => self.gram_w.get_or_insert_with(|| gram(&ds.w)),
        }
    }

    pub fn fit(&mut self, est: Estimator, lambda: f64, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        let mu = penalty(self.ds, lambda);
        let c = self.c.clone();
        let a = self.gram_for(est);
        match est {
            Estimator::Lasso | Estimator::RefLasso => Ok(lasso_cd(a, &c, mu, warm, &LassoOptions::default())?.beta),
            Estimator::Ridge | Estimator::RefRidge => ridge_solve(a, &c, lambda),
        }
    }
}

/// Fits `est` at `lambda` on one dataset.
pub fn fit(ds: &SyntheticDataset, est: Estimator, lambda: f64) -> Result<Vec<f64>> {
    Prepared::new(ds).fit(est, lambda, None)
}

/// (mse, r2): ||beta_hat - beta_0||^2_Sigma and the squared cosine between
/// y_s and S beta_hat (zero when S beta_hat vanishes).
pub fn evaluate(ds: &SyntheticDataset, beta_hat: &[f64]) -> Result<(f64, f64)> {
    if beta_hat.len() != ds.p() {
        return Err(Error::InvalidSpec(format!("estimate of length {} for p = {}", beta_hat.len(), ds.p())));
    }
    let d: Vec<f64> = beta_hat.iter().zip(&ds.beta0).map(|(a, b)| a - b).collect();
    let mse = ds.sigma.inner(&d, &d).max(0.0);
    let pred = &ds.s * DVector::from_column_slice(beta_hat);
    let pp: f64 = pred.iter().map(|v| v * v).sum();
    if pp == 0.0 {
        return Ok((mse, 0.0));
    }
    let yp: f64 = ds.y_s.iter().zip(pred.iter()).map(|(a, b)| a * b).sum();
    let yy = dot(&ds.y_s, &ds.y_s);
    Ok((mse, yp * yp / (yy * pp)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRisk {
    pub estimator: Estimator,
    pub lambda: f64,
    pub mse: Vec<f64>,
    pub r2: Vec<f64>,
    pub mse_mean: f64,
    pub mse_se: f64,
    pub r2_mean: f64,
    pub r2_se: f64,
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

impl EmpiricalRisk {
    fn from_values(estimator: Estimator, lambda: f64, mse: Vec<f64>, r2: Vec<f64>) -> Self {
        let (mse_mean, mse_se) = mean_se(&mse);
        let (r2_mean, r2_se) = mean_se(&r2);
        EmpiricalRisk { estimator, lambda, mse, r2, mse_mean, mse_se, r2_mean, r2_se }
    }
}

/// Replicated risk of one estimator at one penalty.
pub fn monte_carlo(spec: &ProblemSpec, p: usize, lambda: f64, estimator: Estimator, reps: usize, seed: u64) -> Result<EmpiricalRisk> {
    Ok(monte_carlo_grid(spec, p, &[(estimator, lambda)], reps, seed)?.remove(0))
}

/// Replicated risks of several (estimator, lambda) pairs on shared datasets.
/// Replicate r uses the dataset seed `seed::derive(seed, r)`.
pub fn monte_carlo_grid(spec: &ProblemSpec, p: usize, points: &[(Estimator, f64)], reps: usize, seed: u64) -> Result<Vec<EmpiricalRisk>> {
    if reps < 2 {
        return Err(Error::InvalidSpec("monte_carlo needs at least two replicates".into()));
    }
    if points.is_empty() {
        return Err(Error::InvalidSpec("no (estimator, lambda) points".into()));
    }
    let per_rep: Vec<Vec<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<(f64, f64)>> {
            let run = || -> Result<Vec<(f64, f64)>> {
                let ds = generate(spec, p, seed::derive(seed, r as u64))?;
                let mut prep = Prepared::new(&ds);
                points
                    .iter()
                    .map(|&(est, l)| {
                        let b = prep.fit(est, l, None)?;
                        evaluate(&ds, &b)
                    })
                    .collect()
            };
            run().map_err(|e| Error::Replicate { index: r, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(k, &(est, l))| {
            let mse = per_rep.iter().map(|v| v[k].0).collect();
            let r2 = per_rep.iter().map(|v| v[k].1).collect();
            EmpiricalRisk::from_values(est, l, mse, r2)
        })
        .collect())
}

const MAGIC: &[u8; 5] = b"AMPR1";

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

/// Writes a dataset as: magic "AMPR1", header (p, n_x, n_w, n_s, seed,
/// covariance tag) as little-endian u64, then column-major f64 blocks
/// X, W, S, y_x, y_s, beta0, eps_x, eps_s and the covariance payload.
pub fn write_dataset<W: Write>(ds: &SyntheticDataset, out: &mut W) -> Result<()> {
    out.write_all(MAGIC)?;
    let tag = match ds.sigma {
        CovarianceModel::Identity { .. } => 0,
        CovarianceModel::Spectrum { .. } => 1,
        CovarianceModel::DenseSPD { .. } => 2,
    };
    for v in [ds.p(), ds.n_x(), ds.n_w(), ds.n_s()] {
        put_u64(out, v as u64)?;
    }
    put_u64(out, ds.seed)?;
    put_u64(out, tag)?;
    for m in [&ds.x, &ds.w, &ds.s] {
        put_f64s(out, m.as_slice())?;
    }
    for v in [&ds.y_x, &ds.y_s, &ds.beta0, &ds.eps_x, &ds.eps_s] {
        put_f64s(out, v)?;
    }
    match &ds.sigma {
        CovarianceModel::Identity { .. } => {}
        CovarianceModel::Spectrum { eigenvalues } => put_f64s(out, eigenvalues)?,
        CovarianceModel::DenseSPD { matrix } => put_f64s(out, matrix.as_slice())?,
    }
    Ok(())
}

pub fn read_dataset<R: Read>(input: &mut R) -> Result<SyntheticDataset> {
    let mut magic = [0u8; 5];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Io("not an AMPR1 dataset".into()));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = get_u64(input)? as usize;
    }
    let [p, n_x, n_w, n_s] = dims;
    if p == 0 || p > MAX_P || n_x == 0 || n_w == 0 || n_s == 0 || n_x.max(n_w).max(n_s) > 100 * MAX_P {
        return Err(Error::Io(format!("implausible dimensions {dims:?}")));
    }
    let seed = get_u64(input)?;
    let tag = get_u64(input)?;
    let x = DMatrix::from_vec(n_x, p, get_f64s(input, n_x * p)?);
    let w = DMatrix::from_vec(n_w, p, get_f64s(input, n_w * p)?);
    let s = DMatrix::from_vec(n_s, p, get_f64s(input, n_s * p)?);
    let y_x = get_f64s(input, n_x)?;
    let y_s = get_f64s(input, n_s)?;
    let beta0 = get_f64s(input, p)?;
    let eps_x = get_f64s(input, n_x)?;
    let eps_s = get_f64s(input, n_s)?;
    let sigma = match tag {
        0 => CovarianceModel::Identity { p },
        1 => CovarianceModel::Spectrum { eigenvalues: get_f64s(input, p)? },
        2 => CovarianceModel::DenseSPD { matrix: DMatrix::from_vec(p, p, get_f64s(input, p * p)?) },
        t => return Err(Error::Io(format!("unknown covariance tag {t}"))),
    };
    Ok(SyntheticDataset { x, w, s, y_x, y_s, beta0, eps_x, eps_s, sigma, seed })
}
