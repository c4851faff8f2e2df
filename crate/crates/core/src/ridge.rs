//! Ridge and reference-panel ridge risk theory.
//!
//! Both estimators reduce to a linear shrinkage of the eigen-coordinates,
//! r_i = s_i / (s_i + theta), so every expectation is a spectral sum.

use crate::error::{Error, Result};
use crate::report::{Estimator, FixedPoint, RiskReport, RidgeFixedPoint};
use crate::roots::brent;
use crate::scalar_l1::{best_lambda_by, log_grid, Objective};
use crate::spec::{noise_variance, ProblemSpec};

/// Smallest penalty accepted by the reference-panel ridge.
pub const MIN_REF_RIDGE_LAMBDA: f64 = 1e-8;

fn check_lambda(lambda: f64, min: f64) -> Result<()> {
    if !(lambda >= min && lambda.is_finite()) || lambda <= 0.0 {
        return Err(Error::OutOfRange(lambda));
    }
    Ok(())
}

fn mean<F: Fn(f64) -> f64>(eig: &[f64], f: F) -> f64 {
    eig.iter().map(|&s| f(s)).sum::<f64>() / eig.len() as f64
}

/// Root c >= 0 of c = gamma (1 + c) mean_i s_i / (s_i + lambda (1 + c)).
pub fn solve_divergence(gamma: f64, lambda: f64, eig: &[f64]) -> Result<f64> {
    let g = |c: f64| gamma * (1.0 + c) * mean(eig, |s| s / (s + lambda * (1.0 + c))) - c;
    let mut hi = 1.0;
    let mut k = 0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        k += 1;
        if k > 1100 {
            return Err(Error::NoConvergence { max_iter: k, residual: g(hi) });
        }
    }
    Ok(brent(g, 0.0, hi, 1e-16 * hi.max(1.0), 500)?.x)
}

/// Closed form of the divergence root for identity covariance.
pub fn c_star_iid(gamma: f64, lambda: f64) -> f64 {
    (-(1.0 + lambda - gamma) + ((1.0 - lambda - gamma).powi(2) + 4.0 * lambda).sqrt()) / (2.0 * lambda)
}

/// Spectral sums at shrinkage level theta.
struct Sums {
    /// mean r_i^2
    a: f64,
    /// mean s_i r_i^2
    sr2: f64,
    /// mean s_i r_i
    sr: f64,
    /// mean s_i (r_i u - 1)^2 for the scale u passed in
    bias: f64,
    tr: f64,
}

fn sums(eig: &[f64], theta: f64, u: f64) -> Sums {
    let mut s = Sums { a: 0.0, sr2: 0.0, sr: 0.0, bias: 0.0, tr: 0.0 };
    for &e in eig {
        let r = e / (e + theta);
        s.a += r * r;
        s.sr2 += e * r * r;
        s.sr += e * r;
        s.bias += e * (r * u - 1.0).powi(2);
        s.tr += e;
    }
    let n = eig.len() as f64;
    s.a /= n;
    s.sr2 /= n;
    s.sr /= n;
    s.bias /= n;
    s.tr /= n;
    s
}

/// Fixed point (rho, c) of the reference-panel ridge state evolution.
pub fn solve_ref_ridge_se_general(spec: &ProblemSpec, lambda: f64) -> Result<RidgeFixedPoint> {
    spec.validate()?;
    check_lambda(lambda, MIN_REF_RIDGE_LAMBDA)?;
    let eig = spec.covariance.eigenvalues();
    let c = solve_divergence(spec.gamma_w, lambda, &eig)?;
    let u = 1.0 + c;
    let m2 = spec.m2();
    let s = sums(&eig, lambda * u, u);
    let denom = 1.0 - spec.gamma_w * s.a;
    if !(denom > 0.0) {
        return Err(Error::NonPositiveRho(denom));
    }
    let q = m2 * mean(&eig, |e| e.powi(3) / (e + lambda * u).powi(2));
    let rho2 = (spec.gamma_w * u * u * q + spec.gamma_x * u * u * m2 * s.tr / spec.h2_x) / denom;
    Ok(RidgeFixedPoint { rho_star: rho2.sqrt(), c_star: c, lambda })
}

/// Residuals (|rho^2 - G1|, |c - G2|) of a ridge fixed point.
pub fn ref_ridge_residuals(spec: &ProblemSpec, fp: &RidgeFixedPoint) -> (f64, f64) {
    let eig = spec.covariance.eigenvalues();
    let u = 1.0 + fp.c_star;
    let theta = fp.lambda * u;
    let m2 = spec.m2();
    let rho2 = fp.rho_star * fp.rho_star;
    let g1 = spec.gamma_w * mean(&eig, |e| {
        let r = e / (e + theta);
        r * r * rho2 + e * r * r * u * u * m2
    }) + spec.gamma_x * u * u * m2 * mean(&eig, |e| e) / spec.h2_x;
    let g2 = spec.gamma_w * u * mean(&eig, |e| e / (e + theta));
    ((rho2 - g1).abs(), (fp.c_star - g2).abs())
}

/// Risk of the reference-panel ridge at a solved fixed point, any covariance.
pub fn ref_ridge_risk_general(spec: &ProblemSpec, lambda: f64, fp: &RidgeFixedPoint) -> Result<RiskReport> {
    let eig = spec.covariance.eigenvalues();
    let u = 1.0 + fp.c_star;
    let m2 = spec.m2();
    let rho2 = fp.rho_star * fp.rho_star;
    let s = sums(&eig, lambda * u, u);
    let mse = rho2 * s.a + m2 * s.bias;
    let cross = u * m2 * s.sr;
    let norm2 = rho2 * s.a + u * u * m2 * s.sr2;
    let r2 = if norm2 > 0.0 { spec.h2_s * cross * cross / (m2 * s.tr * norm2) } else { 0.0 };
    Ok(RiskReport {
        estimator: Estimator::RefRidge,
        lambda,
        mse: mse.max(0.0),
        r2,
        mse_se: 0.0,
        r2_se: 0.0,
        fixed_point: FixedPoint::Ridge(*fp),
    })
}

/// Reference-panel ridge risk for identity covariance, from the closed-form c*.
pub fn ref_ridge_risk_iid(spec: &ProblemSpec, lambda: f64) -> Result<RiskReport> {
    spec.validate()?;
    check_lambda(lambda, MIN_REF_RIDGE_LAMBDA)?;
    if !spec.covariance.is_identity() {
        return Err(Error::Unsupported("iid ridge theory needs identity covariance"));
    }
    let c = c_star_iid(spec.gamma_w, lambda);
    let u = 1.0 + c;
    let s = 1.0 / (1.0 + lambda * u);
    let m2 = spec.m2();
    let denom = 1.0 - spec.gamma_w * s * s;
    if !(denom > 0.0) {
        return Err(Error::NonPositiveRho(denom));
    }
    let rho2 = (spec.gamma_x * u * u * m2 / spec.h2_x + spec.gamma_w * s * s * u * u * m2) / denom;
    let mse = s * s * rho2 + (s * u - 1.0).powi(2) * m2;
    let r2 = spec.h2_s * u * u * m2 / (rho2 + u * u * m2);
    Ok(RiskReport {
        estimator: Estimator::RefRidge,
        lambda,
        mse,
        r2,
        mse_se: 0.0,
        r2_se: 0.0,
        fixed_point: FixedPoint::Ridge(RidgeFixedPoint { rho_star: rho2.sqrt(), c_star: c, lambda }),
    })
}

/// Ridge state evolution for an arbitrary spectrum: with b the divergence
/// and tau the effective noise level, returns (tau, b).
pub fn solve_ridge_se_general(spec: &ProblemSpec, lambda: f64) -> Result<RidgeFixedPoint> {
    spec.validate()?;
    check_lambda(lambda, f64::MIN_POSITIVE)?;
    let eig = spec.covariance.eigenvalues();
    let b = solve_divergence(spec.gamma_x, lambda, &eig)?;
    let theta = lambda * (1.0 + b);
    let s = sums(&eig, theta, 1.0);
    let denom = 1.0 - spec.gamma_x * s.a;
    if !(denom > 0.0) {
        return Err(Error::NonPositiveRho(denom));
    }
    let sigma2 = noise_variance(spec)?.x;
    let tau2 = spec.gamma_x * (sigma2 + spec.m2() * s.bias) / denom;
    Ok(RidgeFixedPoint { rho_star: tau2.sqrt(), c_star: b, lambda })
}

/// Traditional ridge risk for any covariance.
pub fn ridge_risk_general(spec: &ProblemSpec, lambda: f64) -> Result<RiskReport> {
    let fp = solve_ridge_se_general(spec, lambda)?;
    let eig = spec.covariance.eigenvalues();
    let m2 = spec.m2();
    let tau2 = fp.rho_star * fp.rho_star;
    let s = sums(&eig, lambda * (1.0 + fp.c_star), 1.0);
    let mse = tau2 * s.a + m2 * s.bias;
    let cross = m2 * s.sr;
    let norm2 = tau2 * s.a + m2 * s.sr2;
    let r2 = if norm2 > 0.0 { spec.h2_s * cross * cross / (m2 * s.tr * norm2) } else { 0.0 };
    Ok(RiskReport {
        estimator: Estimator::Ridge,
        lambda,
        mse: mse.max(0.0),
        r2,
        mse_se: 0.0,
        r2_se: 0.0,
        fixed_point: FixedPoint::Ridge(fp),
    })
}

/// Traditional ridge risk for identity covariance.
pub fn ridge_risk_iid(spec: &ProblemSpec, lambda: f64) -> Result<RiskReport> {
    spec.validate()?;
    check_lambda(lambda, f64::MIN_POSITIVE)?;
    if !spec.covariance.is_identity() {
        return Err(Error::Unsupported("iid ridge theory needs identity covariance"));
    }
    let gx = spec.gamma_x;
    let b = c_star_iid(gx, lambda);
    let s = 1.0 / (1.0 + lambda * (1.0 + b));
    let m2 = spec.m2();
    let sigma2 = noise_variance(spec)?.x;
    let tau2 = gx * (sigma2 + (1.0 - s).powi(2) * m2) / (1.0 - gx * s * s);
    let mse = s * s * tau2 + (1.0 - s).powi(2) * m2;
    let r2 = spec.h2_s * m2 / (tau2 + m2);
    Ok(RiskReport {
        estimator: Estimator::Ridge,
        lambda,
        mse,
        r2,
        mse_se: 0.0,
        r2_se: 0.0,
        fixed_point: FixedPoint::Ridge(RidgeFixedPoint { rho_star: tau2.sqrt(), c_star: b, lambda }),
    })
}

/// Penalty maximizing the traditional ridge R^2 (and minimizing its MSE)
/// under identity covariance.
pub fn ridge_optimal_lambda(gamma_x: f64, h2_x: f64) -> f64 {
    gamma_x * (1.0 - h2_x) / h2_x
}

/// Published closed forms for identity covariance, written out term by term.
/// These are independent of the state-evolution route above and serve as
/// its cross-check.
pub mod closed_form {
    fn root(lambda: f64, gamma: f64) -> f64 {
        ((1.0 - lambda - gamma).powi(2) + 4.0 * lambda).sqrt()
    }

    /// Reference ridge R^2; equals the state-evolution value when h2_x = h2_s.
    pub fn ref_ridge_r2(lambda: f64, gamma_x: f64, gamma_w: f64, h2_s: f64) -> f64 {
        let k = 1.0 / (1.0 + lambda + gamma_w + root(lambda, gamma_w));
        h2_s * h2_s / (h2_s + gamma_x) * (1.0 - 4.0 * gamma_w * k * k)
    }

    pub fn ref_ridge_mse(lambda: f64, gamma_x: f64, gamma_w: f64, h2_x: f64, m2: f64) -> f64 {
        let r = (4.0 * lambda + (lambda + gamma_w - 1.0).powi(2)).sqrt();
        let l = lambda;
        let g = gamma_w;
        let t1 = (l * l + l * g + l * r - r - g + 1.0).powi(2) / (l * l * (l + r + g + 1.0).powi(2));
        let t2 = gamma_x * (l + r + g - 1.0).powi(2) / (h2_x * l * l * (l + r + g + 1.0).powi(2));
        let num = 2.0 * h2_x * g / gamma_x + (l + 1.0) * (l + r + 1.0) + g * (2.0 * l + r) + g * g;
        let den = g * (2.0 * l + r) + (l + 1.0) * (l + r + 1.0) + g * g - 2.0 * g;
        m2 * (t1 + t2 * num / den)
    }

    /// The shrinkage constant in the traditional ridge R^2.
    pub fn ridge_c(lambda: f64, gamma_x: f64) -> f64 {
        4.0 * gamma_x / (1.0 + lambda + gamma_x + root(lambda, gamma_x))
    }

    pub fn ridge_r2(lambda: f64, gamma_x: f64, h2_s: f64) -> f64 {
        let c = ridge_c(lambda, gamma_x);
        let k = 1.0 / (1.0 + lambda + gamma_x + root(lambda, gamma_x));
        h2_s * h2_s / ((1.0 - c) * h2_s + gamma_x) * (1.0 - 4.0 * gamma_x * k * k)
    }

    pub fn ridge_mse(lambda: f64, gamma_x: f64, h2_x: f64, m2: f64) -> f64 {
        let r = root(lambda, gamma_x);
        let g = gamma_x;
        let a = ((g + 1.0) * lambda + (g - 1.0).powi(2) + (g - 1.0) * r) / (2.0 * g * r);
        let b = (1.0 + g + lambda - r) / (2.0 * r);
        m2 * a + m2 * (1.0 - h2_x) / h2_x * b
    }

    /// R^2 at the optimal penalty. The published denominator reads
    /// (1 - R) h_s^2; at lambda* the constant c equals 4 gamma_x R, which is
    /// what the general formula requires.
    pub fn ridge_r2_at_optimum(gamma_x: f64, h2_x: f64, h2_s: f64) -> f64 {
        let h = h2_x;
        let rr = h / (h * ((gamma_x * gamma_x / (h * h) + (2.0 / h - 4.0) * gamma_x + 1.0).sqrt() + 1.0) + gamma_x);
        h2_s * h2_s / ((1.0 - 4.0 * gamma_x * rr) * h2_s + gamma_x) * (1.0 - 4.0 * gamma_x * rr * rr)
    }

    /// MSE at the optimal penalty. The symbol `d` left in the published
    /// numerator is read as M.
    pub fn ridge_mse_at_optimum(gamma_x: f64, h2_x: f64, m2: f64) -> f64 {
        let h = h2_x;
        let g = gamma_x;
        let m = (g * g / (h * h) + (2.0 / h - 4.0) * g + 1.0).sqrt();
        let d = m;
        m2 * (h * h * (2.0 * (m - 2.0) * g - d + 1.0) - (m - 2.0) * h * g + g * g) / (2.0 * m * h * h * g)
    }
}

/// Distance between the state-evolution R^2 factor and the random-matrix
/// factor 1 / (1 - b'_w).
pub fn rmt_equivalence_gap(lambda: f64, gamma_w: f64) -> f64 {
    let disc = ((1.0 - lambda - gamma_w).powi(2) + 4.0 * lambda).sqrt();
    let bw = (-(-1.0 + lambda + gamma_w) + disc) / 2.0;
    let bw_prime = -gamma_w * bw / (gamma_w * lambda + (bw + lambda).powi(2));
    let amp = 1.0 - 4.0 * gamma_w / (1.0 + lambda + gamma_w + disc).powi(2);
    (1.0 / (1.0 - bw_prime) - amp).abs()
}

/// Optimal-tuning comparison between ridge and reference ridge.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeOrdering {
    pub min_mse_ref: f64,
    pub min_mse_ridge: f64,
    pub max_r2_ref: f64,
    pub max_r2_ridge: f64,
}

impl RidgeOrdering {
    /// min R_RW - min R_R; positive when ridge wins.
    pub fn mse_gap(&self) -> f64 {
        self.min_mse_ref - self.min_mse_ridge
    }

    /// max A^2_RW - max A^2_R; negative when ridge wins.
    pub fn r2_gap(&self) -> f64 {
        self.max_r2_ref - self.max_r2_ridge
    }
}

/// Optimal MSE and R^2 of both ridge estimators over `grid` (refined
/// locally). Requires gamma_x = gamma_w.
pub fn ridge_ordering_check(spec: &ProblemSpec, grid: &[f64]) -> Result<RidgeOrdering> {
    if (spec.gamma_x - spec.gamma_w).abs() > 1e-12 * spec.gamma_x.max(1.0) {
        return Err(Error::InvalidSpec(format!(
            "ordering check needs gamma_x = gamma_w, got {} and {}",
            spec.gamma_x, spec.gamma_w
        )));
    }
    let rr = |l: f64| {
        if spec.covariance.is_identity() {
            ref_ridge_risk_iid(spec, l)
        } else {
            solve_ref_ridge_se_general(spec, l).and_then(|fp| ref_ridge_risk_general(spec, l, &fp))
        }
    };
    let rd = |l: f64| {
        if spec.covariance.is_identity() {
            ridge_risk_iid(spec, l)
        } else {
            ridge_risk_general(spec, l)
        }
    };
    let (_, a) = best_lambda_by(rr, Objective::MinMse, grid)?;
    let (_, b) = best_lambda_by(rd, Objective::MinMse, grid)?;
    let (_, c) = best_lambda_by(rr, Objective::MaxR2, grid)?;
    let (_, d) = best_lambda_by(rd, Objective::MaxR2, grid)?;
    Ok(RidgeOrdering { min_mse_ref: a.mse, min_mse_ridge: b.mse, max_r2_ref: c.r2, max_r2_ridge: d.r2 })
}

/// Default penalty grid for the ordering check.
pub fn default_ordering_grid() -> Vec<f64> {
    log_grid(1e-3, 1e6, 181)
}
