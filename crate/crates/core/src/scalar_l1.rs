//! Lasso and reference-panel lasso risk theory for identity covariance.
//!
//! Everything is reduced to three moments of the soft threshold applied to
//! V = z + zeta * beta_bar at threshold t:
//! e2 = E eta(V, t)^2, d = P(|V| > t) and cross = E beta_bar eta(V, t).
//! For the Bernoulli-Gaussian prior these are erf expressions; other priors
//! go through [`crate::quadrature::expect_2d`].

use crate::error::{Error, Result};
use crate::quadrature::expect_2d_split;
use crate::report::{Estimator, FixedPoint, RiskReport, ScalarSEFixedPoint};
use crate::ridge;
use crate::roots::{brent, golden_min};
use crate::special::{soft, soft_second_moment, tail_prob};
use crate::spec::{noise_variance, ProblemSpec};

/// Moments of eta(z + zeta beta_bar, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftMoments {
    pub e2: f64,
    pub d: f64,
    pub cross: f64,
}

/// How the soft-threshold moments are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentMethod {
    /// Closed form when the prior is Bernoulli-Gaussian, quadrature otherwise.
    #[default]
    Auto,
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub xtol: f64,
    pub max_iter: usize,
    pub method: MomentMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { xtol: 1e-15, max_iter: 500, method: MomentMethod::Auto }
    }
}

/// Soft-threshold moment evaluator bound to one prior.
pub struct Moments<'a> {
    spec: &'a ProblemSpec,
    quadrature: bool,
}

impl<'a> Moments<'a> {
    pub fn new(spec: &'a ProblemSpec, opts: &SolverOptions) -> Result<Self> {
        spec.prior.validate()?;
        let is_bg = matches!(spec.prior, crate::prior::SignalPrior::BernoulliGaussian { .. });
        let quadrature = match opts.method {
            MomentMethod::ClosedForm if !is_bg => {
                return Err(Error::Unsupported("closed-form moments need a Bernoulli-Gaussian prior"))
            }
            MomentMethod::ClosedForm => false,
            MomentMethod::Auto => !is_bg,
            MomentMethod::Quadrature => true,
        };
        Ok(Moments { spec, quadrature })
    }

    pub fn m2(&self) -> f64 {
        self.spec.m2()
    }

    pub fn at(&self, zeta: f64, t: f64) -> Result<SoftMoments> {
        if self.quadrature {
            quadrature_moments(&self.spec.prior, zeta, t)
        } else {
            Ok(bg_moments(&self.spec.prior, zeta, t))
        }
    }
}

fn bg_moments(prior: &crate::prior::SignalPrior, zeta: f64, t: f64) -> SoftMoments {
    let (kappa, s2) = match *prior {
        crate::prior::SignalPrior::BernoulliGaussian { kappa, sigma_beta2 } => (kappa, sigma_beta2),
        _ => unreachable!("bg_moments called with a non Bernoulli-Gaussian prior"),
    };
    let v1 = 1.0 + zeta * zeta * s2;
    let p1 = tail_prob(v1, t);
    SoftMoments {
        e2: (1.0 - kappa) * soft_second_moment(1.0, t) + kappa * soft_second_moment(v1, t),
        d: (1.0 - kappa) * tail_prob(1.0, t) + kappa * p1,
        cross: kappa * zeta * s2 * p1,
    }
}

fn quadrature_moments(prior: &crate::prior::SignalPrior, zeta: f64, t: f64) -> Result<SoftMoments> {
    let br = |b: f64| vec![-t - zeta * b, t - zeta * b];
    let e2 = expect_2d_split(prior, |z, b| soft(z + zeta * b, t).powi(2), br)?;
    let d = expect_2d_split(prior, |z, b| if (z + zeta * b).abs() > t { 1.0 } else { 0.0 }, br)?;
    let cross = expect_2d_split(prior, |z, b| b * soft(z + zeta * b, t), br)?;
    Ok(SoftMoments { e2, d, cross })
}

fn require_identity(spec: &ProblemSpec) -> Result<()> {
    spec.validate()?;
    if !spec.covariance.is_identity() {
        return Err(Error::Unsupported("scalar lasso theory needs identity covariance"));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::OutOfRange(lambda));
    }
    Ok(())
}

/// Root of F(zeta) = f(zeta, lambda zeta) - 1 on the branch where the
/// divergence D(zeta) = gamma_w d(zeta, lambda zeta) stays below one.
///
/// `eval` returns (F, D). `zeta_inf` is the point beyond which F > 0
/// regardless of the penalty; `d_inf` is the limit of D as zeta grows.
pub(crate) struct ZetaRoot {
    pub zeta: f64,
    pub residual: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

pub(crate) fn solve_zeta<E>(eval: E, gamma_w: f64, zeta_inf: f64, d_inf: f64, xtol: f64, max_iter: usize) -> Result<ZetaRoot>
where
    E: Fn(f64) -> Result<(f64, f64)>,
{
    // Errors inside closures are carried out through this cell.
    let failure = std::cell::Cell::new(None::<Error>);
    let f = |z: f64| match eval(z) {
        Ok((fv, _)) => fv,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    let dm1 = |z: f64| match eval(z) {
        Ok((_, dv)) => dv - 1.0,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };

    let lo = if gamma_w < 1.0 {
        0.0
    } else if gamma_w == 1.0 {
        let mut z = 1.0;
        let mut found = None;
        for _ in 0..200 {
            let v = f(z);
            if v < 0.0 {
                found = Some(z);
                break;
            }
            z *= 0.5;
        }
        found.ok_or_else(|| Error::InfeasibleRegime("no point with f < 1 near zero".into()))?
    } else {
        if d_inf >= 1.0 {
            return Err(Error::InfeasibleRegime(format!(
                "divergence stays above one (limit {d_inf:.6}); penalty too small for gamma_w = {gamma_w}"
            )));
        }
        // D decreases from gamma_w > 1 at zero towards d_inf < 1.
        let mut hi = zeta_inf.max(1.0);
        let mut k = 0;
        while dm1(hi) >= 0.0 {
            hi *= 2.0;
            k += 1;
            if k > 60 {
                return Err(failure.take().unwrap_or(Error::InfeasibleRegime("divergence bracket".into())));
            }
        }
        let z0 = brent(dm1, 0.0, hi, xtol, max_iter)?.x;
        // Step just inside the valid side.
        let mut z0v = z0;
        for _ in 0..60 {
            if dm1(z0v) < 0.0 {
                break;
            }
            z0v = z0v * (1.0 + 1e-14) + 1e-300;
        }
        if f(z0v) < 0.0 {
            z0v
        } else {
            if z0v >= zeta_inf {
                return Err(Error::InfeasibleRegime("valid branch starts beyond the noise-only root".into()));
            }
            let n = 64;
            let (mut best_z, mut best_f) = (z0v, f(z0v));
            let step = (zeta_inf - z0v) / n as f64;
            for i in 1..n {
                let z = z0v + step * i as f64;
                let v = f(z);
                if v < best_f {
                    best_z = z;
                    best_f = v;
                }
            }
            if best_f >= 0.0 {
                let a = (best_z - step).max(z0v);
                let b = (best_z + step).min(zeta_inf);
                let (zm, fm) = golden_min(f, a, b, 1e-12, 200);
                if fm >= 0.0 {
                    if let Some(e) = failure.take() {
                        return Err(e);
                    }
                    return Err(Error::InfeasibleRegime(format!(
                        "fixed-point map stays above one on the valid branch (min {:.3e} at zeta {zm:.6})",
                        fm
                    )));
                }
                zm
            } else {
                best_z
            }
        }
    };
    if let Some(e) = failure.take() {
        return Err(e);
    }

    let mut hi = lo.max(1.0);
    let mut k = 0;
    while !(f(hi) > 0.0) {
        if let Some(e) = failure.take() {
            return Err(e);
        }
        hi *= 2.0;
        k += 1;
        if k > 60 {
            return Err(Error::InfeasibleRegime("zeta bracket exceeded 2^60".into()));
        }
    }
    let root = brent(f, lo, hi, xtol, max_iter).map_err(|e| match e {
        Error::NonFinite(_) => failure.take().unwrap_or(e),
        other => other,
    })?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(ZetaRoot { zeta: root.x, residual: root.fx.abs(), iterations: root.iterations, bracket: (lo, hi) })
}

/// P(|beta_bar| > lambda).
fn prior_tail(spec: &ProblemSpec, lambda: f64) -> f64 {
    spec.prior
        .components()
        .iter()
        .map(|c| {
            if c.var == 0.0 {
                if c.mean.abs() > lambda {
                    c.weight
                } else {
                    0.0
                }
            } else {
                let s = c.var.sqrt();
                c.weight * (crate::special::q_tail((lambda - c.mean) / s) + crate::special::q_tail((lambda + c.mean) / s))
            }
        })
        .sum()
}

/// Fixed point of the reference-panel lasso state evolution.
pub fn solve_ref_lasso_se(spec: &ProblemSpec, lambda: f64, opts: &SolverOptions) -> Result<ScalarSEFixedPoint> {
    require_identity(spec)?;
    check_lambda(lambda)?;
    let mom = Moments::new(spec, opts)?;
    let m2 = mom.m2();
    let (gx, gw, h2) = (spec.gamma_x, spec.gamma_w, spec.h2_x);
    let eval = |z: f64| -> Result<(f64, f64)> {
        let m = mom.at(z, lambda * z)?;
        Ok((gw * m.e2 + gx * z * z * m2 / h2 - 1.0, gw * m.d))
    };
    let zeta_inf = (h2 / (gx * m2)).sqrt();
    let root = solve_zeta(eval, gw, zeta_inf, gw * prior_tail(spec, lambda), opts.xtol, opts.max_iter)?;
    let zeta = root.zeta;
    let d = gw * mom.at(zeta, lambda * zeta)?.d;
    let b = d / (1.0 - d);
    if !(1.0 + b > 0.0) || !b.is_finite() {
        return Err(Error::InfeasibleRegime(format!("1 + b = {} at the fixed point", 1.0 + b)));
    }
    Ok(ScalarSEFixedPoint {
        zeta_star: zeta,
        b_star: b,
        tau_star: (1.0 + b) / zeta,
        alpha: lambda * zeta,
        iterations: root.iterations,
        residual: root.residual,
        bracket: root.bracket,
    })
}

/// MSE and out-of-sample R^2 of the reference-panel lasso at a solved fixed point.
pub fn ref_lasso_risk(spec: &ProblemSpec, lambda: f64, fp: &ScalarSEFixedPoint) -> Result<RiskReport> {
    ref_lasso_risk_with(spec, lambda, fp, &SolverOptions::default())
}

pub fn ref_lasso_risk_with(spec: &ProblemSpec, lambda: f64, fp: &ScalarSEFixedPoint, opts: &SolverOptions) -> Result<RiskReport> {
    let mom = Moments::new(spec, opts)?;
    let m2 = mom.m2();
    let m = mom.at(fp.zeta_star, fp.alpha)?;
    let tau = fp.tau_star;
    let mse = (tau * tau * m.e2 - 2.0 * tau * m.cross + m2).max(0.0);
    let r2 = if m.e2 > 0.0 { spec.h2_s * m.cross * m.cross / (m2 * m.e2) } else { 0.0 };
    Ok(RiskReport {
        estimator: Estimator::RefLasso,
        lambda,
        mse,
        r2,
        mse_se: 0.0,
        r2_se: 0.0,
        fixed_point: FixedPoint::Scalar(*fp),
    })
}

/// alpha_min for the reference-panel lasso: gamma_w M2(1, alpha) = 1, or
/// zero when gamma_w <= 1.
pub fn ref_lasso_alpha_min(spec: &ProblemSpec) -> Result<f64> {
    require_identity(spec)?;
    lasso_alpha_min(spec.gamma_w)
}

/// Root zeta(alpha) of f(zeta, alpha) = 1 at a fixed threshold. The map is
/// increasing in zeta, so the root is unique once alpha > alpha_min.
pub fn ref_lasso_zeta_of_alpha(spec: &ProblemSpec, alpha: f64, opts: &SolverOptions) -> Result<f64> {
    require_identity(spec)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::OutOfRange(alpha));
    }
    let mom = Moments::new(spec, opts)?;
    let m2 = mom.m2();
    let (gx, gw, h2) = (spec.gamma_x, spec.gamma_w, spec.h2_x);
    let failure = std::cell::Cell::new(None::<Error>);
    let f = |z: f64| match mom.at(z, alpha) {
        Ok(m) => gw * m.e2 + gx * z * z * m2 / h2 - 1.0,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    if !(f(0.0) < 0.0) {
        if let Some(e) = failure.take() {
            return Err(e);
        }
        return Err(Error::AlphaBelowMin { alpha, alpha_min: lasso_alpha_min(gw)? });
    }
    let zeta_inf = (h2 / (gx * m2)).sqrt();
    let r = brent(f, 0.0, zeta_inf, opts.xtol, opts.max_iter);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(r?.x)
}

/// lambda(alpha) = alpha / zeta(alpha); zero where the divergence reaches one.
pub fn ref_lasso_lambda_of_alpha(spec: &ProblemSpec, alpha: f64, opts: &SolverOptions) -> Result<f64> {
    let zeta = ref_lasso_zeta_of_alpha(spec, alpha, opts)?;
    let d = spec.gamma_w * Moments::new(spec, opts)?.at(zeta, alpha)?.d;
    if d >= 1.0 {
        return Ok(0.0);
    }
    Ok(alpha / zeta)
}

/// alpha(lambda) = lambda zeta*(lambda).
pub fn ref_lasso_calibrate_alpha(spec: &ProblemSpec, lambda: f64, opts: &SolverOptions) -> Result<f64> {
    Ok(solve_ref_lasso_se(spec, lambda, opts)?.alpha)
}

/// alpha_min for the plain lasso: the root of gamma_x M2(1, alpha) = 1, or
/// zero when gamma_x <= 1.
pub fn lasso_alpha_min(gamma_x: f64) -> Result<f64> {
    if gamma_x <= 1.0 {
        return Ok(0.0);
    }
    let g = |a: f64| gamma_x * soft_second_moment(1.0, a) - 1.0;
    let mut hi = 1.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    Ok(brent(g, 0.0, hi, 1e-15, 200)?.x)
}

/// Inner solve of the plain lasso at normalized threshold alpha: returns
/// (tau, d) with tau^2 = gamma_x sigma^2 + gamma_x E[eta(beta + tau z, alpha tau) - beta]^2.
fn lasso_tau_at_alpha(mom: &Moments<'_>, gx: f64, sigma2: f64, alpha: f64, opts: &SolverOptions) -> Result<(f64, f64)> {
    let m2 = mom.m2();
    let failure = std::cell::Cell::new(None::<Error>);
    let g = |t2: f64| {
        if t2 <= 0.0 {
            return gx * sigma2;
        }
        let tau = t2.sqrt();
        match mom.at(1.0 / tau, alpha) {
            Ok(m) => gx * sigma2 + gx * (t2 * m.e2 - 2.0 * tau * m.cross + m2) - t2,
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        }
    };
    let mut hi = (gx * (sigma2 + m2)).max(1e-300);
    let mut k = 0;
    while g(hi) >= 0.0 {
        hi *= 2.0;
        k += 1;
        if k > 200 {
            return Err(failure.take().unwrap_or(Error::AlphaBelowMin { alpha, alpha_min: lasso_alpha_min(gx)? }));
        }
    }
    let r = brent(g, 0.0, hi, opts.xtol * hi.max(1.0), opts.max_iter)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let tau = r.x.sqrt();
    let d = mom.at(1.0 / tau, alpha)?.d;
    Ok((tau, d))
}

/// lambda(alpha) = alpha tau (1 - gamma_x d) for the plain lasso.
pub fn lasso_lambda_of_alpha(spec: &ProblemSpec, alpha: f64, opts: &SolverOptions) -> Result<f64> {
    require_identity(spec)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::OutOfRange(alpha));
    }
    let amin = lasso_alpha_min(spec.gamma_x)?;
    if alpha <= amin {
        return Err(Error::AlphaBelowMin { alpha, alpha_min: amin });
    }
    let mom = Moments::new(spec, opts)?;
    let gx = spec.gamma_x;
    let (tau, d) = lasso_tau_at_alpha(&mom, gx, noise_variance(spec)?.x, alpha, opts)?;
    Ok(alpha * tau * (1.0 - gx * d))
}

/// Fixed point of the plain lasso state evolution.
///
/// Parametrized by the normalized threshold alpha = lambda (1 + b) / tau:
/// for fixed alpha the tau equation has a unique root, and lambda(alpha) is
/// increasing on alpha > alpha_min, so an outer root search in alpha
/// recovers the pair for a given lambda.
pub fn solve_lasso_se(spec: &ProblemSpec, lambda: f64, opts: &SolverOptions) -> Result<ScalarSEFixedPoint> {
    require_identity(spec)?;
    check_lambda(lambda)?;
    let mom = Moments::new(spec, opts)?;
    let gx = spec.gamma_x;
    let sigma2 = noise_variance(spec)?.x;
    let lam_of = |a: f64| -> Result<f64> {
        let (tau, d) = lasso_tau_at_alpha(&mom, gx, sigma2, a, opts)?;
        Ok(a * tau * (1.0 - gx * d))
    };
    let amin = lasso_alpha_min(gx)?;

    let mut lo = if gx < 1.0 { 0.0 } else { amin + 1e-3 };
    let mut ok = gx < 1.0;
    for _ in 0..80 {
        if ok {
            break;
        }
        match lam_of(lo) {
            Ok(l) if l < lambda => ok = true,
            _ => lo = amin + (lo - amin) * 0.5,
        }
    }
    if !ok {
        return Err(Error::BracketFailure { lo, hi: f64::NAN });
    }
    let mut hi = (2.0 * lo).max(1.0);
    let mut k = 0;
    while lam_of(hi)? <= lambda {
        hi *= 2.0;
        k += 1;
        if k > 60 {
            return Err(Error::BracketFailure { lo, hi });
        }
    }
    let failure = std::cell::Cell::new(None::<Error>);
    let h = |a: f64| match lam_of(a) {
        Ok(l) => l - lambda,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    let root = brent(h, lo, hi, opts.xtol, opts.max_iter)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let alpha = root.x;
    let (tau, d) = lasso_tau_at_alpha(&mom, gx, sigma2, alpha, opts)?;
    let one_b = 1.0 / (1.0 - gx * d);
    if !(one_b > 0.0) {
        return Err(Error::InfeasibleRegime(format!("1 - gamma_x d = {} at the fixed point", 1.0 - gx * d)));
    }
    let mut fp = ScalarSEFixedPoint {
        zeta_star: one_b / tau,
        b_star: one_b - 1.0,
        tau_star: tau,
        alpha,
        iterations: root.iterations,
        residual: 0.0,
        bracket: (lo, hi),
    };
    let (r1, r2) = lasso_residuals(spec, lambda, &fp, opts)?;
    fp.residual = r1.max(r2);
    Ok(fp)
}

/// Residuals of the two plain-lasso fixed-point equations at (tau, b),
/// evaluated at the threshold lambda (1 + b).
pub fn lasso_residuals(spec: &ProblemSpec, lambda: f64, fp: &ScalarSEFixedPoint, opts: &SolverOptions) -> Result<(f64, f64)> {
    let mom = Moments::new(spec, opts)?;
    let gx = spec.gamma_x;
    let sigma2 = noise_variance(spec)?.x;
    let tau = fp.tau_star;
    let a = lambda * (1.0 + fp.b_star) / tau;
    let m = mom.at(1.0 / tau, a)?;
    let mse = tau * tau * m.e2 - 2.0 * tau * m.cross + mom.m2();
    let r_tau = (tau * tau - gx * sigma2 - gx * mse).abs();
    let r_b = (1.0 / (1.0 + fp.b_star) - (1.0 - gx * m.d)).abs();
    Ok((r_tau, r_b))
}

/// Residuals of the reference-lasso fixed-point equations in (tau, b) form.
pub fn ref_lasso_residuals(spec: &ProblemSpec, lambda: f64, fp: &ScalarSEFixedPoint, opts: &SolverOptions) -> Result<(f64, f64)> {
    let mom = Moments::new(spec, opts)?;
    let (gx, gw) = (spec.gamma_x, spec.gamma_w);
    let (tau, b) = (fp.tau_star, fp.b_star);
    let zeta = (1.0 + b) / tau;
    let m = mom.at(zeta, lambda * zeta)?;
    let r_tau = (tau * tau - gw * tau * tau * m.e2 - gx * (1.0 + b).powi(2) * mom.m2() / spec.h2_x).abs() / (tau * tau);
    let r_b = (b - (1.0 + b) * gw * m.d).abs();
    Ok((r_tau, r_b))
}

/// MSE and out-of-sample R^2 of the plain lasso at a solved fixed point.
///
/// The R^2 numerator uses E[beta eta] = (m2 - R_L + E eta^2) / 2.
pub fn lasso_risk(spec: &ProblemSpec, lambda: f64, fp: &ScalarSEFixedPoint) -> Result<RiskReport> {
    lasso_risk_with(spec, lambda, fp, &SolverOptions::default())
}

pub fn lasso_risk_with(spec: &ProblemSpec, lambda: f64, fp: &ScalarSEFixedPoint, opts: &SolverOptions) -> Result<RiskReport> {
    let mom = Moments::new(spec, opts)?;
    let m2 = mom.m2();
    let sigma2 = noise_variance(spec)?.x;
    let tau = fp.tau_star;
    let mse = (tau * tau / spec.gamma_x - sigma2).max(0.0);
    // estimate is tau * eta(z + beta / tau; alpha)
    let m = mom.at(1.0 / tau, fp.alpha)?;
    let r2 = if m.e2 > 0.0 { spec.h2_s * m.cross * m.cross / (m2 * m.e2) } else { 0.0 };
    Ok(RiskReport {
        estimator: Estimator::Lasso,
        lambda,
        mse,
        r2,
        mse_se: 0.0,
        r2_se: 0.0,
        fixed_point: FixedPoint::Scalar(*fp),
    })
}

/// Quantity optimized by [`best_lambda`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    MinMse,
    MaxR2,
}

/// Theoretical risk of any of the four estimators under identity covariance
/// (ridge also under general covariance).
pub fn theory_risk(spec: &ProblemSpec, estimator: Estimator, lambda: f64, opts: &SolverOptions) -> Result<RiskReport> {
    match estimator {
        Estimator::Lasso => {
            let fp = solve_lasso_se(spec, lambda, opts)?;
            lasso_risk_with(spec, lambda, &fp, opts)
        }
        Estimator::RefLasso => {
            let fp = solve_ref_lasso_se(spec, lambda, opts)?;
            ref_lasso_risk_with(spec, lambda, &fp, opts)
        }
        Estimator::Ridge => {
            if spec.covariance.is_identity() {
                ridge::ridge_risk_iid(spec, lambda)
            } else {
                ridge::ridge_risk_general(spec, lambda)
            }
        }
        Estimator::RefRidge => {
            if spec.covariance.is_identity() {
                ridge::ref_ridge_risk_iid(spec, lambda)
            } else {
                let fp = ridge::solve_ref_ridge_se_general(spec, lambda)?;
                ridge::ref_ridge_risk_general(spec, lambda, &fp)
            }
        }
    }
}

/// Grid search over `grid` followed by a golden-section refinement in
/// log(lambda) between the neighbours of the best grid point.
///
/// Points where the theory fails (for instance infeasible regimes) are
/// skipped. Ties within 1e-12 go to the smallest lambda.
pub fn best_lambda(
    spec: &ProblemSpec,
    estimator: Estimator,
    objective: Objective,
    grid: &[f64],
) -> Result<(f64, RiskReport)> {
    let opts = SolverOptions::default();
    best_lambda_by(|l| theory_risk(spec, estimator, l, &opts), objective, grid)
}

pub fn best_lambda_by<F>(risk: F, objective: Objective, grid: &[f64]) -> Result<(f64, RiskReport)>
where
    F: Fn(f64) -> Result<RiskReport>,
{
    if grid.is_empty() {
        return Err(Error::InvalidSpec("empty lambda grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || !(grid[0] > 0.0) {
        return Err(Error::InvalidSpec("lambda grid must be positive and strictly increasing".into()));
    }
    let score = |r: &RiskReport| match objective {
        Objective::MinMse => r.mse,
        Objective::MaxR2 => -r.r2,
    };
    let mut best: Option<(usize, RiskReport)> = None;
    let mut last_err = None;
    for (i, &l) in grid.iter().enumerate() {
        match risk(l) {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some((_, b)) => score(&r) < score(b) - 1e-12,
                };
                if better {
                    best = Some((i, r));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (i, grid_best) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or(Error::InvalidSpec("empty lambda grid".into()))),
    };
    if grid.len() < 3 {
        return Ok((grid_best.lambda, grid_best));
    }
    let a = grid[i.saturating_sub(1)].ln();
    let b = grid[(i + 1).min(grid.len() - 1)].ln();
    let (x, _) = golden_min(|x| risk(x.exp()).map(|r| score(&r)).unwrap_or(f64::INFINITY), a, b, 1e-9, 200);
    match risk(x.exp()) {
        Ok(r) if score(&r) < score(&grid_best) - 1e-12 => Ok((r.lambda, r)),
        _ => Ok((grid_best.lambda, grid_best)),
    }
}

/// Log-spaced grid of `n` points on [lo, hi].
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
