//! Result records shared by the theory and simulation modules.

use std::fmt;

/// The four estimators compared throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Lasso,
    RefLasso,
    Ridge,
    RefRidge,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Lasso, Estimator::RefLasso, Estimator::Ridge, Estimator::RefRidge];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Lasso => "lasso",
            Estimator::RefLasso => "ref_lasso",
            Estimator::Ridge => "ridge",
            Estimator::RefRidge => "ref_ridge",
        }
    }

    pub fn parse(s: &str) -> Option<Estimator> {
        Estimator::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed point of a scalar (Sigma = I) lasso-type state evolution.
///
/// For the reference-panel lasso `alpha = lambda * zeta_star` is the
/// normalized threshold; for the plain lasso it is theta / tau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSEFixedPoint {
    pub zeta_star: f64,
    pub b_star: f64,
    pub tau_star: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Bracket (lower, upper) used by the final root search.
    pub bracket: (f64, f64),
}

/// Fixed point of the ridge state evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeFixedPoint {
    pub rho_star: f64,
    pub c_star: f64,
    pub lambda: f64,
}

/// Fixed point of the general-covariance lasso state evolution, estimated
/// with a fixed Monte Carlo sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralSEFixedPoint {
    pub tau_star: f64,
    pub b_star: f64,
    pub zeta_star: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub mc_reps: usize,
    pub seed: u64,
    pub residual: f64,
    /// Monte Carlo standard errors of zeta_star and tau_star^2.
    pub zeta_se: f64,
    pub tau2_se: f64,
    /// Set when the divergence equation was clamped at zero.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixedPoint {
    Scalar(ScalarSEFixedPoint),
    Ridge(RidgeFixedPoint),
    General(GeneralSEFixedPoint),
}

impl FixedPoint {
    /// (tau or rho, b or c) for tabulation.
    pub fn pair(&self) -> (f64, f64) {
        match self {
            FixedPoint::Scalar(f) => (f.tau_star, f.b_star),
            FixedPoint::Ridge(f) => (f.rho_star, f.c_star),
            FixedPoint::General(f) => (f.tau_star, f.b_star),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            FixedPoint::Scalar(f) => Some(f.alpha),
            FixedPoint::Ridge(_) => None,
            FixedPoint::General(f) => Some(f.alpha),
        }
    }
}

/// Theoretical MSE and out-of-sample R^2 at one tuning value.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub estimator: Estimator,
    pub lambda: f64,
    pub mse: f64,
    pub r2: f64,
    /// Monte Carlo standard errors, zero for exact evaluations.
    pub mse_se: f64,
    pub r2_se: f64,
    pub fixed_point: FixedPoint,
}
