//! Scalings between the appendix convention (O(1) coefficients, rows of
//! covariance Sigma / n, penalty lambda ||b||_1) and the main-text convention
//! (O(1/sqrt p) coefficients, rows of covariance Sigma, penalty
//! (lambda / sqrt p) ||b||_1).

use crate::spec::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AppendixToMainText,
    MainTextToAppendix,
}

/// Multiplicative factors applied to each quantity.
///
/// `lambda` maps the appendix penalty weight to the coefficient that
/// multiplies ||beta||_1 in the main-text objective, so lambda = 1 at
/// p = 10000 becomes 0.01.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRecord {
    pub beta0: f64,
    pub x: f64,
    pub w: f64,
    pub eps_x: f64,
    pub y_x: f64,
    pub lambda: f64,
}

impl ScalingRecord {
    pub fn compose(&self, other: &ScalingRecord) -> ScalingRecord {
        ScalingRecord {
            beta0: self.beta0 * other.beta0,
            x: self.x * other.x,
            w: self.w * other.w,
            eps_x: self.eps_x * other.eps_x,
            y_x: self.y_x * other.y_x,
            lambda: self.lambda * other.lambda,
        }
    }
}

/// Scaling factors at finite p with n_x = round(p / gamma_x) and
/// n_w = round(p / gamma_w).
pub fn convert_normalization(spec: &ProblemSpec, p: usize, direction: Direction) -> ScalingRecord {
    let pf = p as f64;
    let n_x = (pf / spec.gamma_x).round().max(1.0);
    let n_w = (pf / spec.gamma_w).round().max(1.0);
    let g = pf / n_x;
    let fwd = ScalingRecord {
        beta0: 1.0 / pf.sqrt(),
        x: n_x.sqrt(),
        w: n_w.sqrt(),
        eps_x: 1.0 / g.sqrt(),
        y_x: 1.0 / g.sqrt(),
        lambda: 1.0 / pf.sqrt(),
    };
    match direction {
        Direction::AppendixToMainText => fwd,
        Direction::MainTextToAppendix => ScalingRecord {
            beta0: 1.0 / fwd.beta0,
            x: 1.0 / fwd.x,
            w: 1.0 / fwd.w,
            eps_x: 1.0 / fwd.eps_x,
            y_x: 1.0 / fwd.y_x,
            lambda: 1.0 / fwd.lambda,
        },
    }
}
