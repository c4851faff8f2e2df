//! Risk theory, AMP recursions and finite-sample checks for lasso and ridge
//! estimators fitted from summary statistics with an external LD reference
//! panel.

pub mod amp;
pub mod covariance;
pub mod empirical;
pub mod error;
pub mod general_l1;
pub mod normalization;
pub mod prior;
pub mod quadrature;
pub mod report;
pub mod ridge;
pub mod roots;
pub mod scalar_l1;
pub mod seed;
pub mod spec;
pub mod special;

pub use covariance::CovarianceModel;
pub use error::{Error, Result};
pub use normalization::{convert_normalization, Direction, ScalingRecord};
pub use prior::SignalPrior;
pub use report::{Estimator, FixedPoint, GeneralSEFixedPoint, RidgeFixedPoint, RiskReport, ScalarSEFixedPoint};
pub use spec::{noise_variance, NoiseScales, ProblemSpec};
