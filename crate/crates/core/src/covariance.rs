//! Feature covariance models.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Population covariance of the feature rows.
///
/// `Spectrum` is a diagonal covariance with the given entries, which is the
/// covariance in its own eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceModel {
    Identity { p: usize },
    Spectrum { eigenvalues: Vec<f64> },
    DenseSPD { matrix: DMatrix<f64> },
}

/// Eigendecomposition Sigma = V diag(s) V^T.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub values: Vec<f64>,
    /// `None` when Sigma is diagonal in the coordinate basis.
    pub vectors: Option<DMatrix<f64>>,
}

impl CovarianceModel {
    pub fn dim(&self) -> usize {
        match self {
            CovarianceModel::Identity { p } => *p,
            CovarianceModel::Spectrum { eigenvalues } => eigenvalues.len(),
            CovarianceModel::DenseSPD { matrix } => matrix.nrows(),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            CovarianceModel::Identity { .. } => true,
            CovarianceModel::Spectrum { eigenvalues } => eigenvalues.iter().all(|&s| s == 1.0),
            CovarianceModel::DenseSPD { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CovarianceModel::Identity { p } => {
                if *p == 0 {
                    return Err(Error::InvalidCovariance("dimension 0".into()));
                }
            }
            CovarianceModel::Spectrum { eigenvalues } => {
                if eigenvalues.is_empty() {
                    return Err(Error::InvalidCovariance("empty spectrum".into()));
                }
                if eigenvalues.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(Error::InvalidCovariance("eigenvalues must be positive and finite".into()));
                }
            }
            CovarianceModel::DenseSPD { matrix } => {
                if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
                    return Err(Error::InvalidCovariance("matrix must be square".into()));
                }
                let asym = (matrix - matrix.transpose()).amax();
                if asym > 1e-10 {
                    return Err(Error::InvalidCovariance(format!("asymmetry {asym:e} above 1e-10")));
                }
                let min = self.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
                if !(min > 0.0) {
                    return Err(Error::InvalidCovariance("matrix is not positive definite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn spectral(&self) -> Spectral {
        match self {
            CovarianceModel::Identity { p } => Spectral { values: vec![1.0; *p], vectors: None },
            CovarianceModel::Spectrum { eigenvalues } => Spectral { values: eigenvalues.clone(), vectors: None },
            CovarianceModel::DenseSPD { matrix } => {
                let eig = SymmetricEigen::new(matrix.clone());
                Spectral { values: eig.eigenvalues.iter().cloned().collect(), vectors: Some(eig.eigenvectors) }
            }
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spectral().values
    }

    /// tr(Sigma) / p.
    pub fn mean_eigenvalue(&self) -> f64 {
        match self {
            CovarianceModel::Identity { .. } => 1.0,
            CovarianceModel::Spectrum { eigenvalues } => eigenvalues.iter().sum::<f64>() / eigenvalues.len() as f64,
            CovarianceModel::DenseSPD { matrix } => matrix.trace() / matrix.nrows() as f64,
        }
    }

    /// Dense p x p matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            CovarianceModel::Identity { p } => DMatrix::identity(*p, *p),
            CovarianceModel::Spectrum { eigenvalues } => DMatrix::from_diagonal(&DVector::from_vec(eigenvalues.clone())),
            CovarianceModel::DenseSPD { matrix } => matrix.clone(),
        }
    }

    /// Sigma^power as a dense matrix, through the eigendecomposition.
    pub fn matrix_power(&self, power: f64) -> DMatrix<f64> {
        let sp = self.spectral();
        let d: Vec<f64> = sp.values.iter().map(|s| s.powf(power)).collect();
        match sp.vectors {
            None => DMatrix::from_diagonal(&DVector::from_vec(d)),
            Some(v) => {
                let mut vd = v.clone();
                for (j, dj) in d.iter().enumerate() {
                    vd.column_mut(j).scale_mut(*dj);
                }
                &vd * v.transpose()
            }
        }
    }

    /// Sigma x.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            CovarianceModel::Identity { .. } => x.to_vec(),
            CovarianceModel::Spectrum { eigenvalues } => x.iter().zip(eigenvalues).map(|(a, s)| a * s).collect(),
            CovarianceModel::DenseSPD { matrix } => (matrix * DVector::from_column_slice(x)).iter().cloned().collect(),
        }
    }

    /// x^T Sigma y.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            CovarianceModel::Identity { .. } => dot(x, y),
            CovarianceModel::Spectrum { eigenvalues } => x.iter().zip(y).zip(eigenvalues).map(|((a, b), s)| a * b * s).sum(),
            CovarianceModel::DenseSPD { .. } => dot(x, &self.apply(y)),
        }
    }

    /// AR(1) correlation matrix rho^|i - j|.
    pub fn ar1(p: usize, rho: f64) -> Self {
        let m = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i64 - j as i64).unsigned_abs() as i32));
        CovarianceModel::DenseSPD { matrix: m }
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_dense_identity_agree() {
        let id = CovarianceModel::Identity { p: 4 };
        let dense = CovarianceModel::DenseSPD { matrix: DMatrix::identity(4, 4) };
        let x = [1.0, -2.0, 0.5, 3.0];
        assert!((id.inner(&x, &x) - dense.inner(&x, &x)).abs() < 1e-12);
        let e = dense.eigenvalues();
        assert!(e.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn validates() {
        assert!(CovarianceModel::Spectrum { eigenvalues: vec![1.0, -0.1] }.validate().is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(CovarianceModel::DenseSPD { matrix: bad }.validate().is_err());
        assert!(CovarianceModel::ar1(5, 0.5).validate().is_ok());
    }

    #[test]
    fn half_powers_multiply_back() {
        let c = CovarianceModel::ar1(6, 0.5);
        let h = c.matrix_power(0.5);
        let back = &h * &h;
        assert!((back - c.to_dense()).amax() < 1e-12);
    }
}
