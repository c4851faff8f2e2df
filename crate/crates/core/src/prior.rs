//! Scalar signal priors for the rescaled coefficients.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Law of a single rescaled coefficient.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalPrior {
    /// Point mass at zero with probability 1 - kappa, N(0, sigma_beta2) otherwise.
    BernoulliGaussian { kappa: f64, sigma_beta2: f64 },
    /// Finite list of (value, weight) atoms.
    DiscreteMixture { atoms: Vec<(f64, f64)> },
    /// Finite list of (weight, mean, variance) Gaussian components.
    GaussianMixture { components: Vec<(f64, f64, f64)> },
}

/// One mixture component; `var == 0` marks a Dirac atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

impl SignalPrior {
    pub fn bernoulli_gaussian(kappa: f64, sigma_beta2: f64) -> Result<Self> {
        let p = SignalPrior::BernoulliGaussian { kappa, sigma_beta2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SignalPrior::BernoulliGaussian { kappa, sigma_beta2 } => {
                if !(*kappa > 0.0 && *kappa <= 1.0) {
                    return Err(Error::InvalidPrior(format!("kappa = {kappa} not in (0, 1]")));
                }
                if !(*sigma_beta2 > 0.0 && sigma_beta2.is_finite()) {
                    return Err(Error::InvalidPrior(format!("sigma_beta2 = {sigma_beta2} not positive")));
                }
            }
            SignalPrior::DiscreteMixture { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidPrior("no atoms".into()));
                }
                if atoms.iter().any(|&(v, w)| !v.is_finite() || !(w >= 0.0)) {
                    return Err(Error::InvalidPrior("atom with negative weight or non-finite value".into()));
                }
                check_weights(atoms.iter().map(|a| a.1))?;
            }
            SignalPrior::GaussianMixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidPrior("no components".into()));
                }
                if components.iter().any(|&(w, m, v)| !(w >= 0.0) || !m.is_finite() || !(v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidPrior("component with invalid weight, mean or variance".into()));
                }
                check_weights(components.iter().map(|c| c.0))?;
            }
        }
        if !(self.second_moment() > 0.0) {
            return Err(Error::InvalidPrior("prior puts all mass at zero".into()));
        }
        Ok(())
    }

    /// Mixture representation: Dirac atoms and Gaussian components.
    pub fn components(&self) -> Vec<Component> {
        match self {
            SignalPrior::BernoulliGaussian { kappa, sigma_beta2 } => {
                let mut out = Vec::with_capacity(2);
                if *kappa < 1.0 {
                    out.push(Component { weight: 1.0 - kappa, mean: 0.0, var: 0.0 });
                }
                out.push(Component { weight: *kappa, mean: 0.0, var: *sigma_beta2 });
                out
            }
            SignalPrior::DiscreteMixture { atoms } => {
                atoms.iter().map(|&(v, w)| Component { weight: w, mean: v, var: 0.0 }).collect()
            }
            SignalPrior::GaussianMixture { components } => {
                components.iter().map(|&(w, m, v)| Component { weight: w, mean: m, var: v }).collect()
            }
        }
    }

    /// E beta_bar^2.
    pub fn second_moment(&self) -> f64 {
        match self {
            SignalPrior::BernoulliGaussian { kappa, sigma_beta2 } => kappa * sigma_beta2,
            _ => self.components().iter().map(|c| c.weight * (c.mean * c.mean + c.var)).sum(),
        }
    }

    /// Mean of the prior.
    pub fn mean(&self) -> f64 {
        self.components().iter().map(|c| c.weight * c.mean).sum()
    }

    /// Probability that a draw is exactly zero.
    pub fn mass_at_zero(&self) -> f64 {
        self.components().iter().filter(|c| c.var == 0.0 && c.mean == 0.0).map(|c| c.weight).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let comps = self.components();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = comps[comps.len() - 1];
        for c in &comps {
            acc += c.weight;
            if u < acc {
                pick = *c;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        pick.mean + pick.var.sqrt() * z
    }

    /// Draws a length-p vector of rescaled coefficients.
    ///
    /// Bernoulli-Gaussian draws use a support of exactly round(kappa p)
    /// positions chosen uniformly, matching the fixed count of nonzero signals
    /// in the data model. Other priors draw i.i.d.
    pub fn sample_vector<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> Vec<f64> {
        match self {
            SignalPrior::BernoulliGaussian { kappa, sigma_beta2 } => {
                let m = ((kappa * p as f64).round() as usize).clamp(1, p);
                let sd = sigma_beta2.sqrt();
                let mut out = vec![0.0; p];
                for j in rand::seq::index::sample(rng, p, m).into_iter() {
                    let z: f64 = StandardNormal.sample(rng);
                    out[j] = sd * z;
                }
                out
            }
            _ => (0..p).map(|_| self.sample(rng)).collect(),
        }
    }
}

fn check_weights<I: Iterator<Item = f64>>(w: I) -> Result<()> {
    let s: f64 = w.sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidPrior(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

/// E beta_bar^2 of a prior.
pub fn prior_second_moment(prior: &SignalPrior) -> f64 {
    prior.second_moment()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn second_moments() {
        let bg = SignalPrior::bernoulli_gaussian(0.05, 1.0).unwrap();
        assert_eq!(prior_second_moment(&bg), 0.05);
        let d = SignalPrior::DiscreteMixture { atoms: vec![(0.0, 0.5), (1.0, 0.5)] };
        assert!((prior_second_moment(&d) - 0.5).abs() < 1e-15);
        let g = SignalPrior::GaussianMixture { components: vec![(1.0, 0.0, 2.0)] };
        assert!((prior_second_moment(&g) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_priors() {
        assert!(SignalPrior::bernoulli_gaussian(0.0, 1.0).is_err());
        assert!(SignalPrior::bernoulli_gaussian(1.2, 1.0).is_err());
        let d = SignalPrior::DiscreteMixture { atoms: vec![(1.0, 0.4), (2.0, 0.4)] };
        assert!(d.validate().is_err());
    }

    #[test]
    fn bg_support_is_fixed_size() {
        let bg = SignalPrior::bernoulli_gaussian(0.05, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v = bg.sample_vector(2000, &mut rng);
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 100);
    }
}
