//! Dimensionless problem specification and its key = value config format.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::prior::SignalPrior;

/// Asymptotic regime: aspect ratios p/n, heritabilities, prior and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub gamma_x: f64,
    pub gamma_w: f64,
    pub gamma_s: f64,
    pub h2_x: f64,
    pub h2_s: f64,
    pub prior: SignalPrior,
    pub covariance: CovarianceModel,
}

/// Noise variances of the training and test responses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScales {
    pub x: f64,
    pub s: f64,
}

impl ProblemSpec {
    /// Identity covariance, Bernoulli-Gaussian prior with sigma_beta2 = 1 and
    /// equal heritabilities.
    pub fn iid_bg(gamma_x: f64, gamma_w: f64, kappa: f64, h2: f64) -> Result<Self> {
        let s = ProblemSpec {
            gamma_x,
            gamma_w,
            gamma_s: gamma_x,
            h2_x: h2,
            h2_s: h2,
            prior: SignalPrior::BernoulliGaussian { kappa, sigma_beta2: 1.0 },
            covariance: CovarianceModel::Identity { p: 1 },
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("gamma_x", self.gamma_x), ("gamma_w", self.gamma_w), ("gamma_s", self.gamma_s)] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} = {g} must be positive")));
            }
        }
        for h in [self.h2_x, self.h2_s] {
            if !(h > 0.0 && h < 1.0) {
                return Err(Error::HeritabilityOutOfRange(h));
            }
        }
        self.prior.validate()?;
        self.covariance.validate()
    }

    /// E beta_bar^2.
    pub fn m2(&self) -> f64 {
        self.prior.second_moment()
    }

    /// Limit of E ||beta_0||^2_Sigma for an exchangeable prior.
    pub fn signal_norm(&self) -> f64 {
        self.m2() * self.covariance.mean_eigenvalue()
    }

    /// Copy with a different covariance.
    pub fn with_covariance(&self, covariance: CovarianceModel) -> Self {
        ProblemSpec { covariance, ..self.clone() }
    }

    /// Covariance resized to dimension p. Identity changes size; a spectrum is
    /// repeated cyclically. Dense matrices must already have dimension p.
    pub fn covariance_at(&self, p: usize) -> Result<CovarianceModel> {
        match &self.covariance {
            CovarianceModel::Identity { .. } => Ok(CovarianceModel::Identity { p }),
            CovarianceModel::Spectrum { eigenvalues } => {
                Ok(CovarianceModel::Spectrum { eigenvalues: (0..p).map(|j| eigenvalues[j % eigenvalues.len()]).collect() })
            }
            CovarianceModel::DenseSPD { matrix } => {
                if matrix.nrows() != p {
                    return Err(Error::InvalidCovariance(format!("dense covariance has dimension {}, need {p}", matrix.nrows())));
                }
                Ok(self.covariance.clone())
            }
        }
    }

    /// Serializes to the key = value config format.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "gamma_x = {}", self.gamma_x);
        let _ = writeln!(s, "gamma_w = {}", self.gamma_w);
        let _ = writeln!(s, "gamma_s = {}", self.gamma_s);
        let _ = writeln!(s, "h2_x = {}", self.h2_x);
        let _ = writeln!(s, "h2_s = {}", self.h2_s);
        match &self.prior {
            SignalPrior::BernoulliGaussian { kappa, sigma_beta2 } => {
                let _ = writeln!(s, "prior.kind = bernoulli_gaussian");
                let _ = writeln!(s, "prior.kappa = {kappa}");
                let _ = writeln!(s, "prior.sigma_beta2 = {sigma_beta2}");
            }
            SignalPrior::DiscreteMixture { atoms } => {
                let _ = writeln!(s, "prior.kind = discrete_mixture");
                let a: Vec<String> = atoms.iter().map(|(v, w)| format!("{v}:{w}")).collect();
                let _ = writeln!(s, "prior.atoms = {}", a.join(", "));
            }
            SignalPrior::GaussianMixture { components } => {
                let _ = writeln!(s, "prior.kind = gaussian_mixture");
                let a: Vec<String> = components.iter().map(|(w, m, v)| format!("{w}:{m}:{v}")).collect();
                let _ = writeln!(s, "prior.components = {}", a.join(", "));
            }
        }
        match &self.covariance {
            CovarianceModel::Identity { p } => {
                let _ = writeln!(s, "covariance.kind = identity");
                let _ = writeln!(s, "covariance.p = {p}");
            }
            CovarianceModel::Spectrum { eigenvalues } => {
                let _ = writeln!(s, "covariance.kind = spectrum");
                let e: Vec<String> = eigenvalues.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "covariance.eigenvalues = {}", e.join(", "));
            }
            CovarianceModel::DenseSPD { matrix } => {
                let _ = writeln!(s, "covariance.kind = dense");
                let _ = writeln!(s, "covariance.p = {}", matrix.nrows());
                let e: Vec<String> = matrix.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "covariance.matrix = {}", e.join(", "));
            }
        }
        s
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        ProblemSpec::from_kv(&parse_kv(text)?)
    }

    /// Builds a spec from parsed key/value pairs. Keys outside the spec
    /// namespace are ignored.
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let num = |k: &str| -> Result<f64> {
            let v = kv.get(k).ok_or_else(|| Error::ConfigParse(format!("missing key {k}")))?;
            parse_f64(k, v)
        };
        let gamma_x = num("gamma_x")?;
        let gamma_w = num("gamma_w")?;
        let gamma_s = match kv.get("gamma_s") {
            Some(v) => parse_f64("gamma_s", v)?,
            None => gamma_x,
        };
        let h2_x = num("h2_x")?;
        let h2_s = match kv.get("h2_s") {
            Some(v) => parse_f64("h2_s", v)?,
            None => h2_x,
        };
        let kind = kv.get("prior.kind").map(String::as_str).unwrap_or("bernoulli_gaussian");
        let prior = match kind {
            "bernoulli_gaussian" => SignalPrior::BernoulliGaussian {
                kappa: num("prior.kappa")?,
                sigma_beta2: match kv.get("prior.sigma_beta2") {
                    Some(v) => parse_f64("prior.sigma_beta2", v)?,
                    None => 1.0,
                },
            },
            "discrete_mixture" => {
                let items = parse_tuples(kv, "prior.atoms", 2)?;
                SignalPrior::DiscreteMixture { atoms: items.iter().map(|t| (t[0], t[1])).collect() }
            }
            "gaussian_mixture" => {
                let items = parse_tuples(kv, "prior.components", 3)?;
                SignalPrior::GaussianMixture { components: items.iter().map(|t| (t[0], t[1], t[2])).collect() }
            }
            other => return Err(Error::ConfigParse(format!("unknown prior.kind {other}"))),
        };
        let ckind = kv.get("covariance.kind").map(String::as_str).unwrap_or("identity");
        let dim = match kv.get("covariance.p") {
            Some(v) => Some(parse_f64("covariance.p", v)? as usize),
            None => None,
        };
        let covariance = match ckind {
            "identity" => CovarianceModel::Identity { p: dim.unwrap_or(1) },
            "spectrum" => {
                let v = kv.get("covariance.eigenvalues").ok_or_else(|| Error::ConfigParse("missing key covariance.eigenvalues".into()))?;
                CovarianceModel::Spectrum { eigenvalues: parse_list("covariance.eigenvalues", v)? }
            }
            "dense" | "ar1" => {
                let p = dim.ok_or_else(|| Error::ConfigParse("dense covariance needs covariance.p".into()))?;
                if let Some(r) = kv.get("covariance.ar1_rho") {
                    CovarianceModel::ar1(p, parse_f64("covariance.ar1_rho", r)?)
                } else {
                    let v = kv.get("covariance.matrix").ok_or_else(|| Error::ConfigParse("missing key covariance.matrix".into()))?;
                    let e = parse_list("covariance.matrix", v)?;
                    if e.len() != p * p {
                        return Err(Error::ConfigParse(format!("covariance.matrix has {} entries, need {}", e.len(), p * p)));
                    }
                    CovarianceModel::DenseSPD { matrix: DMatrix::from_column_slice(p, p, &e) }
                }
            }
            other => return Err(Error::ConfigParse(format!("unknown covariance.kind {other}"))),
        };
        let spec = ProblemSpec { gamma_x, gamma_w, gamma_s, h2_x, h2_s, prior, covariance };
        spec.validate().map_err(|e| Error::ConfigParse(e.to_string()))?;
        Ok(spec)
    }
}

/// Keys understood by [`ProblemSpec::from_kv`].
pub const SPEC_KEYS: &[&str] = &[
    "gamma_x",
    "gamma_w",
    "gamma_s",
    "h2_x",
    "h2_s",
    "prior.kind",
    "prior.kappa",
    "prior.sigma_beta2",
    "prior.atoms",
    "prior.components",
    "covariance.kind",
    "covariance.eigenvalues",
    "covariance.p",
    "covariance.ar1_rho",
    "covariance.matrix",
];

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::ConfigParse(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().to_string();
        if k.is_empty() {
            return Err(Error::ConfigParse(format!("line {}: empty key", i + 1)));
        }
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::ConfigParse(format!("line {}: duplicate key {k}", i + 1)));
        }
    }
    Ok(out)
}

pub fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::ConfigParse(format!("{key}: cannot parse {v:?} as a number")))
}

/// Comma-separated list of numbers.
pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let out: Result<Vec<f64>> = v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_f64(key, s)).collect();
    let out = out?;
    if out.is_empty() {
        return Err(Error::ConfigParse(format!("{key}: empty list")));
    }
    Ok(out)
}

fn parse_tuples(kv: &BTreeMap<String, String>, key: &str, n: usize) -> Result<Vec<Vec<f64>>> {
    let v = kv.get(key).ok_or_else(|| Error::ConfigParse(format!("missing key {key}")))?;
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let t: Result<Vec<f64>> = item.split(':').map(|s| parse_f64(key, s)).collect();
            let t = t?;
            if t.len() != n {
                return Err(Error::ConfigParse(format!("{key}: expected {n} fields in {item:?}")));
            }
            Ok(t)
        })
        .collect()
}

/// Noise variances sigma^2_eps = E||beta_0||^2_Sigma (1 - h^2) / h^2 for the
/// training and test responses.
pub fn noise_variance(spec: &ProblemSpec) -> Result<NoiseScales> {
    for h in [spec.h2_x, spec.h2_s] {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::HeritabilityOutOfRange(h));
        }
    }
    let e = spec.signal_norm();
    Ok(NoiseScales { x: e * (1.0 - spec.h2_x) / spec.h2_x, s: e * (1.0 - spec.h2_s) / spec.h2_s })
}
