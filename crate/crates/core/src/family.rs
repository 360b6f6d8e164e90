//! Response distributions `f{y | ν, φ}` indexed by the linear predictor `ν`.
//!
//! Each [`Family`] is an exponential-family law with a fixed link between
//! `ν` and the mean. A [`ResponseMechanism`] optionally composes a binary
//! family with known misclassification rates, in which case every quantity
//! here describes the *observed* response.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, NegativeBinomial, Poisson};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::rng::Stream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("linear predictor {nu} is outside the admissible domain of {family}")]
    DomainError { family: Family, nu: f64 },
    #[error("response {y} is outside the support of {family}")]
    SupportError { family: Family, y: f64 },
    #[error("dispersion must be positive and finite, got {0}")]
    InvalidDispersion(f64),
    #[error("invalid response mechanism: {0}")]
    InvalidMechanism(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "gaussian-identity")]
    Gaussian,
    #[serde(rename = "bernoulli-logit")]
    Bernoulli,
    #[serde(rename = "poisson-log")]
    Poisson,
    /// Mean `ν^{-1/2}`, shape `1/φ`.
    #[serde(rename = "inverse-gaussian")]
    InverseGaussian,
    /// Log link, variance `μ + φμ²`.
    #[serde(rename = "negative-binomial-log")]
    NegativeBinomial,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Gaussian,
        Family::Bernoulli,
        Family::Poisson,
        Family::InverseGaussian,
        Family::NegativeBinomial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian-identity",
            Family::Bernoulli => "bernoulli-logit",
            Family::Poisson => "poisson-log",
            Family::InverseGaussian => "inverse-gaussian",
            Family::NegativeBinomial => "negative-binomial-log",
        }
    }

    /// True when φ is fixed at one.
    pub fn dispersion_known(self) -> bool {
        matches!(self, Family::Bernoulli | Family::Poisson)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = FamilyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| FamilyError::InvalidMechanism(format!("unknown family '{s}'")))
    }
}

/// Maps the latent response to the observed one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResponseMechanism {
    Identity,
    /// Known false positive and false negative rates for a binary response.
    Misclassify {
        fpr: f64,
        fnr: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    family: Family,
    mechanism: ResponseMechanism,
}

fn logistic(nu: f64) -> f64 {
    if nu >= 0.0 {
        1.0 / (1.0 + (-nu).exp())
    } else {
        let e = nu.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn is_count(y: f64) -> bool {
    y >= 0.0 && y.fract() == 0.0 && y.is_finite()
}

impl Model {
    pub fn new(family: Family, mechanism: ResponseMechanism) -> Result<Self, FamilyError> {
        if let ResponseMechanism::Misclassify { fpr, fnr } = mechanism {
            if family != Family::Bernoulli {
                return Err(FamilyError::InvalidMechanism(format!(
                    "misclassification needs a binary family, got {family}"
                )));
            }
            let ok = |r: f64| (0.0..1.0).contains(&r);
            if !ok(fpr) || !ok(fnr) {
                return Err(FamilyError::InvalidMechanism(format!(
                    "rates must lie in [0, 1): fpr={fpr}, fnr={fnr}"
                )));
            }
            if fpr + fnr >= 1.0 {
                return Err(FamilyError::InvalidMechanism(format!(
                    "fpr + fnr must be below 1, got {}",
                    fpr + fnr
                )));
            }
        }
        Ok(Self { family, mechanism })
    }

    pub fn plain(family: Family) -> Self {
        Self {
            family,
            mechanism: ResponseMechanism::Identity,
        }
    }

    pub fn misclassified(fpr: f64, fnr: f64) -> Result<Self, FamilyError> {
        Self::new(
            Family::Bernoulli,
            ResponseMechanism::Misclassify { fpr, fnr },
        )
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mechanism(&self) -> ResponseMechanism {
        self.mechanism
    }

    pub fn dispersion_known(&self) -> bool {
        self.family.dispersion_known()
    }

    /// The fixed dispersion for families that do not estimate it.
    pub fn phi_fixed(&self) -> Option<f64> {
        self.dispersion_known().then_some(1.0)
    }

    /// Misclassification rates when they actually perturb the response.
    /// Zero rates fall through to the plain family so both paths agree
    /// bit for bit.
    fn rates(&self) -> Option<(f64, f64)> {
        match self.mechanism {
            ResponseMechanism::Misclassify { fpr, fnr } if fpr != 0.0 || fnr != 0.0 => {
                Some((fpr, fnr))
            }
            _ => None,
        }
    }

    /// Open lower bound on the linear predictor, if the family has one.
    pub fn nu_lower_bound(&self) -> Option<f64> {
        match self.family {
            Family::InverseGaussian => Some(0.0),
            _ => None,
        }
    }

    pub fn check_nu(&self, nu: f64) -> Result<(), FamilyError> {
        let ok = match self.family {
            Family::Bernoulli => !nu.is_nan(),
            Family::InverseGaussian => nu > 0.0 && nu.is_finite(),
            _ => nu.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(FamilyError::DomainError {
                family: self.family,
                nu,
            })
        }
    }

    pub fn check_y(&self, y: f64) -> Result<(), FamilyError> {
        let ok = match self.family {
            Family::Gaussian => y.is_finite(),
            Family::Bernoulli => y == 0.0 || y == 1.0,
            Family::Poisson | Family::NegativeBinomial => is_count(y),
            Family::InverseGaussian => y > 0.0 && y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(FamilyError::SupportError {
                family: self.family,
                y,
            })
        }
    }

    fn check_phi(phi: f64) -> Result<(), FamilyError> {
        if phi > 0.0 && phi.is_finite() {
            Ok(())
        } else {
            Err(FamilyError::InvalidDispersion(phi))
        }
    }

    /// Latent mean `g(ν)` and its derivative.
    fn latent_mean(&self, nu: f64) -> (f64, f64) {
        match self.family {
            Family::Gaussian => (nu, 1.0),
            Family::Bernoulli => {
                let p = logistic(nu);
                (p, p * (1.0 - p))
            }
            Family::Poisson | Family::NegativeBinomial => {
                let mu = nu.exp();
                (mu, mu)
            }
            Family::InverseGaussian => {
                let mu = 1.0 / nu.sqrt();
                (mu, -0.5 * mu * mu * mu)
            }
        }
    }

    /// Observed success probability `q(ν)` and `dq/dν` under misclassification.
    fn observed_prob(nu: f64, fpr: f64, fnr: f64) -> (f64, f64) {
        let p = logistic(nu);
        let c = 1.0 - fpr - fnr;
        (fpr + c * p, c * p * (1.0 - p))
    }

    /// `E(Y | ν)` of the observed response.
    pub fn mean(&self, nu: f64) -> Result<f64, FamilyError> {
        self.check_nu(nu)?;
        Ok(self.mean_unchecked(nu))
    }

    pub(crate) fn mean_unchecked(&self, nu: f64) -> f64 {
        match self.rates() {
            Some((fpr, fnr)) => Self::observed_prob(nu, fpr, fnr).0,
            None => self.latent_mean(nu).0,
        }
    }

    /// `var(Y | ν, φ)` of the observed response.
    pub fn variance(&self, nu: f64, phi: f64) -> Result<f64, FamilyError> {
        self.check_nu(nu)?;
        Self::check_phi(phi)?;
        Ok(self.variance_unchecked(nu, phi))
    }

    pub(crate) fn variance_unchecked(&self, nu: f64, phi: f64) -> f64 {
        if let Some((fpr, fnr)) = self.rates() {
            let q = Self::observed_prob(nu, fpr, fnr).0;
            return q * (1.0 - q);
        }
        match self.family {
            Family::Gaussian => phi,
            Family::Bernoulli => {
                let p = logistic(nu);
                p * (1.0 - p)
            }
            Family::Poisson => nu.exp(),
            Family::InverseGaussian => {
                let mu = 1.0 / nu.sqrt();
                phi * mu * mu * mu
            }
            Family::NegativeBinomial => {
                let mu = nu.exp();
                mu + phi * mu * mu
            }
        }
    }

    /// `∂ var(Y | ν, φ) / ∂φ`, zero for dispersion-free families.
    pub(crate) fn variance_dphi(&self, nu: f64) -> f64 {
        match self.family {
            Family::Gaussian => 1.0,
            Family::InverseGaussian => nu.powf(-1.5),
            Family::NegativeBinomial => (2.0 * nu).exp(),
            Family::Bernoulli | Family::Poisson => 0.0,
        }
    }

    /// Exact `log f(y | ν, φ)` including the normalising term.
    pub fn log_density(&self, y: f64, nu: f64, phi: f64) -> Result<f64, FamilyError> {
        self.check_nu(nu)?;
        self.check_y(y)?;
        Self::check_phi(phi)?;
        Ok(self.log_density_unchecked(y, nu, phi))
    }

    pub(crate) fn log_density_unchecked(&self, y: f64, nu: f64, phi: f64) -> f64 {
        if let Some((fpr, fnr)) = self.rates() {
            let q = Self::observed_prob(nu, fpr, fnr).0;
            return if y == 1.0 { q.ln() } else { (1.0 - q).ln() };
        }
        match self.family {
            Family::Gaussian => {
                let r = y - nu;
                -0.5 * (2.0 * PI * phi).ln() - r * r / (2.0 * phi)
            }
            Family::Bernoulli => y * nu - softplus(nu),
            Family::Poisson => y * nu - nu.exp() - ln_gamma(y + 1.0),
            Family::InverseGaussian => {
                -0.5 * (2.0 * PI * phi * y * y * y).ln()
                    - (y * nu - 2.0 * nu.sqrt() + 1.0 / y) / (2.0 * phi)
            }
            Family::NegativeBinomial => {
                let size = 1.0 / phi;
                let mu = nu.exp();
                let log_total = (size + mu).ln();
                ln_gamma(y + size) - ln_gamma(size) - ln_gamma(y + 1.0)
                    + size * (size.ln() - log_total)
                    + y * (nu - log_total)
            }
        }
    }

    /// `∂ log f(y | ν, φ) / ∂ν` in closed form.
    pub fn score_nu(&self, y: f64, nu: f64, phi: f64) -> Result<f64, FamilyError> {
        self.check_nu(nu)?;
        self.check_y(y)?;
        Self::check_phi(phi)?;
        Ok(self.score_unchecked(y, nu, phi))
    }

    pub(crate) fn score_unchecked(&self, y: f64, nu: f64, phi: f64) -> f64 {
        if let Some((fpr, fnr)) = self.rates() {
            let (q, dq) = Self::observed_prob(nu, fpr, fnr);
            return (y - q) / (q * (1.0 - q)) * dq;
        }
        match self.family {
            Family::Gaussian => (y - nu) / phi,
            Family::Bernoulli => y - logistic(nu),
            Family::Poisson => y - nu.exp(),
            Family::InverseGaussian => (1.0 / nu.sqrt() - y) / (2.0 * phi),
            Family::NegativeBinomial => {
                let mu = nu.exp();
                (y - mu) / (1.0 + phi * mu)
            }
        }
    }

    /// `∂² log f(y | ν, φ) / ∂ν²`.
    pub(crate) fn hessian_unchecked(&self, y: f64, nu: f64, phi: f64) -> f64 {
        if let Some((fpr, fnr)) = self.rates() {
            let p = logistic(nu);
            let c = 1.0 - fpr - fnr;
            let q = fpr + c * p;
            let dq = c * p * (1.0 - p);
            let d2q = dq * (1.0 - 2.0 * p);
            let v = q * (1.0 - q);
            return (-dq * dq + (y - q) * d2q) / v - (y - q) * dq * dq * (1.0 - 2.0 * q) / (v * v);
        }
        match self.family {
            Family::Gaussian => -1.0 / phi,
            Family::Bernoulli => {
                let p = logistic(nu);
                -p * (1.0 - p)
            }
            Family::Poisson => -nu.exp(),
            Family::InverseGaussian => -nu.powf(-1.5) / (4.0 * phi),
            Family::NegativeBinomial => {
                let mu = nu.exp();
                let d = 1.0 + phi * mu;
                -mu * (1.0 + phi * y) / (d * d)
            }
        }
    }

    /// Expected information `E[(∂ log f/∂ν)²] = (dμ/dν)² / var(Y)`.
    pub fn fisher_nu(&self, nu: f64, phi: f64) -> Result<f64, FamilyError> {
        self.check_nu(nu)?;
        Self::check_phi(phi)?;
        Ok(self.fisher_unchecked(nu, phi))
    }

    pub(crate) fn fisher_unchecked(&self, nu: f64, phi: f64) -> f64 {
        if let Some((fpr, fnr)) = self.rates() {
            let (q, dq) = Self::observed_prob(nu, fpr, fnr);
            return dq * dq / (q * (1.0 - q));
        }
        match self.family {
            Family::Gaussian => 1.0 / phi,
            Family::Bernoulli => {
                let p = logistic(nu);
                p * (1.0 - p)
            }
            Family::Poisson => nu.exp(),
            Family::InverseGaussian => nu.powf(-1.5) / (4.0 * phi),
            Family::NegativeBinomial => {
                let mu = nu.exp();
                mu / (1.0 + phi * mu)
            }
        }
    }

    /// Precision weight `φ · E[(∂ log f/∂ν)²]`; equals `b″(ν)` for
    /// canonical exponential families.
    pub fn precision_weight(&self, nu: f64, phi: f64) -> Result<f64, FamilyError> {
        Ok(phi * self.fisher_nu(nu, phi)?)
    }

    /// One exact draw of the observed response.
    pub fn sample(&self, nu: f64, phi: f64, stream: &mut Stream) -> Result<f64, FamilyError> {
        self.check_nu(nu)?;
        Self::check_phi(phi)?;
        Ok(self.sample_unchecked(nu, phi, stream))
    }

    pub(crate) fn sample_unchecked(&self, nu: f64, phi: f64, stream: &mut Stream) -> f64 {
        if let Some((fpr, fnr)) = self.rates() {
            let latent = stream.uniform() < logistic(nu);
            let flip = stream.uniform();
            let observed = if latent { flip >= fnr } else { flip < fpr };
            return if observed { 1.0 } else { 0.0 };
        }
        match self.family {
            Family::Gaussian => nu + phi.sqrt() * stream.standard_normal(),
            Family::Bernoulli => {
                if stream.uniform() < logistic(nu) {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Poisson => sample_poisson(nu.exp(), stream.uniform()),
            Family::InverseGaussian => sample_inverse_gaussian(1.0 / nu.sqrt(), 1.0 / phi, stream),
            Family::NegativeBinomial => sample_negative_binomial(nu.exp(), phi, stream.uniform()),
        }
    }

    /// Linear predictor used to start a fit from a single response value.
    pub(crate) fn starting_nu(&self, y: f64) -> f64 {
        match self.family {
            Family::Gaussian => y,
            Family::Bernoulli => {
                let mut prob = (y + 0.5) / 2.0;
                if let Some((fpr, fnr)) = self.rates() {
                    prob = (prob - fpr) / (1.0 - fpr - fnr);
                }
                let prob = prob.clamp(0.05, 0.95);
                (prob / (1.0 - prob)).ln()
            }
            Family::Poisson | Family::NegativeBinomial => (y.max(0.0) + 0.5).ln(),
            Family::InverseGaussian => {
                let mu = y.max(1e-6);
                1.0 / (mu * mu)
            }
        }
    }
}

/// Inversion sampler, monotone in the uniform.
fn sample_poisson(mu: f64, u: f64) -> f64 {
    let mut pmf = (-mu).exp();
    if pmf < 1e-280 {
        return Poisson::new(mu)
            .map(|d| d.inverse_cdf(u) as f64)
            .unwrap_or(mu.round());
    }
    let mut cdf = pmf;
    let mut k = 0u64;
    while u > cdf {
        k += 1;
        pmf *= mu / k as f64;
        cdf += pmf;
        if pmf < 1e-300 && k as f64 > mu {
            break;
        }
    }
    k as f64
}

fn sample_negative_binomial(mu: f64, phi: f64, u: f64) -> f64 {
    let size = 1.0 / phi;
    let ratio = mu / (size + mu);
    let mut pmf = (size * (size.ln() - (size + mu).ln())).exp();
    if pmf < 1e-280 {
        return NegativeBinomial::new(size, size / (size + mu))
            .map(|d| d.inverse_cdf(u) as f64)
            .unwrap_or(mu.round());
    }
    let mut cdf = pmf;
    let mut k = 0u64;
    while u > cdf {
        pmf *= (k as f64 + size) / (k as f64 + 1.0) * ratio;
        k += 1;
        cdf += pmf;
        if pmf < 1e-300 && k as f64 > mu {
            break;
        }
    }
    k as f64
}

/// Michael, Schucany and Haas transformation: one normal, one uniform.
fn sample_inverse_gaussian(mu: f64, shape: f64, stream: &mut Stream) -> f64 {
    let g = stream.standard_normal();
    let y = g * g;
    let x = mu + mu * mu * y / (2.0 * shape)
        - mu / (2.0 * shape) * (4.0 * mu * shape * y + mu * mu * y * y).sqrt();
    if stream.uniform() <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};
    use approx::assert_abs_diff_eq;

    fn stream(i: u64) -> Stream {
        StreamKey::new(42, Purpose::MonteCarlo, 0, i).stream()
    }

    #[test]
    fn means() {
        let bern = Model::plain(Family::Bernoulli);
        assert_eq!(bern.mean(0.0).unwrap(), 0.5);
        let mis = Model::misclassified(0.06, 0.03).unwrap();
        assert_abs_diff_eq!(mis.mean(60.0).unwrap(), 0.97, epsilon = 1e-15);
        let ig = Model::plain(Family::InverseGaussian);
        assert_eq!(ig.mean(4.0).unwrap(), 0.5);
        assert!(matches!(ig.mean(0.0), Err(FamilyError::DomainError { .. })));
    }

    #[test]
    fn log_densities() {
        let g = Model::plain(Family::Gaussian);
        assert_abs_diff_eq!(
            g.log_density(1.3, 1.3, 2.5).unwrap(),
            -0.5 * (2.0 * PI * 2.5).ln(),
            epsilon = 1e-15
        );
        let b = Model::plain(Family::Bernoulli);
        assert_abs_diff_eq!(
            b.log_density(1.0, 0.0, 1.0).unwrap(),
            0.5f64.ln(),
            epsilon = 1e-15
        );
        let p = Model::plain(Family::Poisson);
        assert_abs_diff_eq!(p.log_density(0.0, 0.0, 1.0).unwrap(), -1.0, epsilon = 1e-15);
        assert!(matches!(
            p.log_density(1.5, 0.0, 1.0),
            Err(FamilyError::SupportError { .. })
        ));
        assert!(matches!(
            b.log_density(2.0, 0.0, 1.0),
            Err(FamilyError::SupportError { .. })
        ));
    }

    #[test]
    fn densities_normalise() {
        // Discrete families sum to one; the inverse Gaussian integrates to one.
        let nb = Model::plain(Family::NegativeBinomial);
        let total: f64 = (0..2000)
            .map(|k| nb.log_density(k as f64, 1.2, 0.7).unwrap().exp())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        let ig = Model::plain(Family::InverseGaussian);
        let h = 1e-4;
        let total: f64 = (1..400_000)
            .map(|i| ig.log_density(i as f64 * h, 3.0, 0.8).unwrap().exp() * h)
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn scores() {
        let g = Model::plain(Family::Gaussian);
        assert_eq!(g.score_nu(2.0, 1.0, 1.0).unwrap(), 1.0);
        let b = Model::plain(Family::Bernoulli);
        assert_eq!(b.score_nu(1.0, 0.0, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn variances() {
        assert_eq!(
            Model::plain(Family::Bernoulli).variance(0.0, 1.0).unwrap(),
            0.25
        );
        assert_eq!(
            Model::plain(Family::NegativeBinomial)
                .variance(0.0, 2.0)
                .unwrap(),
            3.0
        );
        assert_eq!(
            Model::plain(Family::Gaussian).variance(-4.0, 1.7).unwrap(),
            1.7
        );
        assert!(matches!(
            Model::plain(Family::Gaussian).variance(0.0, 0.0),
            Err(FamilyError::InvalidDispersion(_))
        ));
    }

    #[test]
    fn mechanism_validation() {
        assert!(Model::misclassified(0.6, 0.4).is_err());
        assert!(Model::misclassified(0.97, 0.03).is_err());
        assert!(Model::misclassified(-0.1, 0.0).is_err());
        assert!(Model::new(
            Family::Poisson,
            ResponseMechanism::Misclassify { fpr: 0.1, fnr: 0.0 }
        )
        .is_err());
        assert!(Model::misclassified(0.06, 0.03).is_ok());
    }

    #[test]
    fn certain_failure_never_samples_one() {
        let b = Model::plain(Family::Bernoulli);
        for i in 0..100 {
            assert_eq!(
                b.sample(f64::NEG_INFINITY, 1.0, &mut stream(i)).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn zero_rates_match_plain_bernoulli_bitwise() {
        let plain = Model::plain(Family::Bernoulli);
        let mis = Model::misclassified(0.0, 0.0).unwrap();
        for i in 0..200 {
            let nu = -4.0 + 0.04 * i as f64;
            let y = (i % 2) as f64;
            assert_eq!(plain.mean(nu), mis.mean(nu));
            assert_eq!(plain.variance(nu, 1.0), mis.variance(nu, 1.0));
            assert_eq!(
                plain.log_density(y, nu, 1.0).unwrap().to_bits(),
                mis.log_density(y, nu, 1.0).unwrap().to_bits()
            );
            assert_eq!(
                plain.score_nu(y, nu, 1.0).unwrap().to_bits(),
                mis.score_nu(y, nu, 1.0).unwrap().to_bits()
            );
            assert_eq!(
                plain.sample(nu, 1.0, &mut stream(i)),
                mis.sample(nu, 1.0, &mut stream(i))
            );
        }
    }

    #[test]
    fn inverse_gaussian_sample_mean() {
        // Mean 1/2, variance φμ³ = 1/8; the sample mean should sit within
        // three standard errors of 1/2.
        let ig = Model::plain(Family::InverseGaussian);
        let draws = 100_000;
        let mean: f64 = (0..draws)
            .map(|i| ig.sample(4.0, 1.0, &mut stream(i)).unwrap())
            .sum::<f64>()
            / draws as f64;
        let se = (0.125f64 / draws as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn inverse_gaussian_log_density_matches_textbook_form() {
        let ig = Model::plain(Family::InverseGaussian);
        let (y, nu, phi) = (0.7f64, 2.3f64, 1.4f64);
        let mu = 1.0 / nu.sqrt();
        let shape = 1.0 / phi;
        let textbook = 0.5 * (shape / (2.0 * PI * y.powi(3))).ln()
            - shape * (y - mu).powi(2) / (2.0 * mu * mu * y);
        assert_abs_diff_eq!(
            ig.log_density(y, nu, phi).unwrap(),
            textbook,
            epsilon = 1e-13
        );
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!("logit".parse::<Family>().is_err());
    }
}
