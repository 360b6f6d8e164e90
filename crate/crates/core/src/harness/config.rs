//! JSON configuration for the `fit` and `mc` commands.

use serde::{Deserialize, Serialize};

use super::knots::Exponent;
use super::HarnessError;
use crate::family::{Family, ResponseMechanism};
use crate::sabre::SabreConfig;

/// Schema version accepted by this build.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    LogisticMisclassified,
    InverseGaussian,
    NegativeBinomial,
    Custom,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::LogisticMisclassified => "logistic-misclassified",
            DesignKind::InverseGaussian => "inverse-gaussian",
            DesignKind::NegativeBinomial => "negative-binomial",
            DesignKind::Custom => "custom",
        }
    }
}

/// Tunables of the bias-correction iteration. The seed and thread count come
/// from the enclosing config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SabreSettings {
    pub h: usize,
    pub max_iter: usize,
    pub step: f64,
    pub tol: f64,
    pub warm_start: bool,
    pub max_failure_fraction: f64,
}

impl Default for SabreSettings {
    fn default() -> Self {
        let d = SabreConfig::default();
        Self {
            h: d.h,
            max_iter: d.max_iter,
            step: d.step,
            tol: d.tol,
            warm_start: d.warm_start,
            max_failure_fraction: d.max_failure_fraction,
        }
    }
}

impl SabreSettings {
    pub fn to_config(&self, master_seed: u64, threads: usize) -> SabreConfig {
        SabreConfig {
            h: self.h,
            max_iter: self.max_iter,
            step: self.step,
            tol: self.tol,
            master_seed,
            warm_start: self.warm_start,
            threads,
            max_failure_fraction: self.max_failure_fraction,
        }
    }
}

/// Covariate generators for custom designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Covariates {
    /// `x ~ N(0, Σ/p)` with `Σ_kl = rho^|k-l|`.
    GaussianAr1 { rho: f64 },
    /// Leading components Bernoulli with the given probabilities, the rest
    /// U(0, 1).
    BernoulliUniform { probs: Vec<f64> },
}

/// `m0(z) = amplitude · sin(frequency · z) + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFunction {
    #[serde(default = "one")]
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub offset: f64,
}

impl MeanFunction {
    pub fn eval(&self, z: f64) -> f64 {
        self.amplitude * (self.frequency * z).sin() + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomDesign {
    pub family: Family,
    pub covariates: Covariates,
    pub beta0: Vec<f64>,
    pub m0: MeanFunction,
    /// With a `delta_grid`, the false negative rate is `fnr_ratio · δ`.
    #[serde(default = "half")]
    pub fnr_ratio: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_level() -> f64 {
    0.95
}

fn default_smle_rule() -> Exponent {
    Exponent::Ratio { num: 1, den: 5 }
}

fn default_sabre_rule() -> Exponent {
    Exponent::Ratio { num: 4, den: 15 }
}

/// A Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub design: DesignKind,
    pub n: usize,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_grid: Option<Vec<f64>>,
    pub replications: usize,
    #[serde(default = "default_smle_rule")]
    pub n_rule_smle: Exponent,
    #[serde(default = "default_sabre_rule")]
    pub n_rule_sabre: Exponent,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; 0 uses the ambient pool.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub sabre: SabreSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomDesign>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.n < 2 || self.p == 0 {
            return bad(format!(
                "need n >= 2 and p >= 1, got n={} p={}",
                self.n, self.p
            ));
        }
        for grid in [&self.delta_grid, &self.phi_grid].into_iter().flatten() {
            if grid.is_empty() {
                return bad("grids must be nonempty".into());
            }
        }
        if let Some(g) = &self.delta_grid {
            if g.iter().any(|&d| !(0.0..0.5).contains(&d)) {
                return bad("delta_grid values must lie in [0, 0.5)".into());
            }
        }
        if let Some(g) = &self.phi_grid {
            if g.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return bad("phi_grid values must be positive".into());
            }
        }
        self.n_rule_smle.validate().map_err(HarnessError::Config)?;
        self.n_rule_sabre.validate().map_err(HarnessError::Config)?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        self.sabre
            .to_config(0, 0)
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.design == DesignKind::Custom && self.custom.is_none() {
            return bad("design 'custom' needs a 'custom' block".into());
        }
        if self.design != DesignKind::Custom && self.custom.is_some() {
            return bad("a 'custom' block is only allowed with design 'custom'".into());
        }
        super::designs::DesignSpec::from_config(self).map(|_| ())
    }
}

/// Fitting one CSV dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub version: u32,
    pub response: String,
    pub z: String,
    pub features: Vec<String>,
    pub family: Family,
    #[serde(default = "identity")]
    pub mechanism: ResponseMechanism,
    /// Interior knots for the sMLE; overrides `n_rule_smle`.
    #[serde(default)]
    pub n_interior_smle: Option<usize>,
    /// Interior knots for SABRE; overrides `n_rule_sabre`.
    #[serde(default)]
    pub n_interior_sabre: Option<usize>,
    #[serde(default = "default_smle_rule")]
    pub n_rule_smle: Exponent,
    #[serde(default = "default_sabre_rule")]
    pub n_rule_sabre: Exponent,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub sabre: SabreSettings,
}

fn identity() -> ResponseMechanism {
    ResponseMechanism::Identity
}

impl FitConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.version != CONFIG_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.features.is_empty() {
            return Err(HarnessError::Config(
                "at least one feature is required".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(HarnessError::Config(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        self.n_rule_smle.validate().map_err(HarnessError::Config)?;
        self.n_rule_sabre.validate().map_err(HarnessError::Config)?;
        crate::family::Model::new(self.family, self.mechanism)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.sabre
            .to_config(0, 0)
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"version":1,"design":"logistic-misclassified","n":100,"p":10,
                "delta_grid":[0.0,0.03],"replications":2}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_rule_smle, Exponent::Ratio { num: 1, den: 5 });
        assert_eq!(cfg.n_rule_sabre, Exponent::Ratio { num: 4, den: 15 });
        assert_eq!(cfg.level, 0.95);
        assert_eq!(cfg.sabre.h, 50);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"version":1,"design":"inverse-gaussian","n":100,"p":5,
                "phi_grid":[1.0],"replications":2,"colour":"red"}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = ExperimentConfig::from_json(
            r#"{"version":1,"design":"inverse-gaussian","n":100,"p":5,
                "phi_grid":[1.0],"replications":2,"sabre":{"hh":3}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("hh"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        let base = r#"{"version":1,"design":"inverse-gaussian","n":100,"p":5,"phi_grid":[1.0],"replications":2"#;
        for extra in [
            r#","n_rule_sabre":"1/2""#,
            r#","level":1.0"#,
            r#","sabre":{"h":0}"#,
        ] {
            let text = format!("{base}{extra}}}");
            assert!(ExperimentConfig::from_json(&text).is_err(), "{text}");
        }
        let text = base.replace("\"replications\":2", "\"replications\":0");
        assert!(ExperimentConfig::from_json(&format!("{text}}}")).is_err());
        let text = base.replace("\"version\":1", "\"version\":2");
        assert!(ExperimentConfig::from_json(&format!("{text}}}")).is_err());
        let text = base.replace("[1.0]", "[]");
        assert!(ExperimentConfig::from_json(&format!("{text}}}")).is_err());
    }
}
