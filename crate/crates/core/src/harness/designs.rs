//! Data-generating designs for the Monte Carlo studies.

use nalgebra::DMatrix;

use super::config::{Covariates, DesignKind, ExperimentConfig, MeanFunction};
use super::HarnessError;
use crate::family::{Family, FamilyError, Model};
use crate::rng::{Purpose, Stream, StreamKey};

/// The varying parameter of a study.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    /// Misclassification level δ: false positive rate δ, false negative
    /// rate `fnr_ratio · δ`.
    Delta { values: Vec<f64>, fnr_ratio: f64 },
    /// True dispersion φ0.
    Phi(Vec<f64>),
    /// One point, no varying parameter; recorded as grid value 0.
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub family: Family,
    pub covariates: Covariates,
    pub beta0: Vec<f64>,
    pub m0: MeanFunction,
    pub grid: Grid,
}

/// `head` followed by `tail` repeated, cut to length `p`.
fn pattern(head: &[f64], tail: [f64; 2], p: usize) -> Vec<f64> {
    head.iter()
        .copied()
        .chain(tail.iter().copied().cycle())
        .take(p)
        .collect()
}

impl DesignSpec {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let p = cfg.p;
        let delta = |fnr_ratio: f64| -> Result<Grid, HarnessError> {
            if cfg.phi_grid.is_some() {
                return Err(HarnessError::Config(format!(
                    "design '{}' takes delta_grid, not phi_grid",
                    cfg.design.name()
                )));
            }
            match &cfg.delta_grid {
                Some(values) => Ok(Grid::Delta {
                    values: values.clone(),
                    fnr_ratio,
                }),
                None => Err(HarnessError::Config(format!(
                    "design '{}' needs delta_grid",
                    cfg.design.name()
                ))),
            }
        };
        let phi = || -> Result<Grid, HarnessError> {
            if cfg.delta_grid.is_some() {
                return Err(HarnessError::Config(format!(
                    "delta_grid is only meaningful for binary responses (design '{}')",
                    cfg.design.name()
                )));
            }
            cfg.phi_grid.clone().map(Grid::Phi).ok_or_else(|| {
                HarnessError::Config(format!("design '{}' needs phi_grid", cfg.design.name()))
            })
        };
        let spec = match cfg.design {
            DesignKind::LogisticMisclassified => DesignSpec {
                kind: cfg.design,
                family: Family::Bernoulli,
                covariates: Covariates::GaussianAr1 { rho: 0.5 },
                beta0: pattern(
                    &[-2.0, -2.0, -2.0, -2.0, 4.0, 4.0, 4.0, 4.0],
                    [0.2, -0.2],
                    p,
                ),
                m0: MeanFunction {
                    amplitude: 1.0,
                    frequency: 5.0,
                    offset: 0.0,
                },
                grid: delta(0.5)?,
            },
            DesignKind::InverseGaussian => DesignSpec {
                kind: cfg.design,
                family: Family::InverseGaussian,
                covariates: Covariates::BernoulliUniform {
                    probs: [0.5, 0.25].into_iter().take(p).collect(),
                },
                beta0: pattern(&[2.0, -1.0, -1.0, -1.0], [0.1, -0.1], p),
                m0: MeanFunction {
                    amplitude: 1.0,
                    frequency: 5.0,
                    offset: 10.0,
                },
                grid: phi()?,
            },
            DesignKind::NegativeBinomial => DesignSpec {
                kind: cfg.design,
                family: Family::NegativeBinomial,
                covariates: Covariates::BernoulliUniform {
                    probs: vec![0.5; p.min(1)],
                },
                beta0: pattern(&[0.5, -0.5, 0.5, -0.5], [0.1, -0.1], p),
                m0: MeanFunction {
                    amplitude: 1.0,
                    frequency: 5.0,
                    offset: 1.0,
                },
                grid: phi()?,
            },
            DesignKind::Custom => {
                let c = cfg.custom.as_ref().ok_or_else(|| {
                    HarnessError::Config("design 'custom' needs a 'custom' block".into())
                })?;
                if c.beta0.len() != p {
                    return Err(HarnessError::Config(format!(
                        "custom beta0 has length {}, expected p = {p}",
                        c.beta0.len()
                    )));
                }
                let grid = match c.family {
                    Family::Bernoulli if cfg.delta_grid.is_some() => delta(c.fnr_ratio)?,
                    Family::Bernoulli | Family::Poisson => {
                        if cfg.delta_grid.is_some() || cfg.phi_grid.is_some() {
                            return Err(HarnessError::Config(format!(
                                "family {} takes no phi_grid",
                                c.family
                            )));
                        }
                        Grid::Single
                    }
                    _ => phi()?,
                };
                DesignSpec {
                    kind: cfg.design,
                    family: c.family,
                    covariates: c.covariates.clone(),
                    beta0: c.beta0.clone(),
                    m0: c.m0.clone(),
                    grid,
                }
            }
        };
        spec.validate(p)?;
        Ok(spec)
    }

    fn validate(&self, p: usize) -> Result<(), HarnessError> {
        match &self.covariates {
            Covariates::GaussianAr1 { rho } if rho.is_nan() || rho.abs() >= 1.0 => {
                return Err(HarnessError::Config(format!(
                    "rho must lie in (-1, 1), got {rho}"
                )));
            }
            Covariates::BernoulliUniform { probs }
                if probs.len() > p || probs.iter().any(|q| !(0.0..=1.0).contains(q)) =>
            {
                return Err(HarnessError::Config(
                    "probs must be at most p probabilities".into(),
                ));
            }
            _ => {}
        }
        if let Grid::Delta { fnr_ratio, .. } = self.grid {
            if !(fnr_ratio >= 0.0 && fnr_ratio.is_finite()) {
                return Err(HarnessError::Config("fnr_ratio must be nonnegative".into()));
            }
        }
        for g in self.grid_values() {
            self.model_at(g)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn grid_values(&self) -> Vec<f64> {
        match &self.grid {
            Grid::Delta { values, .. } | Grid::Phi(values) => values.clone(),
            Grid::Single => vec![0.0],
        }
    }

    /// The observed-response model and true dispersion at a grid value.
    pub fn model_at(&self, value: f64) -> Result<(Model, f64), FamilyError> {
        match self.grid {
            Grid::Delta { fnr_ratio, .. } => {
                Ok((Model::misclassified(value, fnr_ratio * value)?, 1.0))
            }
            Grid::Phi(_) => Ok((Model::plain(self.family), value)),
            Grid::Single => Ok((Model::plain(self.family), 1.0)),
        }
    }

    /// Truths in target order: β0 components, then φ0 when φ is estimated.
    pub fn truths(&self, value: f64, model: &Model) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .beta0
            .iter()
            .enumerate()
            .map(|(j, &b)| (format!("beta{}", j + 1), b))
            .collect();
        if !model.dispersion_known() {
            out.push(("phi".into(), value));
        }
        out
    }

    /// Covariates for replication `r`. Observation `i` draws from the
    /// stream `(master_seed, mc, r, i)`; its response is drawn later from
    /// the same stream, so every grid point sees the same latent uniforms.
    pub fn generate(&self, n: usize, master_seed: u64, replication: u64) -> ReplicationData {
        let p = self.beta0.len();
        let mut x = DMatrix::zeros(n, p);
        let mut z = Vec::with_capacity(n);
        let mut streams = Vec::with_capacity(n);
        let mut nu = Vec::with_capacity(n);
        for i in 0..n {
            let mut s =
                StreamKey::new(master_seed, Purpose::MonteCarlo, replication, i as u64).stream();
            match &self.covariates {
                Covariates::GaussianAr1 { rho } => {
                    let scale = (p as f64).sqrt().recip();
                    let innovation = (1.0 - rho * rho).sqrt();
                    let mut prev = s.standard_normal();
                    x[(i, 0)] = scale * prev;
                    for j in 1..p {
                        prev = rho * prev + innovation * s.standard_normal();
                        x[(i, j)] = scale * prev;
                    }
                }
                Covariates::BernoulliUniform { probs } => {
                    for j in 0..p {
                        let u = s.uniform();
                        x[(i, j)] = match probs.get(j) {
                            Some(&q) => f64::from(u8::from(u < q)),
                            None => u,
                        };
                    }
                }
            }
            let zi = s.uniform();
            let lin: f64 = (0..p).map(|j| x[(i, j)] * self.beta0[j]).sum();
            nu.push(lin + self.m0.eval(zi));
            z.push(zi);
            streams.push(s);
        }
        ReplicationData { x, z, nu, streams }
    }
}

/// Covariates of one replication and the stream positions its responses
/// are drawn from.
#[derive(Debug, Clone)]
pub struct ReplicationData {
    pub x: DMatrix<f64>,
    pub z: Vec<f64>,
    /// True linear predictor `x_iᵀβ0 + m0(z_i)`.
    pub nu: Vec<f64>,
    streams: Vec<Stream>,
}

impl ReplicationData {
    pub fn responses(&self, model: &Model, phi0: f64) -> Result<Vec<f64>, FamilyError> {
        self.nu
            .iter()
            .zip(&self.streams)
            .map(|(&nu, s)| model.sample(nu, phi0, &mut s.clone()))
            .collect()
    }
}
