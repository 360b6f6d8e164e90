//! Fitting both estimators to a CSV dataset.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::FitConfig;
use super::knots::knot_count;
use super::HarnessError;
use crate::family::{Family, Model, ResponseMechanism};
use crate::inference::{
    beta_covariance, gamma_covariance, m_pointwise_ci, wald_ci, wald_p_value, CovarianceFactors,
};
use crate::sabre::{fit_sabre, SabreError};
use crate::smle::{fit_smle, Dataset, Design, FitError, FitInit, FitOptions};
use crate::spline::{SplineBasis, DEFAULT_ORDER};

const CURVE_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientReport {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub p_value: f64,
}

/// `m̂` with pointwise bands on an even grid of the rescaled `z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReport {
    pub z: Vec<f64>,
    /// The grid mapped back to the original `z` scale.
    pub z_original: Vec<f64>,
    pub m: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub n_interior: usize,
    pub converged: bool,
    pub iterations: usize,
    pub coefficients: Vec<CoefficientReport>,
    pub phi: f64,
    pub m: CurveReport,
    /// Fixed-point residual; SABRE only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_at_boundary: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub n: usize,
    pub family: Family,
    pub mechanism: ResponseMechanism,
    pub level: f64,
    pub response: String,
    pub z: String,
    pub z_range: (f64, f64),
    pub smle: EstimatorReport,
    pub sabre: EstimatorReport,
}

/// Reads the configured columns and min-max rescales `z` to `[0, 1]`.
pub(crate) fn load_dataset<R: Read>(
    input: R,
    cfg: &FitConfig,
) -> Result<(Dataset, (f64, f64)), HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::Parse {
                row: 1,
                column: name.to_string(),
                message: "column not found in header".into(),
            })
    };
    let y_col = column(&cfg.response)?;
    let z_col = column(&cfg.z)?;
    let x_cols = cfg
        .features
        .iter()
        .map(|f| column(f))
        .collect::<Result<Vec<_>, _>>()?;

    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut x = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = i + 2;
        let record = record?;
        let field = |col: usize| -> Result<f64, HarnessError> {
            let name = &headers[col];
            let raw = record.get(col).ok_or_else(|| HarnessError::Parse {
                row,
                column: name.to_string(),
                message: "missing field".into(),
            })?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| HarnessError::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("'{raw}' is not a finite number"),
                })
        };
        y.push(field(y_col)?);
        z.push(field(z_col)?);
        for &c in &x_cols {
            x.push(field(c)?);
        }
    }
    let n = y.len();
    if n < 2 {
        return Err(HarnessError::Parse {
            row: n + 1,
            column: cfg.response.clone(),
            message: "need at least two data rows".into(),
        });
    }
    let (lo, hi) = z
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if hi <= lo {
        return Err(HarnessError::Parse {
            row: 2,
            column: cfg.z.clone(),
            message: "z column is constant".into(),
        });
    }
    let z = z
        .into_iter()
        .map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect();
    let x = DMatrix::from_row_slice(n, x_cols.len(), &x);
    Ok((Dataset::new(x, z, y)?, (lo, hi)))
}

fn column_names(cfg: &FitConfig, columns: &[usize]) -> Vec<String> {
    columns
        .iter()
        .map(|&c| match cfg.features.get(c) {
            Some(name) => name.clone(),
            None => format!("spline basis {}", c - cfg.features.len() + 1),
        })
        .collect()
}

struct Fitted {
    gamma: Vec<f64>,
    phi: f64,
}

fn report(
    cfg: &FitConfig,
    data: &Dataset,
    basis: &SplineBasis,
    model: &Model,
    fitted: &Fitted,
    z_range: (f64, f64),
) -> Result<EstimatorReport, HarnessError> {
    let design = Design::new(basis, &data.x, &data.z)?;
    let factors = CovarianceFactors::new(&design, model, &fitted.gamma, fitted.phi)?;
    let cov_beta = beta_covariance(&factors)?;
    let cov_gamma = gamma_covariance(&factors)?;
    let p = data.p();
    let coefficients = cfg
        .features
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = fitted.gamma[j];
            let se = cov_beta[(j, j)].max(0.0).sqrt();
            let (ci_lo, ci_hi) = wald_ci(estimate, se, cfg.level)?;
            Ok(CoefficientReport {
                name: name.clone(),
                estimate,
                se,
                ci_lo,
                ci_hi,
                p_value: wald_p_value(estimate, se),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let k = basis.len();
    let cov_alpha = cov_gamma.view((p, p), (k, k)).into_owned();
    let alpha = &fitted.gamma[p..];
    let mut curve = CurveReport {
        z: Vec::with_capacity(CURVE_POINTS),
        z_original: Vec::with_capacity(CURVE_POINTS),
        m: Vec::with_capacity(CURVE_POINTS),
        lo: Vec::with_capacity(CURVE_POINTS),
        hi: Vec::with_capacity(CURVE_POINTS),
    };
    for i in 0..CURVE_POINTS {
        let z = i as f64 / (CURVE_POINTS - 1) as f64;
        let (m, lo, hi) = m_pointwise_ci(alpha, &cov_alpha, basis, z, cfg.level)?;
        curve.z.push(z);
        curve
            .z_original
            .push(z_range.0 + z * (z_range.1 - z_range.0));
        curve.m.push(m);
        curve.lo.push(lo);
        curve.hi.push(hi);
    }
    Ok(EstimatorReport {
        n_interior: basis.interior_knots().len(),
        converged: true,
        iterations: 0,
        coefficients,
        phi: fitted.phi,
        m: curve,
        residual: None,
        dropped_replicates: None,
        phi_at_boundary: None,
    })
}

/// Fits the sMLE and SABRE to the CSV at `path`.
pub fn run_fit(path: &Path, cfg: &FitConfig) -> Result<FitReport, HarnessError> {
    let file = std::fs::File::open(path)?;
    fit_reader(file, cfg)
}

/// [`run_fit`] on any reader.
pub fn fit_reader<R: Read>(input: R, cfg: &FitConfig) -> Result<FitReport, HarnessError> {
    cfg.validate()?;
    let model =
        Model::new(cfg.family, cfg.mechanism).map_err(|e| HarnessError::Config(e.to_string()))?;
    let (data, z_range) = load_dataset(input, cfg)?;
    for &y in &data.y {
        if let Err(e) = model.check_y(y) {
            return Err(HarnessError::Fit(e.into()));
        }
    }
    let n = data.n() as u64;
    let n_smle = cfg
        .n_interior_smle
        .unwrap_or_else(|| knot_count(n, cfg.n_rule_smle));
    let n_sabre = cfg
        .n_interior_sabre
        .unwrap_or_else(|| knot_count(n, cfg.n_rule_sabre));
    let basis_smle = SplineBasis::from_quantiles(&data.z, n_smle, DEFAULT_ORDER)?;
    let basis_sabre = SplineBasis::from_quantiles(&data.z, n_sabre, DEFAULT_ORDER)?;
    let singular = |e: FitError| match e {
        FitError::SingularHessian { columns } => HarnessError::SingularDesign {
            columns: column_names(cfg, &columns),
        },
        other => HarnessError::Fit(other),
    };

    let smle = fit_smle(
        &data,
        &basis_smle,
        &model,
        &FitInit::default(),
        &FitOptions::default(),
    )
    .map_err(singular)?;
    let mut smle_report = report(
        cfg,
        &data,
        &basis_smle,
        &model,
        &Fitted {
            gamma: smle.gamma(),
            phi: smle.phi,
        },
        z_range,
    )?;
    smle_report.converged = smle.converged;
    smle_report.iterations = smle.iterations;

    let sabre_cfg = cfg.sabre.to_config(cfg.master_seed, cfg.threads);
    let sabre = match fit_sabre(&data, &basis_sabre, &model, &sabre_cfg) {
        Ok(res) => res,
        Err(SabreError::NonConvergence(res)) => {
            log::warn!(
                "SABRE stopped after {} iterations without converging (residual {:e})",
                res.iterations,
                res.residual
            );
            *res
        }
        Err(SabreError::SmleFailed(e)) => return Err(singular(e)),
        Err(e) => return Err(e.into()),
    };
    let mut sabre_report = report(
        cfg,
        &data,
        &basis_sabre,
        &model,
        &Fitted {
            gamma: sabre.gamma(),
            phi: sabre.phi,
        },
        z_range,
    )?;
    sabre_report.converged = sabre.converged;
    sabre_report.iterations = sabre.iterations;
    sabre_report.residual = Some(sabre.residual);
    sabre_report.dropped_replicates = Some(sabre.dropped_replicates);
    sabre_report.phi_at_boundary = Some(sabre.phi_at_boundary);

    Ok(FitReport {
        n: data.n(),
        family: cfg.family,
        mechanism: cfg.mechanism,
        level: cfg.level,
        response: cfg.response.clone(),
        z: cfg.z.clone(),
        z_range,
        smle: smle_report,
        sabre: sabre_report,
    })
}
