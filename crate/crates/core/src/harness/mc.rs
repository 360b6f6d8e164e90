//! Monte Carlo replication of both estimators over a design grid.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::designs::{DesignSpec, ReplicationData};
use super::knots::knot_count;
use super::HarnessError;
use crate::family::Model;
use crate::inference::{beta_covariance, wald_ci, CovarianceFactors};
use crate::rng::{derive_seed, Purpose};
use crate::sabre::{fit_sabre, SabreError};
use crate::smle::{fit_smle, Dataset, Design, FitError, FitInit, FitOptions};
use crate::spline::{SplineBasis, DEFAULT_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Smle,
    Sabre,
}

/// One row of the long-form output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub design: String,
    pub grid_value: f64,
    pub replication: usize,
    pub estimator: Estimator,
    pub target: String,
    pub truth: f64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub covered: Option<bool>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub grid_value: f64,
    pub estimator: Estimator,
    pub target: String,
    pub truth: f64,
    pub count: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub mean_ci_length: Option<f64>,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCount {
    pub grid_value: f64,
    pub estimator: Estimator,
    pub kind: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub design: String,
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub n_interior_smle: usize,
    pub n_interior_sabre: usize,
    pub cells: Vec<SummaryCell>,
    pub failures: Vec<FailureCount>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOutput {
    pub records: Vec<ReplicationRecord>,
    pub summary: McSummary,
}

struct Failure {
    grid_value: f64,
    estimator: Estimator,
    kind: &'static str,
}

#[derive(Default)]
struct ReplicationOutput {
    records: Vec<ReplicationRecord>,
    failures: Vec<Failure>,
}

fn fit_error_kind(e: &FitError) -> &'static str {
    match e {
        FitError::Family(_) => "Family",
        FitError::Spline(_) => "Spline",
        FitError::SingularHessian { .. } => "SingularHessian",
        FitError::NonConvergence { .. } => "NonConvergence",
        FitError::SeparationSuspected { .. } => "SeparationSuspected",
        FitError::PhiBoundary { .. } => "PhiBoundary",
        FitError::DimensionMismatch(_) => "DimensionMismatch",
    }
}

fn sabre_error_kind(e: &SabreError) -> &'static str {
    match e {
        SabreError::SmleFailed(inner) => fit_error_kind(inner),
        SabreError::ReplicateFailures { .. } => "ReplicateFailures",
        SabreError::NonConvergence(_) => "NonConvergence",
        SabreError::Inadmissible { .. } => "Inadmissible",
        SabreError::InvalidConfig(_) => "InvalidConfig",
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    spec: &'a DesignSpec,
    n_smle: usize,
    n_sabre: usize,
}

impl Context<'_> {
    fn records(
        &self,
        grid_value: f64,
        replication: usize,
        estimator: Estimator,
        truths: &[(String, f64)],
        estimates: Estimates,
    ) -> Result<Vec<ReplicationRecord>, HarnessError> {
        let cov = beta_covariance(&CovarianceFactors::new(
            &estimates.design,
            &estimates.model,
            &estimates.gamma,
            estimates.phi,
        )?)?;
        let p = self.spec.beta0.len();
        truths
            .iter()
            .enumerate()
            .map(|(j, (target, truth))| {
                let (estimate, se, ci) = if j < p {
                    let se = cov[(j, j)].max(0.0).sqrt();
                    let est = estimates.gamma[j];
                    (est, Some(se), Some(wald_ci(est, se, self.cfg.level)?))
                } else {
                    (estimates.phi, None, None)
                };
                Ok(ReplicationRecord {
                    design: self.spec.kind.name().to_string(),
                    grid_value,
                    replication,
                    estimator,
                    target: target.clone(),
                    truth: *truth,
                    estimate,
                    se,
                    ci_lo: ci.map(|c| c.0),
                    ci_hi: ci.map(|c| c.1),
                    covered: ci.map(|(lo, hi)| lo <= *truth && *truth <= hi),
                    converged: estimates.converged,
                    iterations: estimates.iterations,
                })
            })
            .collect()
    }

    fn replication(&self, r: usize) -> Result<ReplicationOutput, HarnessError> {
        let cfg = self.cfg;
        let data: ReplicationData = self.spec.generate(cfg.n, cfg.master_seed, r as u64);
        let basis_smle = SplineBasis::from_quantiles(&data.z, self.n_smle, DEFAULT_ORDER)?;
        let basis_sabre = SplineBasis::from_quantiles(&data.z, self.n_sabre, DEFAULT_ORDER)?;
        let sabre_cfg = cfg
            .sabre
            .to_config(derive_seed(cfg.master_seed, Purpose::Sabre, r as u64), 0);
        let mut out = ReplicationOutput::default();
        for g in self.spec.grid_values() {
            let (model, phi0) = self
                .spec
                .model_at(g)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let truths = self.spec.truths(phi0, &model);
            let y = data
                .responses(&model, phi0)
                .map_err(|e| HarnessError::Fit(e.into()))?;
            let dataset = Dataset::new(data.x.clone(), data.z.clone(), y)?;

            match fit_smle(
                &dataset,
                &basis_smle,
                &model,
                &FitInit::default(),
                &FitOptions::default(),
            ) {
                Ok(fit) => {
                    let est = Estimates {
                        design: Design::new(&basis_smle, &dataset.x, &dataset.z)?,
                        model,
                        gamma: fit.gamma(),
                        phi: fit.phi,
                        converged: fit.converged,
                        iterations: fit.iterations,
                    };
                    out.records
                        .extend(self.records(g, r, Estimator::Smle, &truths, est)?);
                }
                Err(e) => out.failures.push(Failure {
                    grid_value: g,
                    estimator: Estimator::Smle,
                    kind: fit_error_kind(&e),
                }),
            }

            let result = match fit_sabre(&dataset, &basis_sabre, &model, &sabre_cfg) {
                Ok(res) => Some(res),
                Err(SabreError::NonConvergence(res)) => Some(*res),
                Err(e) => {
                    out.failures.push(Failure {
                        grid_value: g,
                        estimator: Estimator::Sabre,
                        kind: sabre_error_kind(&e),
                    });
                    None
                }
            };
            if let Some(res) = result {
                let est = Estimates {
                    design: Design::new(&basis_sabre, &dataset.x, &dataset.z)?,
                    model,
                    gamma: res.gamma(),
                    phi: res.phi,
                    converged: res.converged,
                    iterations: res.iterations,
                };
                out.records
                    .extend(self.records(g, r, Estimator::Sabre, &truths, est)?);
            }
        }
        Ok(out)
    }
}

struct Estimates {
    design: Design,
    model: Model,
    gamma: Vec<f64>,
    phi: f64,
    converged: bool,
    iterations: usize,
}

/// Runs every replication and returns records sorted by
/// (grid value, replication, estimator) together with their summary.
///
/// Replications run in parallel; the output does not depend on the number
/// of threads.
pub fn simulate(cfg: &ExperimentConfig) -> Result<McOutput, HarnessError> {
    cfg.validate()?;
    let spec = DesignSpec::from_config(cfg)?;
    let ctx = Context {
        cfg,
        spec: &spec,
        n_smle: knot_count(cfg.n as u64, cfg.n_rule_smle),
        n_sabre: knot_count(cfg.n as u64, cfg.n_rule_sabre),
    };
    let run = || -> Result<Vec<ReplicationOutput>, HarnessError> {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| ctx.replication(r))
            .collect()
    };
    let outputs = if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(run)?
    } else {
        run()?
    };

    let grid = spec.grid_values();
    let grid_index = |g: f64| grid.iter().position(|&v| v == g).unwrap_or(usize::MAX);
    let mut records = Vec::new();
    let mut failures: BTreeMap<(usize, Estimator, &'static str), usize> = BTreeMap::new();
    for out in outputs {
        records.extend(out.records);
        for f in out.failures {
            *failures
                .entry((grid_index(f.grid_value), f.estimator, f.kind))
                .or_default() += 1;
        }
    }
    // Stable sort keeps target order within a group.
    records.sort_by_key(|r| (grid_index(r.grid_value), r.replication, r.estimator));

    let mut summary = summarize(cfg, &records, &grid);
    summary.n_interior_smle = ctx.n_smle;
    summary.n_interior_sabre = ctx.n_sabre;
    summary.failures = failures
        .into_iter()
        .map(|((gi, estimator, kind), count)| FailureCount {
            grid_value: grid[gi],
            estimator,
            kind: kind.to_string(),
            count,
        })
        .collect();
    Ok(McOutput { records, summary })
}

/// Bias, RMSE, coverage and mean interval length per
/// (grid value, estimator, target), accumulated in record order.
pub fn summarize(cfg: &ExperimentConfig, records: &[ReplicationRecord], grid: &[f64]) -> McSummary {
    #[derive(Default)]
    struct Acc {
        truth: f64,
        count: usize,
        sum: f64,
        sum_sq_err: f64,
        intervals: usize,
        covered: usize,
        length: f64,
        nonconverged: usize,
    }
    let grid_index = |g: f64| grid.iter().position(|&v| v == g).unwrap_or(usize::MAX);
    let mut order: Vec<(usize, Estimator, String)> = Vec::new();
    let mut cells: BTreeMap<(usize, Estimator, String), Acc> = BTreeMap::new();
    for r in records {
        let key = (grid_index(r.grid_value), r.estimator, r.target.clone());
        let acc = cells.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Acc::default()
        });
        acc.truth = r.truth;
        acc.count += 1;
        acc.sum += r.estimate;
        acc.sum_sq_err += (r.estimate - r.truth).powi(2);
        if let (Some(lo), Some(hi), Some(c)) = (r.ci_lo, r.ci_hi, r.covered) {
            acc.intervals += 1;
            acc.covered += usize::from(c);
            acc.length += hi - lo;
        }
        acc.nonconverged += usize::from(!r.converged);
    }
    // Cells in (grid, estimator) order, targets in first-seen order.
    order.sort_by_key(|k| (k.0, k.1));
    let cells = order
        .into_iter()
        .map(|key| {
            let acc = &cells[&key];
            let count = acc.count as f64;
            let mean = acc.sum / count;
            SummaryCell {
                grid_value: grid[key.0],
                estimator: key.1,
                target: key.2,
                truth: acc.truth,
                count: acc.count,
                mean_estimate: mean,
                bias: mean - acc.truth,
                rmse: (acc.sum_sq_err / count).sqrt(),
                coverage: (acc.intervals > 0).then(|| acc.covered as f64 / acc.intervals as f64),
                mean_ci_length: (acc.intervals > 0).then(|| acc.length / acc.intervals as f64),
                nonconverged: acc.nonconverged,
            }
        })
        .collect();
    McSummary {
        design: cfg.design.name().to_string(),
        n: cfg.n,
        p: cfg.p,
        replications: cfg.replications,
        master_seed: cfg.master_seed,
        n_interior_smle: knot_count(cfg.n as u64, cfg.n_rule_smle),
        n_interior_sabre: knot_count(cfg.n as u64, cfg.n_rule_sabre),
        cells,
        failures: Vec::new(),
    }
}

/// Writes records as CSV with the fixed column order.
pub fn write_records<W: Write>(records: &[ReplicationRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record([
            "design",
            "grid_value",
            "replication",
            "estimator",
            "target",
            "truth",
            "estimate",
            "se",
            "ci_lo",
            "ci_hi",
            "covered",
            "converged",
            "iterations",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `<out>.summary.json` next to the CSV.
pub fn summary_path(out_path: &Path) -> PathBuf {
    let stem = out_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mc".into());
    out_path.with_file_name(format!("{stem}.summary.json"))
}

/// Runs the study, writes the record CSV to `out_path` and the JSON summary
/// next to it.
pub fn run_mc(cfg: &ExperimentConfig, out_path: &Path) -> Result<McOutput, HarnessError> {
    let output = simulate(cfg)?;
    write_records(&output.records, File::create(out_path)?)?;
    let summary = File::create(summary_path(out_path))?;
    serde_json::to_writer_pretty(summary, &output.summary)?;
    Ok(output)
}
