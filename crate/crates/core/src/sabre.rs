//! Simulation-based bias correction.
//!
//! Given the sMLE `θ̃ = (γ̃, φ̃)` on the observed data, the corrected
//! estimate `θ̂` solves `θ̃ = E_θ̂[θ̃*(θ̂)]`, where `θ̃*(θ)` is the sMLE
//! refitted on responses simulated from the approximating model at `θ`. The
//! expectation is replaced by an average over `H` simulated datasets and the
//! root is found by the iterative-bootstrap recursion
//!
//! ```text
//! θ⁽ᵏ⁺¹⁾ = θ⁽ᵏ⁾ + step · (θ̃ - (1/H) Σ_h θ̃*_h(θ⁽ᵏ⁾))
//! ```
//!
//! Replicate `h` always draws observation `i` from the stream keyed by
//! `(master_seed, sabre, h, i)`, so the simulated-average map is the same
//! deterministic function at every iteration.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::family::Model;
use crate::rng::{Purpose, StreamKey};
use crate::smle::{fit_design, Dataset, Design, FitError, FitInit, FitOptions, FitResult};
use crate::spline::SplineBasis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SabreError {
    #[error("initial fit on the observed data failed: {0}")]
    SmleFailed(FitError),
    #[error("iteration {iteration}: {failed} of {total} simulated refits failed (first: {first})")]
    ReplicateFailures {
        iteration: usize,
        failed: usize,
        total: usize,
        first: ReplicateError,
    },
    #[error("no convergence after {} iterations", .0.iterations)]
    NonConvergence(Box<SabreResult>),
    #[error("update left the admissible parameter region at iteration {iteration}")]
    Inadmissible { iteration: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// A refit failure tagged with its replicate index.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("replicate {replicate}: {source}")]
pub struct ReplicateError {
    pub replicate: usize,
    #[source]
    pub source: FitError,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SabreConfig {
    /// Simulated datasets per iteration.
    pub h: usize,
    pub max_iter: usize,
    /// Gain applied to the fixed-point residual, in `(0, 1]`.
    pub step: f64,
    /// Relative stopping tolerance on the sup-norm of the update.
    pub tol: f64,
    pub master_seed: u64,
    /// Start each replicate's refit from its previous solution.
    pub warm_start: bool,
    /// Worker threads for the replicate refits; 0 uses the ambient pool.
    pub threads: usize,
    /// Largest tolerated fraction of failed refits in one iteration.
    pub max_failure_fraction: f64,
}

impl Default for SabreConfig {
    fn default() -> Self {
        Self {
            h: 50,
            max_iter: 200,
            step: 1.0,
            tol: 1e-5,
            master_seed: 0,
            warm_start: true,
            threads: 0,
            max_failure_fraction: 0.2,
        }
    }
}

impl SabreConfig {
    pub fn validate(&self) -> Result<(), SabreError> {
        if self.h == 0 {
            return Err(SabreError::InvalidConfig("h must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(SabreError::InvalidConfig("tol must be positive".into()));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(SabreError::InvalidConfig("step must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.max_failure_fraction) {
            return Err(SabreError::InvalidConfig(
                "max_failure_fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SabreResult {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub phi: f64,
    /// The observed-data sMLE that seeds and anchors the iteration.
    pub smle: FitResult,
    pub iterations: usize,
    /// `‖update‖_∞` per iteration.
    pub trajectory: Vec<f64>,
    pub converged: bool,
    /// `‖θ̃ - (1/H) Σ θ̃*_h(θ̂)‖_∞` at the reported estimate.
    pub residual: f64,
    /// Refits dropped from the average, summed over iterations.
    pub dropped_replicates: usize,
    /// φ was clipped to its bracket at the reported estimate.
    pub phi_at_boundary: bool,
    /// Gain in force at the last update; below `step` when oscillation was
    /// detected.
    pub final_step: f64,
    /// The last update was projected back onto the admissible region.
    pub constrained: bool,
}

impl SabreResult {
    pub fn gamma(&self) -> Vec<f64> {
        let mut g = self.beta.clone();
        g.extend_from_slice(&self.alpha);
        g
    }
}

/// Simulates responses from the approximating model at `(γ, φ)` for
/// replicate `h` and refits the sMLE on them.
#[allow(clippy::too_many_arguments)]
pub fn simulate_and_refit(
    design: &Design,
    model: &Model,
    gamma: &[f64],
    phi: f64,
    h: usize,
    master_seed: u64,
    init: &FitInit,
    opts: &FitOptions,
) -> Result<FitResult, ReplicateError> {
    let tag = |source: FitError| ReplicateError {
        replicate: h,
        source,
    };
    let y = simulate_responses(design, model, gamma, phi, h, master_seed).map_err(tag)?;
    fit_design(design, &y, model, init, opts).map_err(tag)
}

/// The simulated response vector `y*_h(γ, φ)`.
pub fn simulate_responses(
    design: &Design,
    model: &Model,
    gamma: &[f64],
    phi: f64,
    h: usize,
    master_seed: u64,
) -> Result<Vec<f64>, FitError> {
    if gamma.len() != design.dim() {
        return Err(FitError::DimensionMismatch(format!(
            "γ has length {}, design has {} columns",
            gamma.len(),
            design.dim()
        )));
    }
    let nu = design.linear_predictor(gamma);
    nu.iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut stream =
                StreamKey::new(master_seed, Purpose::Sabre, h as u64, i as u64).stream();
            Ok(model.sample(v, phi, &mut stream)?)
        })
        .collect()
}

/// Fits the bias-corrected estimator.
pub fn fit_sabre(
    data: &Dataset,
    basis: &SplineBasis,
    model: &Model,
    cfg: &SabreConfig,
) -> Result<SabreResult, SabreError> {
    cfg.validate()?;
    let design =
        Design::new(basis, &data.x, &data.z).map_err(|e| SabreError::SmleFailed(e.into()))?;
    let dependent = design.dependent_columns();
    if !dependent.is_empty() {
        return Err(SabreError::SmleFailed(FitError::SingularHessian {
            columns: dependent,
        }));
    }
    let opts = FitOptions::default();
    let smle = fit_design(&design, &data.y, model, &FitInit::default(), &opts)
        .map_err(SabreError::SmleFailed)?;
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| SabreError::InvalidConfig(e.to_string()))?;
        pool.install(|| iterate(&design, model, smle, cfg, &opts))
    } else {
        iterate(&design, model, smle, cfg, &opts)
    }
}

/// Runs the recursion from a given sMLE on a prebuilt design.
pub fn fit_sabre_from_smle(
    design: &Design,
    model: &Model,
    smle: FitResult,
    cfg: &SabreConfig,
) -> Result<SabreResult, SabreError> {
    cfg.validate()?;
    iterate(design, model, smle, cfg, &FitOptions::default())
}

struct Average {
    gamma: Vec<f64>,
    phi: f64,
    failed: usize,
}

#[allow(clippy::too_many_arguments)]
fn simulated_average(
    design: &Design,
    model: &Model,
    gamma: &[f64],
    phi: f64,
    cfg: &SabreConfig,
    opts: &FitOptions,
    warm: &mut [Option<FitInit>],
    iteration: usize,
) -> Result<Average, SabreError> {
    let results: Vec<Result<FitResult, ReplicateError>> = (0..cfg.h)
        .into_par_iter()
        .map(|h| {
            let init = match &warm[h] {
                Some(init) if cfg.warm_start => init.clone(),
                _ => FitInit {
                    gamma: Some(gamma.to_vec()),
                    phi: Some(phi),
                },
            };
            simulate_and_refit(design, model, gamma, phi, h, cfg.master_seed, &init, opts)
        })
        .collect();

    let dim = design.dim();
    let mut sum_gamma = vec![0.0; dim];
    let mut sum_phi = 0.0;
    let mut ok = 0usize;
    let mut first_error = None;
    for (h, result) in results.into_iter().enumerate() {
        match result {
            Ok(fit) => {
                for (s, g) in sum_gamma.iter_mut().zip(fit.beta.iter().chain(&fit.alpha)) {
                    *s += g;
                }
                sum_phi += fit.phi;
                ok += 1;
                warm[h] = Some(FitInit {
                    gamma: Some(fit.gamma()),
                    phi: Some(fit.phi),
                });
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let failed = cfg.h - ok;
    if failed as f64 > cfg.max_failure_fraction * cfg.h as f64 || ok == 0 {
        return Err(SabreError::ReplicateFailures {
            iteration,
            failed,
            total: cfg.h,
            first: first_error.expect("a failure was counted"),
        });
    }
    let scale = 1.0 / ok as f64;
    Ok(Average {
        gamma: sum_gamma.into_iter().map(|s| s * scale).collect(),
        phi: sum_phi * scale,
        failed,
    })
}

/// Iterations without a new smallest residual before the gain is halved.
const STALL_WINDOW: usize = 5;

/// Fraction of the median sMLE predictor kept between the iterate and a
/// domain bound.
const ADMISSIBLE_MARGIN: f64 = 0.05;

fn admissible(design: &Design, model: &Model, gamma: &[f64]) -> bool {
    design
        .linear_predictor(gamma)
        .iter()
        .all(|&v| model.check_nu(v).is_ok())
}

/// Euclidean projection of `v` onto `{γ : w_iᵀγ ≥ floor for all i}` by
/// Hildreth's dual coordinate ascent. `rows` holds `w_i` as columns.
fn project_onto_floor(rows: &DMatrix<f64>, v: &[f64], floor: f64) -> Vec<f64> {
    let n = rows.ncols();
    let mut g = DVector::from_column_slice(v);
    let norms: Vec<f64> = (0..n).map(|i| rows.column(i).norm_squared()).collect();
    let mut lambda = vec![0.0; n];
    let tol = 1e-12 * (1.0 + floor.abs());
    for _ in 0..10_000 {
        let mut change = 0.0f64;
        for i in 0..n {
            if norms[i] == 0.0 {
                continue;
            }
            let wi = rows.column(i);
            let slack = floor - wi.dot(&g);
            let delta = (slack / norms[i]).max(-lambda[i]);
            if delta != 0.0 {
                lambda[i] += delta;
                g.axpy(delta, &wi, 1.0);
                change = change.max(delta.abs() * norms[i].sqrt());
            }
        }
        if change < tol {
            break;
        }
    }
    g.as_slice().to_vec()
}

fn sup_norm<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    values.into_iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn iterate(
    design: &Design,
    model: &Model,
    smle: FitResult,
    cfg: &SabreConfig,
    opts: &FitOptions,
) -> Result<SabreResult, SabreError> {
    let estimate_phi = !model.dispersion_known();
    let (phi_lo, phi_hi) = opts.phi_bounds;
    let target_gamma = smle.gamma();
    let target_phi = smle.phi;

    let mut gamma = target_gamma.clone();
    let mut phi = target_phi;
    let mut step = cfg.step;
    let mut trajectory = Vec::new();
    let mut warm: Vec<Option<FitInit>> = vec![None; cfg.h];
    let mut dropped = 0;
    let mut previous: Option<Vec<f64>> = None;
    let mut constrained = false;
    let mut best_residual = f64::INFINITY;
    let mut stalled = 0;
    // Families with a bounded predictor keep every observation at least a
    // small fraction of the typical sMLE predictor inside the bound.
    let floor = model.nu_lower_bound().map(|b| {
        let mut nu = smle.nu_hat.clone();
        nu.sort_by(f64::total_cmp);
        let median = nu.get(nu.len() / 2).copied().unwrap_or(1.0);
        b + ADMISSIBLE_MARGIN * (median - b).abs()
    });
    let rows = design.matrix().transpose();
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for k in 0..cfg.max_iter {
        iterations = k + 1;
        let avg = simulated_average(design, model, &gamma, phi, cfg, opts, &mut warm, k)?;
        dropped += avg.failed;

        let mut diff: Vec<f64> = target_gamma
            .iter()
            .zip(&avg.gamma)
            .map(|(t, a)| t - a)
            .collect();
        if estimate_phi {
            diff.push(target_phi - avg.phi);
        }
        residual = sup_norm(&diff);
        let threshold =
            cfg.tol * (1.0 + sup_norm(gamma.iter().chain(estimate_phi.then_some(&phi))));
        if residual <= threshold {
            trajectory.push(step * residual);
            converged = true;
            break;
        }

        let mut cand: Vec<f64> = gamma.iter().zip(&diff).map(|(g, d)| g + step * d).collect();
        constrained = false;
        if let Some(floor) = floor {
            if design.linear_predictor(&cand).min() < floor {
                cand = project_onto_floor(&rows, &cand, floor);
                constrained = true;
            }
            // Safeguard in case the projection stopped short.
            let mut t = 1.0;
            let mut tries = 0;
            while !admissible(design, model, &cand) {
                tries += 1;
                if tries > 40 {
                    return Err(SabreError::Inadmissible { iteration: k });
                }
                t *= 0.5;
                cand = gamma
                    .iter()
                    .zip(&cand)
                    .map(|(g, c)| g + t * (c - g))
                    .collect();
            }
        }
        let cand_phi = if estimate_phi {
            (phi + step * diff[diff.len() - 1]).clamp(phi_lo, phi_hi)
        } else {
            phi
        };

        let mut move_vec: Vec<f64> = cand.iter().zip(&gamma).map(|(a, b)| a - b).collect();
        if estimate_phi {
            move_vec.push(cand_phi - phi);
        }
        let moved = sup_norm(&move_vec);
        trajectory.push(moved);
        if moved <= threshold {
            // Keep the point whose residual was just measured; the update
            // would move it by less than the tolerance.
            converged = true;
            break;
        }
        // Successive moves pointing against each other mean the gain
        // overshoots, or that the iterate is jittering around a fixed point
        // of a discontinuous map (discrete responses); either way the gain
        // is halved.
        let reversed = previous
            .as_ref()
            .is_some_and(|prev| prev.iter().zip(&move_vec).map(|(a, b)| a * b).sum::<f64>() < 0.0);
        // A residual that stops improving means the map is flat or jumpy
        // around the iterate and full steps only wander.
        if residual < best_residual {
            best_residual = residual;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if reversed || stalled >= STALL_WINDOW {
            step *= 0.5;
            stalled = 0;
        }
        gamma = cand;
        phi = cand_phi;
        previous = Some(move_vec);
    }

    let p = design.p();
    let result = SabreResult {
        beta: gamma[..p].to_vec(),
        alpha: gamma[p..].to_vec(),
        phi,
        smle,
        iterations,
        trajectory,
        converged,
        residual,
        dropped_replicates: dropped,
        phi_at_boundary: estimate_phi && (phi <= phi_lo || phi >= phi_hi),
        final_step: step,
        constrained,
    };
    if converged {
        Ok(result)
    } else {
        Err(SabreError::NonConvergence(Box::new(result)))
    }
}

/// `‖θ̃ - (1/H) Σ θ̃*_h(θ)‖_∞` evaluated afresh at `(γ, φ)`, without warm
/// starts.
pub fn fixed_point_residual(
    design: &Design,
    model: &Model,
    smle: &FitResult,
    gamma: &[f64],
    phi: f64,
    cfg: &SabreConfig,
) -> Result<f64, SabreError> {
    let mut warm = vec![None; cfg.h];
    let opts = FitOptions::default();
    let cold = SabreConfig {
        warm_start: false,
        ..cfg.clone()
    };
    let avg = simulated_average(design, model, gamma, phi, &cold, &opts, &mut warm, 0)?;
    let mut r = smle
        .gamma()
        .iter()
        .zip(&avg.gamma)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if !model.dispersion_known() {
        r = r.max((smle.phi - avg.phi).abs());
    }
    Ok(r)
}
