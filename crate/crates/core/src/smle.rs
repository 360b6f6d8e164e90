//! The B-spline maximum likelihood estimator.
//!
//! `γ = (β, α)` solves the score equation `Σ ∂log f/∂ν · w_i = 0` and `φ`
//! solves the Pearson equation `Σ [(y - μ)² / v(ν, φ) - 1] = 0`. The
//! γ-equation is solved by damped Newton with step halving on the
//! log-likelihood, the φ-equation by a bracketed Newton/bisection search,
//! and the two alternate until neither moves.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::family::{Family, FamilyError, Model};
use crate::spline::{design_matrix, SplineBasis, SplineError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("singular information matrix; linearly dependent design columns {columns:?}")]
    SingularHessian { columns: Vec<usize> },
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("coefficient magnitude {max_abs:.3} left the parameter box; separation suspected")]
    SeparationSuspected { max_abs: f64 },
    #[error("dispersion estimate pinned at the boundary {bound}")]
    PhiBoundary { bound: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Covariates and responses. `x` is `n × p`, `z` lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, z: Vec<f64>, y: Vec<f64>) -> Result<Self, FitError> {
        if x.nrows() != z.len() || z.len() != y.len() {
            return Err(FitError::DimensionMismatch(format!(
                "x has {} rows, z has {}, y has {}",
                x.nrows(),
                z.len(),
                y.len()
            )));
        }
        Ok(Self { x, z, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// The approximating-model design `W` with rows `w_i = (x_iᵀ, B(z_i)ᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    w: DMatrix<f64>,
    p: usize,
}

impl Design {
    pub fn new(basis: &SplineBasis, x: &DMatrix<f64>, z: &[f64]) -> Result<Self, SplineError> {
        Ok(Self {
            w: design_matrix(basis, x, z)?,
            p: x.ncols(),
        })
    }

    /// Wraps a prebuilt design whose first `p` columns are the covariates.
    pub fn from_matrix(w: DMatrix<f64>, p: usize) -> Self {
        assert!(p <= w.ncols());
        Self { w, p }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of spline columns.
    pub fn k(&self) -> usize {
        self.w.ncols() - self.p
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn linear_predictor(&self, gamma: &[f64]) -> DVector<f64> {
        &self.w * DVector::from_column_slice(gamma)
    }

    /// Columns that are numerically linear combinations of others. Spline
    /// columns are examined first, so a constant covariate (which the
    /// spline block already spans) is the one reported.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let order = (self.p..self.dim()).chain(0..self.p);
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut dependent = Vec::new();
        for c in order {
            let mut v = self.w.column(c).into_owned();
            let norm0 = v.norm();
            for _ in 0..2 {
                for q in &basis {
                    let proj = q.dot(&v);
                    v.axpy(-proj, q, 1.0);
                }
            }
            let norm = v.norm();
            if norm0 == 0.0 || norm <= 1e-9 * norm0 {
                dependent.push(c);
            } else {
                basis.push(v / norm);
            }
        }
        dependent.sort_unstable();
        dependent
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the sup-norm of a Newton step.
    pub step_tol: f64,
    /// Per-observation tolerance on the estimating equations.
    pub score_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    pub max_halvings: usize,
    /// Binary-response fits stop with [`FitError::SeparationSuspected`] once a
    /// coordinate of γ leaves `[-coef_bound, coef_bound]`.
    pub coef_bound: f64,
    pub phi_bounds: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            step_tol: 1e-8,
            score_tol: 1e-6,
            max_outer: 200,
            max_newton: 100,
            max_halvings: 50,
            coef_bound: 50.0,
            phi_bounds: (1e-4, 1e4),
        }
    }
}

/// Optional starting values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitInit {
    pub gamma: Option<Vec<f64>>,
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub phi: f64,
    pub converged: bool,
    /// Newton iterations summed over all γ-solves.
    pub iterations: usize,
    /// `‖U_γ‖_∞` at the solution.
    pub grad_norm: f64,
    /// `|U_φ|` at the solution, zero when φ is known.
    pub phi_residual: f64,
    pub loglik: f64,
    #[serde(skip)]
    pub nu_hat: Vec<f64>,
}

impl FitResult {
    pub fn gamma(&self) -> Vec<f64> {
        let mut g = self.beta.clone();
        g.extend_from_slice(&self.alpha);
        g
    }
}

/// `U_γ(γ, φ) = Σ score(y_i, w_iᵀγ, φ) w_i`.
pub fn u_gamma(
    data: &Dataset,
    basis: &SplineBasis,
    model: &Model,
    gamma: &[f64],
    phi: f64,
) -> Result<Vec<f64>, FitError> {
    let design = Design::new(basis, &data.x, &data.z)?;
    design_u_gamma(&design, &data.y, model, gamma, phi)
}

pub fn design_u_gamma(
    design: &Design,
    y: &[f64],
    model: &Model,
    gamma: &[f64],
    phi: f64,
) -> Result<Vec<f64>, FitError> {
    check_gamma_len(design, gamma)?;
    let nu = design.linear_predictor(gamma);
    let mut s = DVector::zeros(design.n());
    for i in 0..design.n() {
        s[i] = model.score_nu(y[i], nu[i], phi)?;
    }
    Ok(design.matrix().tr_mul(&s).as_slice().to_vec())
}

/// `U_φ(γ, φ) = Σ [(y_i - μ_i)² / v(ν_i, φ) - 1]`.
pub fn u_phi(
    data: &Dataset,
    basis: &SplineBasis,
    model: &Model,
    gamma: &[f64],
    phi: f64,
) -> Result<f64, FitError> {
    let design = Design::new(basis, &data.x, &data.z)?;
    check_gamma_len(&design, gamma)?;
    let nu = design.linear_predictor(gamma);
    for (&yi, &ni) in data.y.iter().zip(nu.iter()) {
        model.check_y(yi)?;
        model.check_nu(ni)?;
    }
    Ok(pearson(&data.y, nu.as_slice(), model, phi))
}

fn pearson(y: &[f64], nu: &[f64], model: &Model, phi: f64) -> f64 {
    y.iter()
        .zip(nu)
        .map(|(&yi, &ni)| {
            let r = yi - model.mean_unchecked(ni);
            r * r / model.variance_unchecked(ni, phi) - 1.0
        })
        .sum()
}

fn check_gamma_len(design: &Design, gamma: &[f64]) -> Result<(), FitError> {
    if gamma.len() != design.dim() {
        return Err(FitError::DimensionMismatch(format!(
            "γ has length {}, design has {} columns",
            gamma.len(),
            design.dim()
        )));
    }
    Ok(())
}

/// Fits the B-spline MLE on a dataset.
pub fn fit_smle(
    data: &Dataset,
    basis: &SplineBasis,
    model: &Model,
    init: &FitInit,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let design = Design::new(basis, &data.x, &data.z)?;
    let dependent = design.dependent_columns();
    if !dependent.is_empty() {
        return Err(FitError::SingularHessian { columns: dependent });
    }
    fit_design(&design, &data.y, model, init, opts)
}

/// Fits on a prebuilt design. Skips the rank diagnosis that [`fit_smle`]
/// performs up front; a singular system still surfaces as
/// [`FitError::SingularHessian`].
pub fn fit_design(
    design: &Design,
    y: &[f64],
    model: &Model,
    init: &FitInit,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let n = design.n();
    if y.len() != n {
        return Err(FitError::DimensionMismatch(format!(
            "{} responses for {} design rows",
            y.len(),
            n
        )));
    }
    for &yi in y {
        model.check_y(yi)?;
    }
    let mut solver = Solver::new(design, y, model, opts);

    let mut phi = match model.phi_fixed() {
        Some(fixed) => fixed,
        None => init
            .phi
            .unwrap_or(1.0)
            .clamp(opts.phi_bounds.0, opts.phi_bounds.1),
    };
    let mut gamma = match &init.gamma {
        Some(g) => {
            check_gamma_len(design, g)?;
            let g = DVector::from_column_slice(g);
            if solver.admissible(&(design.matrix() * &g)) {
                g
            } else {
                solver.initial_gamma()?
            }
        }
        None => solver.initial_gamma()?,
    };

    let mut iterations = 0;
    let mut converged = false;
    let repeat = model.family() == Family::NegativeBinomial;
    for _ in 0..opts.max_outer {
        let before = gamma.clone();
        iterations += solver.solve_gamma(&mut gamma, phi)?;
        if model.dispersion_known() {
            converged = true;
            break;
        }
        let nu = design.matrix() * &gamma;
        let new_phi = solver.solve_phi(nu.as_slice(), phi)?;
        let phi_step = (new_phi - phi).abs();
        phi = new_phi;
        // The γ-root moves with φ only when φ enters the score beyond a
        // common factor.
        if !repeat
            || ((&gamma - &before).amax() < opts.step_tol && phi_step < opts.step_tol * (1.0 + phi))
        {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FitError::NonConvergence {
            iterations: opts.max_outer,
        });
    }

    let nu = design.matrix() * &gamma;
    let mut s = DVector::zeros(n);
    let mut loglik = 0.0;
    for i in 0..n {
        s[i] = model.score_unchecked(y[i], nu[i], phi);
        loglik += model.log_density_unchecked(y[i], nu[i], phi);
    }
    let grad_norm = design.matrix().tr_mul(&s).amax();
    let phi_residual = if model.dispersion_known() {
        0.0
    } else {
        pearson(y, nu.as_slice(), model, phi).abs()
    };
    let limit = opts.score_tol * (n.max(1) as f64);
    let converged = grad_norm < limit && phi_residual < limit;

    let p = design.p();
    Ok(FitResult {
        beta: gamma.as_slice()[..p].to_vec(),
        alpha: gamma.as_slice()[p..].to_vec(),
        phi,
        converged,
        iterations,
        grad_norm,
        phi_residual,
        loglik,
        nu_hat: nu.as_slice().to_vec(),
    })
}

struct Solver<'a> {
    design: &'a Design,
    y: &'a [f64],
    model: &'a Model,
    opts: &'a FitOptions,
    scaled: DMatrix<f64>,
}

impl<'a> Solver<'a> {
    fn new(design: &'a Design, y: &'a [f64], model: &'a Model, opts: &'a FitOptions) -> Self {
        Self {
            design,
            y,
            model,
            opts,
            scaled: design.matrix().clone(),
        }
    }

    fn admissible(&self, nu: &DVector<f64>) -> bool {
        nu.iter().all(|&v| self.model.check_nu(v).is_ok())
    }

    fn loglik(&self, nu: &DVector<f64>, phi: f64) -> f64 {
        self.y
            .iter()
            .zip(nu.iter())
            .map(|(&yi, &ni)| self.model.log_density_unchecked(yi, ni, phi))
            .sum()
    }

    /// `Wᵀ diag(weights) W`.
    fn weighted_gram(&mut self, weights: &[f64]) -> DMatrix<f64> {
        let w = self.design.matrix();
        for j in 0..w.ncols() {
            let src = w.column(j);
            let mut dst = self.scaled.column_mut(j);
            for i in 0..w.nrows() {
                dst[i] = src[i] * weights[i];
            }
        }
        w.tr_mul(&self.scaled)
    }

    fn singular(&self) -> FitError {
        FitError::SingularHessian {
            columns: self.design.dependent_columns(),
        }
    }

    /// Weighted least squares of the linearised starting predictor, falling
    /// back to a constant predictor when that is inadmissible.
    fn initial_gamma(&mut self) -> Result<DVector<f64>, FitError> {
        let n = self.design.n();
        let dim = self.design.dim();
        let nu0: Vec<f64> = self.y.iter().map(|&y| self.model.starting_nu(y)).collect();
        let weights: Vec<f64> = nu0
            .iter()
            .map(|&v| self.model.fisher_unchecked(v, 1.0).max(1e-10))
            .collect();
        let gram = self.weighted_gram(&weights);
        let rhs = self.scaled.tr_mul(&DVector::from_column_slice(&nu0));
        if dim > 0 && n > 0 {
            if let Some(chol) = gram.cholesky() {
                let gamma = chol.solve(&rhs);
                let nu = self.design.matrix() * &gamma;
                if self.admissible(&nu) && self.loglik(&nu, 1.0).is_finite() {
                    return Ok(gamma);
                }
            } else {
                return Err(self.singular());
            }
        }

        let ybar = if n > 0 {
            self.y.iter().sum::<f64>() / n as f64
        } else {
            0.0
        };
        let level = self.model.starting_nu(ybar);
        let mut gamma = DVector::zeros(dim);
        for j in self.design.p()..dim {
            gamma[j] = level;
        }
        let nu = self.design.matrix() * &gamma;
        if let Some(bad) = nu.iter().find(|&&v| self.model.check_nu(v).is_err()) {
            return Err(FamilyError::DomainError {
                family: self.model.family(),
                nu: *bad,
            }
            .into());
        }
        Ok(gamma)
    }

    /// Damped Newton on the γ-score at fixed φ. Returns the iteration count.
    fn solve_gamma(&mut self, gamma: &mut DVector<f64>, phi: f64) -> Result<usize, FitError> {
        let n = self.design.n();
        let w = self.design.matrix();
        let mut nu = w * &*gamma;
        let mut ll = self.loglik(&nu, phi);
        let mut scores = DVector::zeros(n);
        let mut curvature = vec![0.0; n];

        for it in 1..=self.opts.max_newton {
            for i in 0..n {
                scores[i] = self.model.score_unchecked(self.y[i], nu[i], phi);
                curvature[i] = -self.model.hessian_unchecked(self.y[i], nu[i], phi);
            }
            let grad = w.tr_mul(&scores);
            let step = match self.weighted_gram(&curvature).cholesky() {
                Some(chol) => chol.solve(&grad),
                None => {
                    // Observed information not positive definite (possible
                    // for non-canonical likelihoods); use expected information.
                    for i in 0..n {
                        curvature[i] = self.model.fisher_unchecked(nu[i], phi);
                    }
                    match self.weighted_gram(&curvature).cholesky() {
                        Some(chol) => chol.solve(&grad),
                        None => return Err(self.singular()),
                    }
                }
            };

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=self.opts.max_halvings {
                let candidate = &*gamma + &step * t;
                let cand_nu = w * &candidate;
                let tiny = step.amax() * t < self.opts.step_tol;
                if self.admissible(&cand_nu) {
                    let cand_ll = self.loglik(&cand_nu, phi);
                    if cand_ll.is_finite() && (cand_ll >= ll || tiny) {
                        accepted = Some((candidate, cand_nu, cand_ll));
                        break;
                    }
                }
                if tiny {
                    break;
                }
                t *= 0.5;
            }
            let Some((candidate, cand_nu, cand_ll)) = accepted else {
                if grad.amax() < self.opts.score_tol * n.max(1) as f64 {
                    return Ok(it);
                }
                return Err(FitError::NonConvergence { iterations: it });
            };
            *gamma = candidate;
            nu = cand_nu;
            ll = cand_ll;
            // The box guards against separation, which only binary
            // responses exhibit.
            let max_abs = gamma.amax();
            if max_abs > self.opts.coef_bound && self.model.family() == Family::Bernoulli {
                return Err(FitError::SeparationSuspected { max_abs });
            }
            if step.amax() * t < self.opts.step_tol {
                return Ok(it);
            }
        }
        Err(FitError::NonConvergence {
            iterations: self.opts.max_newton,
        })
    }

    /// Root of the Pearson equation in φ over the bracket, by Newton steps
    /// in `log φ` safeguarded with bisection.
    fn solve_phi(&self, nu: &[f64], start: f64) -> Result<f64, FitError> {
        let (lo, hi) = self.opts.phi_bounds;
        let model = self.model;
        let y = self.y;
        let eval = |phi: f64| -> (f64, f64) {
            let mut u = 0.0;
            let mut du = 0.0;
            for (&yi, &ni) in y.iter().zip(nu) {
                let r = yi - model.mean_unchecked(ni);
                let v = model.variance_unchecked(ni, phi);
                let r2 = r * r;
                u += r2 / v - 1.0;
                du -= r2 * phi * model.variance_dphi(ni) / (v * v);
            }
            (u, du)
        };
        if eval(lo).0 <= 0.0 {
            return Err(FitError::PhiBoundary { bound: lo });
        }
        if eval(hi).0 >= 0.0 {
            return Err(FitError::PhiBoundary { bound: hi });
        }
        let (mut a, mut b) = (lo.ln(), hi.ln());
        let mut t = start.clamp(lo, hi).ln();
        for _ in 0..200 {
            let (u, du) = eval(t.exp());
            if u == 0.0 {
                break;
            }
            if u > 0.0 {
                a = t;
            } else {
                b = t;
            }
            let mut next = t - u / du;
            if !(next > a && next < b) || !next.is_finite() {
                next = 0.5 * (a + b);
            }
            let done = (next - t).abs() < 1e-15 * (1.0 + t.abs()) || b - a < 1e-15;
            t = next;
            if done {
                break;
            }
        }
        Ok(t.exp())
    }
}
