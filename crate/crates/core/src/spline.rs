//! Clamped B-spline bases on `[0, 1]` with knots at empirical quantiles.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("no covariate values supplied")]
    EmptyInput,
    #[error("value {0} lies outside [0, 1]")]
    OutOfRange(f64),
    #[error("{basis} basis functions exceed the {n} available observations")]
    TooManyKnots { basis: usize, n: usize },
    #[error("spline order must be at least 2, got {0}")]
    InvalidOrder(usize),
    #[error("interior knots must be strictly increasing and inside (0, 1)")]
    InvalidKnots,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Default order (cubic splines).
pub const DEFAULT_ORDER: usize = 4;

/// An order-`r` B-spline basis with `r`-fold boundary knots at 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    order: usize,
    interior: Vec<f64>,
    knots: Vec<f64>,
}

impl SplineBasis {
    /// Builds a basis directly from interior knots.
    pub fn with_interior_knots(interior: Vec<f64>, order: usize) -> Result<Self, SplineError> {
        if order < 2 {
            return Err(SplineError::InvalidOrder(order));
        }
        let inside = interior.iter().all(|&t| t > 0.0 && t < 1.0);
        let increasing = interior.windows(2).all(|w| w[0] < w[1]);
        if !inside || !increasing {
            return Err(SplineError::InvalidKnots);
        }
        let mut knots = Vec::with_capacity(interior.len() + 2 * order);
        knots.extend(std::iter::repeat_n(0.0, order));
        knots.extend_from_slice(&interior);
        knots.extend(std::iter::repeat_n(1.0, order));
        Ok(Self {
            order,
            interior,
            knots,
        })
    }

    /// Places `n_interior` knots at the nearest-rank empirical quantiles of
    /// `z` at levels `k / (n_interior + 1)`. Coinciding quantiles (ties in
    /// `z`) and quantiles sitting on the boundary are dropped, so the
    /// resulting basis may carry fewer interior knots than requested.
    pub fn from_quantiles(z: &[f64], n_interior: usize, order: usize) -> Result<Self, SplineError> {
        if z.is_empty() {
            return Err(SplineError::EmptyInput);
        }
        if let Some(&bad) = z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SplineError::OutOfRange(bad));
        }
        if order < 2 {
            return Err(SplineError::InvalidOrder(order));
        }
        let mut sorted = z.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();

        let mut interior: Vec<f64> = Vec::with_capacity(n_interior);
        for k in 1..=n_interior {
            let level = k as f64 / (n_interior + 1) as f64;
            let rank = ((level * n as f64).ceil() as usize).clamp(1, n);
            let q = sorted[rank - 1];
            if q <= 0.0 || q >= 1.0 {
                continue;
            }
            if interior.last().is_some_and(|&last| q <= last) {
                continue;
            }
            interior.push(q);
        }
        if interior.len() < n_interior {
            log::warn!(
                "requested {n_interior} interior knots, {} distinct quantiles available",
                interior.len()
            );
        }
        let basis = interior.len() + order;
        if basis > n {
            return Err(SplineError::TooManyKnots { basis, n });
        }
        Self::with_interior_knots(interior, order)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior
    }

    /// Full knot sequence of length `N + 2r`.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions, `K = N + r`.
    pub fn len(&self) -> usize {
        self.interior.len() + self.order
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Ratio of the widest to the narrowest gap between consecutive
    /// distinct knots over `[0, 1]`.
    pub fn mesh_ratio(&self) -> f64 {
        let r = self.order;
        let n = self.interior.len();
        let gaps = self.knots[r - 1..=n + r].windows(2).map(|w| w[1] - w[0]);
        let (lo, hi) = gaps.fold((f64::INFINITY, 0.0f64), |(lo, hi), g| {
            (lo.min(g), hi.max(g))
        });
        hi / lo
    }

    /// Index of the knot span containing `z`: the largest `mu` with
    /// `knots[mu] <= z < knots[mu + 1]`, where `z = 1` maps to the last span.
    fn span(&self, z: f64) -> usize {
        let r = self.order;
        let last = self.interior.len() + r - 1;
        if z >= 1.0 {
            return last;
        }
        // knots[r-1] = 0 and knots[last+1] = 1 bracket every z in [0, 1).
        let (mut lo, mut hi) = (r - 1, last + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if z >= self.knots[mid] {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Evaluates the `r` possibly-nonzero basis functions at `z`. Returns the
    /// index of the first one; `values[..r]` is filled.
    pub fn eval_local(&self, z: f64, values: &mut [f64]) -> Result<usize, SplineError> {
        if !(0.0..=1.0).contains(&z) {
            return Err(SplineError::OutOfRange(z));
        }
        let r = self.order;
        let mu = self.span(z);
        let t = &self.knots;
        let mut left = [0.0f64; 32];
        let mut right = [0.0f64; 32];
        assert!(r <= 32, "spline order above 32 is not supported");

        // Cox-de Boor recursion in triangular form.
        values[0] = 1.0;
        for j in 1..r {
            left[j] = z - t[mu + 1 - j];
            right[j] = t[mu + j] - z;
            let mut saved = 0.0;
            for k in 0..j {
                let denom = right[k + 1] + left[j - k];
                let temp = if denom > 0.0 { values[k] / denom } else { 0.0 };
                values[k] = saved + right[k + 1] * temp;
                saved = left[j - k] * temp;
            }
            values[j] = saved;
        }
        Ok(mu + 1 - r)
    }

    /// Evaluates all `K` basis functions at `z`.
    pub fn eval(&self, z: f64) -> Result<Vec<f64>, SplineError> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(z, &mut out)?;
        Ok(out)
    }

    /// Writes `B(z)` into `out`, which must have length `K`.
    pub fn eval_into(&self, z: f64, out: &mut [f64]) -> Result<(), SplineError> {
        if out.len() != self.len() {
            return Err(SplineError::DimensionMismatch(format!(
                "output has length {}, basis has {} functions",
                out.len(),
                self.len()
            )));
        }
        let mut local = [0.0f64; 32];
        let start = self.eval_local(z, &mut local)?;
        out.fill(0.0);
        out[start..start + self.order].copy_from_slice(&local[..self.order]);
        Ok(())
    }

    /// Spline block `B(z_i)ᵀ` for every observation, `n × K`.
    pub fn basis_matrix(&self, z: &[f64]) -> Result<DMatrix<f64>, SplineError> {
        let k = self.len();
        let mut out = DMatrix::zeros(z.len(), k);
        let mut local = [0.0f64; 32];
        for (i, &zi) in z.iter().enumerate() {
            let start = self.eval_local(zi, &mut local)?;
            for j in 0..self.order {
                out[(i, start + j)] = local[j];
            }
        }
        Ok(out)
    }
}

/// Stacks covariates and spline evaluations into rows `w_i = (x_iᵀ, B(z_i)ᵀ)`.
/// No intercept column is added; the spline block spans constants.
pub fn design_matrix(
    basis: &SplineBasis,
    x: &DMatrix<f64>,
    z: &[f64],
) -> Result<DMatrix<f64>, SplineError> {
    let n = z.len();
    if x.nrows() != n {
        return Err(SplineError::DimensionMismatch(format!(
            "{} covariate rows but {} spline values",
            x.nrows(),
            n
        )));
    }
    let p = x.ncols();
    let k = basis.len();
    let b = basis.basis_matrix(z)?;
    let mut w = DMatrix::zeros(n, p + k);
    w.view_mut((0, 0), (n, p)).copy_from(x);
    w.view_mut((0, p), (n, k)).copy_from(&b);
    Ok(w)
}
