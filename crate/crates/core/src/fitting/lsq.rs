//! Damped Gauss-Newton (Levenberg-Marquardt) least squares with central
//! finite-difference Jacobians and box bounds.
//!
//! The solver minimizes `sum r_i(p)^2`. Steps solve
//! `(J^T J + lambda diag(J^T J)) dp = -J^T r` and are projected back into the
//! bounds. Iteration stops when both the relative step and the relative cost
//! decrease fall below `tolerance`, or when no damping level can lower the
//! cost any further (a numerical minimum).
//!
//! Callers should pass parameters of order one; the finite-difference step is
//! `max(1e-8, 1e-6 |p|)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::spectra::Spectrum;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::param("bounds", "lower and upper lengths differ"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::param("bounds", "lower bound exceeds upper bound"));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    fn clamp(&self, p: &mut [f64]) {
        for (x, (l, u)) in p.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        LsqOptions {
            max_iterations: 200,
            tolerance: 1e-10,
        }
    }
}

/// How the inverse normal matrix is turned into a covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceScaling {
    /// Residuals are already divided by their true sigmas.
    Absolute,
    /// Unit weights: scale by the reduced chi-square.
    ReducedChiSquare,
}

#[derive(Debug, Clone)]
pub struct LsqResult {
    pub params: Vec<f64>,
    /// `None` when the normal matrix at the solution is rank deficient.
    pub covariance: Option<DMatrix<f64>>,
    /// Sum of squared (weighted) residuals.
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub scaling: CovarianceScaling,
}

impl LsqResult {
    pub fn residual_norm(&self) -> f64 {
        self.chi2.sqrt()
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }

    pub fn sigma(&self, i: usize) -> Option<f64> {
        self.covariance.as_ref().map(|c| c[(i, i)].max(0.0).sqrt())
    }

    pub fn require_covariance(&self) -> Result<&DMatrix<f64>> {
        self.covariance
            .as_ref()
            .ok_or_else(|| Error::RankDeficient("covariance unavailable at the solution".into()))
    }
}

/// Minimizes the sum of squares of `residuals(p, out)` over `n_residuals`
/// residuals. Returns the solution even if its normal matrix is singular;
/// in that case `covariance` is `None`.
pub fn minimize<F>(
    residuals: F,
    n_residuals: usize,
    init: &[f64],
    bounds: Option<&Bounds>,
    opts: &LsqOptions,
    scaling: CovarianceScaling,
) -> Result<LsqResult>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = init.len();
    if n == 0 {
        return Err(Error::param("init", "no parameters"));
    }
    if n_residuals <= n {
        return Err(Error::InsufficientData(format!(
            "{n_residuals} residuals for {n} parameters"
        )));
    }
    let unbounded = Bounds::unbounded(n);
    let bounds = bounds.unwrap_or(&unbounded);
    if bounds.lower.len() != n {
        return Err(Error::param("bounds", "length does not match parameters"));
    }
    if !bounds.contains(init) {
        return Err(Error::param(
            "init",
            "initial parameters lie outside the bounds",
        ));
    }

    let eval = |p: &[f64], out: &mut Vec<f64>| -> f64 {
        residuals(p, out);
        out.iter().map(|r| r * r).sum::<f64>()
    };

    let mut p = init.to_vec();
    let mut r = vec![0.0; n_residuals];
    let mut cost = eval(&p, &mut r);
    if !cost.is_finite() {
        return Err(Error::param(
            "init",
            "model is not finite at the initial parameters",
        ));
    }
    let mut lambda = 1e-3;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; n_residuals];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(&residuals, &p, n_residuals, bounds);
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let max_diag = a.diagonal().max();

        let mut accepted = false;
        loop {
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12 * max_diag.max(1e-300));
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break;
                    }
                    continue;
                }
            };
            for i in 0..n {
                trial[i] = p[i] + step[i];
            }
            bounds.clamp(&mut trial);
            let step_norm = p
                .iter()
                .zip(&trial)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let p_norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if step_norm <= opts.tolerance * (p_norm + opts.tolerance) && lambda <= 1e-3 {
                // Undamped step is already negligible.
                converged = true;
                break;
            }
            let new_cost = eval(&trial, &mut r_trial);
            if new_cost.is_finite() && new_cost < cost {
                let rel_cost = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                let small_step = step_norm <= opts.tolerance * (p_norm + opts.tolerance);
                p.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut r_trial);
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if (small_step && rel_cost < opts.tolerance) || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // No damping level lowers the cost: numerical minimum.
            converged = true;
            break;
        }
    }

    if !converged {
        return Err(Error::NotConverged { iterations, cost });
    }

    let dof = n_residuals - n;
    let jac = jacobian(&residuals, &p, n_residuals, bounds);
    let a = jac.transpose() * &jac;
    let covariance = invert_normal_matrix(&a).map(|inv| match scaling {
        CovarianceScaling::Absolute => inv,
        CovarianceScaling::ReducedChiSquare => inv * (cost / dof as f64),
    });
    Ok(LsqResult {
        params: p,
        covariance,
        chi2: cost,
        dof,
        iterations,
        scaling,
    })
}

/// Fits `model(x, p)` to a spectrum by weighted least squares. Unweighted
/// spectra (all sigmas zero) use unit weights and a covariance scaled by the
/// reduced chi-square. A singular normal matrix at the solution is an error.
pub fn least_squares<M>(
    model: M,
    data: &Spectrum,
    init: &[f64],
    bounds: Option<&Bounds>,
    opts: &LsqOptions,
) -> Result<LsqResult>
where
    M: Fn(f64, &[f64]) -> f64,
{
    let res = fit_spectrum(model, data, init, bounds, opts)?;
    res.require_covariance()?;
    Ok(res)
}

/// As [`least_squares`] but returns a rank-deficient solution with
/// `covariance = None` instead of failing.
pub(crate) fn fit_spectrum<M>(
    model: M,
    data: &Spectrum,
    init: &[f64],
    bounds: Option<&Bounds>,
    opts: &LsqOptions,
) -> Result<LsqResult>
where
    M: Fn(f64, &[f64]) -> f64,
{
    let (weights, scaling) = spectrum_weights(data)?;
    let pts = data.points();
    minimize(
        |p, out| {
            for ((o, pt), w) in out.iter_mut().zip(pts).zip(&weights) {
                *o = (model(pt.detuning, p) - pt.value) * w;
            }
        },
        pts.len(),
        init,
        bounds,
        opts,
        scaling,
    )
}

/// Per-point weights `1 / sigma` and the matching covariance scaling.
pub(crate) fn spectrum_weights(data: &Spectrum) -> Result<(Vec<f64>, CovarianceScaling)> {
    if data.is_weighted() {
        Ok((
            data.points().iter().map(|p| 1.0 / p.sigma).collect(),
            CovarianceScaling::Absolute,
        ))
    } else if data.points().iter().all(|p| p.sigma == 0.0) {
        Ok((vec![1.0; data.len()], CovarianceScaling::ReducedChiSquare))
    } else {
        Err(Error::InvalidSpectrum(
            "sigmas must be either all positive or all zero".into(),
        ))
    }
}

fn jacobian<F>(residuals: &F, p: &[f64], m: usize, bounds: &Bounds) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut hi = vec![0.0; m];
    let mut lo = vec![0.0; m];
    let mut q = p.to_vec();
    for j in 0..n {
        let h = (1e-6 * p[j].abs()).max(1e-8);
        let up = (p[j] + h).min(bounds.upper[j]);
        let down = (p[j] - h).max(bounds.lower[j]);
        q[j] = up;
        residuals(&q, &mut hi);
        q[j] = down;
        residuals(&q, &mut lo);
        q[j] = p[j];
        let span = up - down;
        if span > 0.0 {
            for i in 0..m {
                jac[(i, j)] = (hi[i] - lo[i]) / span;
            }
        }
    }
    jac
}

/// Inverse of a symmetric positive (semi)definite normal matrix, or `None`
/// when it is numerically singular. Singularity is judged on the
/// diagonally-normalized matrix so that parameter units do not matter.
fn invert_normal_matrix(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return None;
    }
    let scale = DVector::from_iterator(n, d.iter().map(|x| 1.0 / x.sqrt()));
    let mut c = a.clone();
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] *= scale[i] * scale[j];
        }
    }
    let eig = SymmetricEigen::new(c.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-12 * max) {
        return None;
    }
    let inv = c.cholesky()?.inverse();
    let mut out = inv;
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] *= scale[i] * scale[j];
        }
    }
    Some(out)
}
