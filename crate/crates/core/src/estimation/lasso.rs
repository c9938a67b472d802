use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::covariance::RegressionPair;
use crate::error::{Error, Result};

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Euclidean projection onto `{w : ‖w‖₁ ≤ r}` by sorting magnitudes.
/// An infinite radius returns `v` unchanged.
pub fn project_l1_ball(v: &[f64], r: f64) -> Vec<f64> {
    assert!(r > 0.0, "radius must be positive");
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= r {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in mags.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - r) / (i + 1) as f64;
        if u > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| soft_threshold(x, theta)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoOptions {
    pub max_iter: usize,
    /// Relative objective change below which the iteration may stop.
    pub tol: f64,
    /// Gradient-mapping residual required alongside `tol`.
    pub stationarity_tol: f64,
    pub record_trace: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            max_iter: 50_000,
            tol: 1e-9,
            stationarity_tol: 1e-7,
            record_trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LassoSolution {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// `L ‖β − prox(β − ∇f(β)/L)‖_∞`.
    pub stationarity: f64,
    /// Objective after each iteration, when requested.
    pub trace: Vec<f64>,
}

impl LassoSolution {
    /// CSV with columns `iteration,objective`.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "objective"])?;
        for (i, f) in self.trace.iter().enumerate() {
            out.write_record([(i + 1).to_string(), format!("{f:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `½ βᵀΓβ − γᵀβ + λ‖β‖₁`.
pub fn lasso_objective(
    gamma: &DMatrix<f64>,
    gamma_vec: &DVector<f64>,
    lambda: f64,
    beta: &DVector<f64>,
) -> f64 {
    0.5 * beta.dot(&(gamma * beta)) - gamma_vec.dot(beta) + lambda * beta.lp_norm(1)
}

/// Solves the modified Lasso for a regression pair.
pub fn modified_lasso_solve(
    pair: &RegressionPair,
    lambda: f64,
    radius: f64,
    opts: &LassoOptions,
) -> Result<LassoSolution> {
    modified_lasso(&pair.gamma, &pair.gamma_vec, lambda, radius, opts)
}

/// `min ½ βᵀΓβ − γᵀβ + λ‖β‖₁` subject to `‖β‖₁ ≤ radius`, by monotone
/// accelerated proximal gradient with step `1/‖Γ‖₂`. `Γ` may be indefinite.
pub fn modified_lasso(
    gamma: &DMatrix<f64>,
    gamma_vec: &DVector<f64>,
    lambda: f64,
    radius: f64,
    opts: &LassoOptions,
) -> Result<LassoSolution> {
    let k = gamma_vec.len();
    if gamma.nrows() != k || gamma.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "Γ is {}x{}, γ has length {k}",
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    if lambda.is_nan() || lambda < 0.0 || radius.is_nan() || radius <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "need λ >= 0 and R > 0, got λ = {lambda}, R = {radius}"
        )));
    }
    let objective = |b: &DVector<f64>| lasso_objective(gamma, gamma_vec, lambda, b);
    if k == 0 {
        return Ok(LassoSolution {
            beta: DVector::zeros(0),
            objective: 0.0,
            iterations: 0,
            stationarity: 0.0,
            trace: Vec::new(),
        });
    }

    let lip = SymmetricEigen::new(gamma.clone())
        .eigenvalues
        .amax()
        .max(1e-12);
    let step = 1.0 / lip;
    let prox = |v: &DVector<f64>| -> DVector<f64> {
        let shrunk: Vec<f64> = v
            .iter()
            .map(|&x| soft_threshold(x, step * lambda))
            .collect();
        DVector::from_vec(project_l1_ball(&shrunk, radius))
    };
    let grad = |b: &DVector<f64>| gamma * b - gamma_vec;
    let residual = |b: &DVector<f64>| (b - prox(&(b - grad(b) * step))).amax() * lip;

    if lambda == 0.0 {
        if let Some(chol) = gamma.clone().cholesky() {
            let beta = chol.solve(gamma_vec);
            if beta.lp_norm(1) <= radius {
                return Ok(LassoSolution {
                    objective: objective(&beta),
                    stationarity: residual(&beta),
                    beta,
                    iterations: 0,
                    trace: Vec::new(),
                });
            }
        }
    }

    let mut x = DVector::zeros(k);
    let mut fx = objective(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut trace = Vec::new();
    let mut res = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let z = prox(&(&y - grad(&y) * step));
        let fz = objective(&z);
        let (x_new, f_new) = if fz <= fx {
            (z.clone(), fz)
        } else {
            (x.clone(), fx)
        };
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if fz > fx {
            // Restart the momentum after a rejected step.
            y = x_new.clone();
            t = 1.0;
        } else {
            y = &x_new + (&z - &x_new) * (t / t_new) + (&x_new - &x) * ((t - 1.0) / t_new);
            t = t_new;
        }
        let change = (fx - f_new).abs() / fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        if opts.record_trace {
            trace.push(fx);
        }
        if change < opts.tol {
            res = residual(&x);
            if res < opts.stationarity_tol {
                return Ok(LassoSolution {
                    beta: x,
                    objective: fx,
                    iterations: iter,
                    stationarity: res,
                    trace,
                });
            }
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual: if res.is_finite() { res } else { residual(&x) },
    })
}

/// `‖(Γ + εI)⁻¹ γ‖₁` with `ε` lifting the spectrum to at least `1e-3`
/// times the mean diagonal.
pub fn ridge_l1_norm(gamma: &DMatrix<f64>, gamma_vec: &DVector<f64>) -> f64 {
    let k = gamma_vec.len();
    if k == 0 {
        return 0.0;
    }
    let floor = 1e-3 * (gamma.trace() / k as f64).abs().max(1e-12);
    let min_eig = SymmetricEigen::new(gamma.clone()).eigenvalues.min();
    let eps = (floor - min_eig).max(0.0) + floor;
    let shifted = gamma + DMatrix::identity(k, k) * eps;
    match shifted.cholesky() {
        Some(c) => c.solve(gamma_vec).lp_norm(1),
        None => 0.0,
    }
}

/// `R = b₀ √d` with `b₀ = 2 ‖β_ridge‖₁`, floored to stay positive.
pub fn default_radius(pair: &RegressionPair, d: usize) -> f64 {
    let b0 = 2.0 * ridge_l1_norm(&pair.gamma, &pair.gamma_vec);
    (b0 * (d.max(1) as f64).sqrt()).max(1e-6)
}
