use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GlassoOptions {
    pub max_iter: usize,
    /// Absolute and relative ADMM residual tolerance.
    pub tol: f64,
    /// On divergence, retry with `Σ̂ + (|λ_min| + 1e-4) I`.
    pub shift_on_unbounded: bool,
    /// Newton refinement on the detected support.
    pub polish: bool,
    /// Starting point for the sparse iterate; identity scaled by the
    /// inverse diagonal of `Σ̂` otherwise.
    pub init: Option<DMatrix<f64>>,
    pub record_trace: bool,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        GlassoOptions {
            max_iter: 20_000,
            tol: 1e-9,
            shift_on_unbounded: true,
            polish: true,
            init: None,
            record_trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlassoTraceRow {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub objective: f64,
    pub rho: f64,
}

#[derive(Clone, Debug)]
pub struct GlassoSolution {
    /// Sparse positive definite estimate `Θ̂`.
    pub theta: DMatrix<f64>,
    /// `Θ̂⁻¹`.
    pub covariance: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Diagonal shift added to the input, zero if none was needed.
    pub shift: f64,
    pub polished: bool,
    pub trace: Vec<GlassoTraceRow>,
}

impl GlassoSolution {
    /// CSV with columns `iteration,primal,dual,objective,rho`.
    pub fn write_diagnostics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "primal", "dual", "objective", "rho"])?;
        for r in &self.trace {
            out.write_record([
                r.iteration.to_string(),
                format!("{:e}", r.primal),
                format!("{:e}", r.dual),
                format!("{:e}", r.objective),
                format!("{:e}", r.rho),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `tr(SΘ) − log det Θ + λ Σ_{s≠t} |Θ_st|`, infinite when `Θ` is not PD.
pub fn glasso_objective(s: &DMatrix<f64>, theta: &DMatrix<f64>, lambda: f64) -> f64 {
    let Some(chol) = theta.clone().cholesky() else {
        return f64::INFINITY;
    };
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    (s.component_mul(theta)).sum() - logdet + lambda * off_diag_l1(theta)
}

fn off_diag_l1(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    let mut acc = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                acc += m[(i, j)].abs();
            }
        }
    }
    acc
}

/// Largest violation of the optimality conditions at `theta`:
/// `|S − W|` on the diagonal, `|S_st − W_st + λ sign(Θ_st)|` on the
/// support and `(|S_st − W_st| − λ)₊` off it, with `W = Θ⁻¹`.
pub fn kkt_residual(s: &DMatrix<f64>, theta: &DMatrix<f64>, lambda: f64) -> f64 {
    let Some(w) = theta.clone().cholesky().map(|c| c.inverse()) else {
        return f64::INFINITY;
    };
    kkt_with_inverse(s, theta, &w, lambda)
}

fn kkt_with_inverse(s: &DMatrix<f64>, theta: &DMatrix<f64>, w: &DMatrix<f64>, lambda: f64) -> f64 {
    let p = s.nrows();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let g = s[(i, j)] - w[(i, j)];
            let r = if i == j {
                g.abs()
            } else if theta[(i, j)] != 0.0 {
                (g + lambda * theta[(i, j)].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(r);
        }
    }
    worst
}

/// Graphical Lasso by ADMM with an eigendecomposition step for the
/// log-determinant. The penalty is off-diagonal only.
pub fn graphical_lasso_solve(
    s: &DMatrix<f64>,
    lambda: f64,
    opts: &GlassoOptions,
) -> Result<GlassoSolution> {
    let p = s.nrows();
    if s.ncols() != p || p == 0 {
        return Err(Error::DimensionMismatch(
            "covariance must be square and nonempty".into(),
        ));
    }
    if (s - s.transpose()).amax() > 1e-12 * s.amax().max(1.0) {
        return Err(Error::InvalidInput("covariance is not symmetric".into()));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidInput(format!(
            "λ must be nonnegative, got {lambda}"
        )));
    }
    let indefinite = s.clone().cholesky().is_none();
    let first = match admm(s, lambda, opts) {
        // On a non-PD input, failure to settle means the iterates are
        // drifting off along a negative direction.
        Err(Error::NotConverged { .. }) if indefinite => Err(Error::UnboundedObjective),
        other => other,
    };
    match first {
        Err(Error::UnboundedObjective) if opts.shift_on_unbounded => {
            let min_eig = SymmetricEigen::new(s.clone()).eigenvalues.min();
            let shift = min_eig.abs() + 1e-4;
            log::warn!("graphical lasso objective unbounded; shifting the input by {shift:.3e}");
            let shifted = s + DMatrix::identity(p, p) * shift;
            let mut sol = admm(&shifted, lambda, opts)?;
            sol.shift = shift;
            Ok(sol)
        }
        other => other,
    }
}

fn admm(s: &DMatrix<f64>, lambda: f64, opts: &GlassoOptions) -> Result<GlassoSolution> {
    let p = s.nrows();
    let mut z = match &opts.init {
        Some(m) if m.nrows() == p && m.ncols() == p => m.clone(),
        Some(_) => {
            return Err(Error::DimensionMismatch(
                "initial point has the wrong shape".into(),
            ))
        }
        None => DMatrix::from_diagonal(&s.diagonal().map(|v| if v > 0.0 { 1.0 / v } else { 1.0 })),
    };
    let mut u = DMatrix::<f64>::zeros(p, p);
    let mut rho = 1.0f64;
    let mut theta = z.clone();
    let mut trace = Vec::new();
    let scale = s.amax().max(1e-300);
    let mut iterations = opts.max_iter;
    let mut converged = false;

    for iter in 1..=opts.max_iter {
        let rhs = (&z - &u) * rho - s;
        let eig = SymmetricEigen::new(rhs);
        let vals = eig
            .eigenvalues
            .map(|l| (l + (l * l + 4.0 * rho).sqrt()) / (2.0 * rho));
        theta = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        theta = (&theta + theta.transpose()) * 0.5;

        let z_old = z.clone();
        let v = &theta + &u;
        let k = lambda / rho;
        z = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                v[(i, j)]
            } else {
                super::lasso::soft_threshold(v[(i, j)], k)
            }
        });
        u += &theta - &z;

        let primal = (&theta - &z).norm();
        let dual = rho * (&z - &z_old).norm();
        let eps_pri = opts.tol * (p as f64) + opts.tol * theta.norm().max(z.norm());
        let eps_dual = opts.tol * (p as f64) + opts.tol * rho * u.norm();

        let growth = vals.amax();
        if !growth.is_finite() || growth > 1e12 / scale.min(1.0) {
            return Err(Error::UnboundedObjective);
        }
        if opts.record_trace {
            trace.push(GlassoTraceRow {
                iteration: iter,
                primal,
                dual,
                objective: glasso_objective(s, &theta, lambda),
                rho,
            });
        }
        if primal < eps_pri && dual < eps_dual {
            iterations = iter;
            converged = true;
            break;
        }
        if primal > 10.0 * dual {
            rho *= 2.0;
            u /= 2.0;
        } else if dual > 10.0 * primal {
            rho /= 2.0;
            u *= 2.0;
        }
    }

    // The sparse iterate is the estimate when it is PD; otherwise fall back
    // to the smooth one.
    let mut est = if z.clone().cholesky().is_some() {
        z
    } else {
        theta
    };
    let mut polished = false;
    if opts.polish {
        if let Some(better) = polish(s, &est, lambda) {
            est = better;
            polished = true;
        }
    }
    let w = est
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::UnboundedObjective)?;
    let kkt = kkt_with_inverse(s, &est, &w, lambda);
    if !converged && !polished {
        return Err(Error::NotConverged {
            iterations: opts.max_iter,
            residual: kkt,
        });
    }
    Ok(GlassoSolution {
        objective: glasso_objective(s, &est, lambda),
        covariance: w,
        theta: est,
        iterations,
        kkt_residual: kkt,
        shift: 0.0,
        polished,
        trace,
    })
}

/// Newton's method on the smooth problem obtained by fixing the support
/// and signs of `start`. Returns `None` when a sign flips, the result is
/// not better in KKT terms, or an inactive entry violates its bound.
fn polish(s: &DMatrix<f64>, start: &DMatrix<f64>, lambda: f64) -> Option<DMatrix<f64>> {
    let p = s.nrows();
    let mut vars: Vec<(usize, usize)> = (0..p).map(|i| (i, i)).collect();
    for i in 0..p {
        for j in i + 1..p {
            if start[(i, j)] != 0.0 {
                vars.push((i, j));
            }
        }
    }
    let signs: Vec<f64> = vars
        .iter()
        .map(|&(i, j)| if i == j { 0.0 } else { start[(i, j)].signum() })
        .collect();
    let nv = vars.len();
    let mut theta = start.clone();
    let f = |t: &DMatrix<f64>| {
        glasso_objective(s, t, 0.0)
            + 2.0
                * lambda
                * vars
                    .iter()
                    .zip(&signs)
                    .map(|(&(i, j), sg)| sg * t[(i, j)])
                    .sum::<f64>()
    };
    let mut fval = f(&theta);
    for _ in 0..50 {
        let w = theta.clone().cholesky()?.inverse();
        let grad = DVector::from_fn(nv, |a, _| {
            let (i, j) = vars[a];
            let g = s[(i, j)] - w[(i, j)] + lambda * signs[a];
            if i == j {
                g
            } else {
                2.0 * g
            }
        });
        if grad.amax() < 1e-13 {
            break;
        }
        let hess = DMatrix::from_fn(nv, nv, |a, b| {
            let (i, j) = vars[a];
            let (k, l) = vars[b];
            if i == j && k == l {
                w[(i, k)] * w[(k, i)]
            } else if i == j {
                2.0 * w[(i, k)] * w[(l, i)]
            } else if k == l {
                2.0 * w[(k, i)] * w[(j, k)]
            } else {
                2.0 * (w[(j, k)] * w[(l, i)] + w[(j, l)] * w[(k, i)])
            }
        });
        let dir = -hess.cholesky()?.solve(&grad);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand = theta.clone();
            for (a, &(i, j)) in vars.iter().enumerate() {
                cand[(i, j)] += step * dir[a];
                cand[(j, i)] = cand[(i, j)];
            }
            let fc = f(&cand);
            if fc <= fval + 1e-4 * step * grad.dot(&dir)
                || (fc.is_finite() && fc <= fval && step < 1e-6)
            {
                theta = cand;
                fval = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    for (a, &(i, j)) in vars.iter().enumerate() {
        if i != j && theta[(i, j)].signum() != signs[a] {
            return None;
        }
    }
    let w = theta.clone().cholesky()?.inverse();
    let new_kkt = kkt_with_inverse(s, &theta, &w, lambda);
    let old_kkt = kkt_residual(s, start, lambda);
    (new_kkt < old_kkt).then_some(theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.4, 0.1, 0.05, 0.4, 1.2, 0.3, 0.1, 0.1, 0.3, 0.9, 0.35, 0.05, 0.1, 0.35, 1.1,
            ],
        )
    }

    #[test]
    fn zero_lambda_inverts() {
        let s = example();
        let sol = graphical_lasso_solve(&s, 0.0, &GlassoOptions::default()).unwrap();
        let inv = s.clone().try_inverse().unwrap();
        assert!((sol.theta - inv).amax() < 1e-6);
        assert!(sol.kkt_residual < 1e-7);
    }

    #[test]
    fn large_lambda_is_diagonal() {
        let s = example();
        let sol = graphical_lasso_solve(&s, 0.41, &GlassoOptions::default()).unwrap();
        for i in 0..4 {
            assert!((sol.theta[(i, i)] - 1.0 / s[(i, i)]).abs() < 1e-8);
            for j in 0..4 {
                if i != j {
                    assert_eq!(sol.theta[(i, j)], 0.0);
                }
            }
        }
        assert!(sol.kkt_residual < 1e-7);
    }

    #[test]
    fn moderate_lambda_kkt() {
        let s = example();
        let sol = graphical_lasso_solve(&s, 0.08, &GlassoOptions::default()).unwrap();
        assert!(sol.kkt_residual < 1e-7, "kkt {}", sol.kkt_residual);
        assert!(sol.theta.clone().cholesky().is_some());
    }

    #[test]
    fn initialization_invariance() {
        let s = example();
        let a = graphical_lasso_solve(&s, 0.05, &GlassoOptions::default()).unwrap();
        let opts = GlassoOptions {
            init: Some(DMatrix::identity(4, 4) * 3.0),
            ..Default::default()
        };
        let b = graphical_lasso_solve(&s, 0.05, &opts).unwrap();
        assert!((a.theta - b.theta).amax() < 1e-6);
    }

    #[test]
    fn indefinite_input_is_shifted_or_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let sol = graphical_lasso_solve(&s, 0.01, &GlassoOptions::default()).unwrap();
        assert!((sol.shift - 1.0001).abs() < 1e-9);
        let strict = GlassoOptions {
            shift_on_unbounded: false,
            ..Default::default()
        };
        assert!(matches!(
            graphical_lasso_solve(&s, 0.01, &strict),
            Err(Error::UnboundedObjective)
        ));
    }

    #[test]
    fn diagnostics_csv() {
        let opts = GlassoOptions {
            record_trace: true,
            ..Default::default()
        };
        let sol = graphical_lasso_solve(&example(), 0.1, &opts).unwrap();
        assert!(!sol.trace.is_empty());
        let mut buf = Vec::new();
        sol.write_diagnostics_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,primal,dual,objective,rho\n"));
        assert_eq!(text.lines().count(), sol.trace.len() + 1);
    }
}
