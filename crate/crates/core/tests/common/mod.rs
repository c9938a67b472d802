//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `½ βᵀΓβ − γᵀβ + λ‖β‖₁`, written out without the library.
pub fn lasso_value(gamma: &DMatrix<f64>, g: &DVector<f64>, lambda: f64, b: &[f64]) -> f64 {
    let k = b.len();
    let mut quad = 0.0;
    for i in 0..k {
        for j in 0..k {
            quad += b[i] * gamma[(i, j)] * b[j];
        }
    }
    let lin: f64 = (0..k).map(|i| g[i] * b[i]).sum();
    let l1: f64 = b.iter().map(|x| x.abs()).sum();
    0.5 * quad - lin + lambda * l1
}

/// Minimizes the modified Lasso objective over the ℓ1 ball by exhaustive
/// grid search, then repeatedly re-grids a shrinking box around the best
/// point. Returns `(value, argmin)`.
pub fn lasso_grid_oracle(
    gamma: &DMatrix<f64>,
    g: &DVector<f64>,
    lambda: f64,
    radius: f64,
) -> (f64, Vec<f64>) {
    let k = g.len();
    let mut center = vec![0.0; k];
    let mut half = radius;
    let mut best = (lasso_value(gamma, g, lambda, &center), center.clone());
    let steps = 10usize;
    for _ in 0..40 {
        let h = 2.0 * half / steps as f64;
        let mut idx = vec![0usize; k];
        loop {
            let b: Vec<f64> = (0..k)
                .map(|i| center[i] - half + h * idx[i] as f64)
                .collect();
            if b.iter().map(|x| x.abs()).sum::<f64>() <= radius {
                let v = lasso_value(gamma, g, lambda, &b);
                if v < best.0 {
                    best = (v, b);
                }
            }
            let mut d = 0;
            while d < k {
                idx[d] += 1;
                if idx[d] <= steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == k {
                break;
            }
        }
        center = best.1.clone();
        half *= 0.6;
        if half < 1e-7 {
            break;
        }
    }
    best
}

/// ℓ1-ball projection by bisection on the soft-threshold level.
pub fn project_by_bisection(v: &[f64], r: f64) -> Vec<f64> {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= r {
        return v.to_vec();
    }
    let shrink = |t: f64| -> Vec<f64> {
        v.iter()
            .map(|&x| x.signum() * (x.abs() - t).max(0.0))
            .collect()
    };
    let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |a, x| a.max(x.abs())));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shrink(mid).iter().map(|x| x.abs()).sum::<f64>() > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    shrink(hi)
}

/// Random symmetric matrix `AᵀA / k + shift·I`; a negative shift makes it
/// indefinite, like a corrected covariance from heavily erased data.
pub fn random_gram<R: Rng>(k: usize, shift: f64, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k + 2, k, |_, _| rng.gen_range(-1.0..1.0));
    (a.transpose() * a) / k as f64 + DMatrix::identity(k, k) * shift
}
