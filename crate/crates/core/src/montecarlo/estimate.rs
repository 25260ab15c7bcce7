//! Estimators on final ensemble positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Sampling, TorusGridField};
use crate::linalg::Matrix;

/// `Var(X_T) / 2T` with per-entry standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusivityEstimate {
    pub matrix: Matrix,
    pub stderr: Matrix,
    pub particles: usize,
    pub horizon: f64,
    pub h: Option<f64>,
}

fn check(positions: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || !positions.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument(format!(
            "{} coordinates do not split into points of dimension {dim}",
            positions.len()
        )));
    }
    Ok(positions.len() / dim)
}

/// Componentwise sample mean of flat points.
pub(crate) fn mean(positions: &[f64], dim: usize) -> Vec<f64> {
    let m = positions.len() / dim;
    let mut s = vec![0.0; dim];
    for p in positions.chunks_exact(dim) {
        for (a, v) in s.iter_mut().zip(p) {
            *a += v;
        }
    }
    s.iter().map(|v| v / m as f64).collect()
}

/// `Σ (x − x̄)(x − x̄)ᵀ / (2MT)` over the flat point list `positions`.
///
/// Standard errors use the delta method: entry `(i, j)` is the mean of
/// `ψ = (x_i − x̄_i)(x_j − x̄_j)`, so its error is `sd(ψ)/√M / 2T`.
pub fn effective_diffusivity_estimate(positions: &[f64], dim: usize, horizon: f64) -> Result<DiffusivityEstimate> {
    let m = check(positions, dim)?;
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 particles, got {m}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let xbar = mean(positions, dim);
    let mut s1 = vec![0.0; dim * dim];
    let mut s2 = vec![0.0; dim * dim];
    let mut dev = vec![0.0; dim];
    for p in positions.chunks_exact(dim) {
        for i in 0..dim {
            dev[i] = p[i] - xbar[i];
        }
        for i in 0..dim {
            for j in i..dim {
                let psi = dev[i] * dev[j];
                s1[i * dim + j] += psi;
                s2[i * dim + j] += psi * psi;
            }
        }
    }
    let mf = m as f64;
    let scale = 1.0 / (2.0 * horizon);
    let mut matrix = Matrix::zeros(dim);
    let mut stderr = Matrix::zeros(dim);
    for i in 0..dim {
        for j in i..dim {
            let mu = s1[i * dim + j] / mf;
            let var = (s2[i * dim + j] / mf - mu * mu).max(0.0);
            let v = mu * scale;
            let e = (var / mf).sqrt() * scale;
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
            stderr[(i, j)] = e;
            stderr[(j, i)] = e;
        }
    }
    Ok(DiffusivityEstimate { matrix, stderr, particles: m, horizon, h: None })
}

/// Occupation density of wrapped samples on a `binsᵈ` grid, normalized to
/// integrate to 1.
pub fn invariant_histogram(samples: &[f64], dim: usize, bins: usize) -> Result<TorusGridField> {
    let m = check(samples, dim)?;
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins per axis, got {bins}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut counts = vec![0u64; bins.pow(dim as u32)];
    for p in samples.chunks_exact(dim) {
        counts[bin_index(p, bins)] += 1;
    }
    Ok(density_from_counts(dim, bins, &counts))
}

/// Cell of a point after wrapping each coordinate into `[0,1)`.
#[inline]
pub(crate) fn bin_index(x: &[f64], bins: usize) -> usize {
    let mut idx = 0;
    for &v in x {
        let w = v - v.floor();
        let k = ((w * bins as f64) as usize).min(bins - 1);
        idx = idx * bins + k;
    }
    idx
}

pub(crate) fn density_from_counts(dim: usize, bins: usize, counts: &[u64]) -> TorusGridField {
    let total: u64 = counts.iter().sum();
    let cells = counts.len() as f64;
    let values = counts.iter().map(|&c| c as f64 * cells / total.max(1) as f64).collect();
    TorusGridField { dim, n: bins, components: 1, sampling: Sampling::CellAverage, values }
}

/// Mean of `(x − x0)/T` with its standard error.
pub(crate) fn mean_drift(positions: &[f64], dim: usize, x0: &[f64], horizon: f64) -> (Vec<f64>, Vec<f64>) {
    let m = (positions.len() / dim) as f64;
    let xbar = mean(positions, dim);
    let mut var = vec![0.0; dim];
    for p in positions.chunks_exact(dim) {
        for i in 0..dim {
            let dv = p[i] - xbar[i];
            var[i] += dv * dv;
        }
    }
    let drift = (0..dim).map(|i| (xbar[i] - x0[i]) / horizon).collect();
    let se = var.iter().map(|v| (v / m / m).sqrt() / horizon).collect();
    (drift, se)
}
