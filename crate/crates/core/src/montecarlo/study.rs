//! Convergence studies across time steps.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{simulate_ensemble, EnsembleConfig, EnsembleResult};
use crate::coeffs::Problem;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::schemes::SchemeKind;

/// Points whose standard error exceeds this fraction of their error are
/// left out of slope fits.
pub const NOISE_GATE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StudyReference {
    /// A known matrix, e.g. from the Eulerian solver.
    Fixed { matrix: Matrix },
    /// A run at step `h` with the same seed, horizon and Brownian paths.
    /// Every studied step must be an integer multiple of `h`.
    FineStep { h: f64, scheme: SchemeKind },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub h: f64,
    pub scheme: SchemeKind,
    pub estimate: Matrix,
    pub stderr: Matrix,
    /// Entrywise `|estimate − reference|`.
    pub error: Matrix,
    /// Standard error of each entry of `error` (paired for fine-step references).
    pub error_stderr: Matrix,
    pub error_frobenius: f64,
    pub error_frobenius_stderr: f64,
    pub failures: usize,
    pub wallclock_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Whether each point passed the noise gate.
    pub used: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub reference: Matrix,
    pub reference_stderr: Option<Matrix>,
    pub slope_frobenius: SlopeFit,
    /// Fits of the diagonal entries, in order.
    pub slope_diagonal: Vec<SlopeFit>,
    pub horizon: f64,
    pub particles: usize,
}

/// Ordinary least-squares slope of `log err` against `log h`.
pub fn fit_log_slope(h: &[f64], err: &[f64]) -> Result<f64> {
    fit(h, err).map(|(s, _)| s)
}

fn fit(h: &[f64], err: &[f64]) -> Result<(f64, f64)> {
    if h.len() != err.len() || h.len() < 2 {
        return Err(Error::InvalidArgument("slope fit needs at least two (h, error) pairs".into()));
    }
    if h.iter().chain(err).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("slope fit needs positive finite values".into()));
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope fit needs distinct step sizes".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope over the points with `stderr ≤ gate · err`; `None` if fewer than
/// two points survive.
pub fn gated_slope(h: &[f64], err: &[f64], stderr: &[f64], gate: f64) -> SlopeFit {
    let used: Vec<bool> = err.iter().zip(stderr).map(|(&e, &s)| e > 0.0 && s <= gate * e).collect();
    let hs: Vec<f64> = h.iter().zip(&used).filter(|(_, &u)| u).map(|(v, _)| *v).collect();
    let es: Vec<f64> = err.iter().zip(&used).filter(|(_, &u)| u).map(|(v, _)| *v).collect();
    match fit(&hs, &es) {
        Ok((s, c)) => SlopeFit { slope: Some(s), intercept: Some(c), used },
        Err(_) => SlopeFit { slope: None, intercept: None, used },
    }
}

/// Per-particle second moments `ψ_ij = (x_i − x̄_i)(x_j − x̄_j)` over the
/// particles flagged in `mask`.
fn moments(positions: &[f64], d: usize, mask: &[bool]) -> Vec<f64> {
    let alive: Vec<&[f64]> = positions.chunks_exact(d).zip(mask).filter(|(_, &m)| m).map(|(p, _)| p).collect();
    let m = alive.len() as f64;
    let mut mean = vec![0.0; d];
    for p in &alive {
        for i in 0..d {
            mean[i] += p[i];
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    let mut out = Vec::with_capacity(alive.len() * d * d);
    for p in &alive {
        for i in 0..d {
            for j in 0..d {
                out.push((p[i] - mean[i]) * (p[j] - mean[j]));
            }
        }
    }
    out
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut s) = (0.0, 0.0);
    for v in values.clone() {
        n += 1.0;
        s += v;
    }
    let mu = s / n;
    let var = values.map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

/// Error of `run` against the reference with delta-method standard errors.
/// `paired` carries the reference run's positions for paired differences.
fn error_with_stderr(
    run: &EnsembleResult,
    reference: &Matrix,
    paired: Option<&EnsembleResult>,
    d: usize,
    horizon: f64,
) -> (Matrix, Matrix, f64, f64) {
    let mask: Vec<bool> = match paired {
        Some(r) => run
            .positions
            .chunks_exact(d)
            .zip(r.positions.chunks_exact(d))
            .map(|(a, b)| a[0].is_finite() && b[0].is_finite())
            .collect(),
        None => run.positions.chunks_exact(d).map(|a| a[0].is_finite()).collect(),
    };
    let m = mask.iter().filter(|&&v| v).count();
    let scale = 1.0 / (2.0 * horizon);
    let psi = moments(&run.positions, d, &mask);
    let diff: Vec<f64> = match paired {
        Some(r) => {
            let psi_ref = moments(&r.positions, d, &mask);
            psi.iter().zip(&psi_ref).map(|(a, b)| a - b).collect()
        }
        None => psi,
    };
    let dd = d * d;
    let mut delta = Matrix::zeros(d);
    let mut se = Matrix::zeros(d);
    for ij in 0..dd {
        let (mu, sd) = mean_sd(diff.iter().skip(ij).step_by(dd).copied());
        let offset = if paired.is_some() { 0.0 } else { reference.as_slice()[ij] };
        delta[(ij / d, ij % d)] = mu * scale - offset;
        se[(ij / d, ij % d)] = sd / (m as f64).sqrt() * scale;
    }
    let norm = delta.frobenius_norm();
    let se_f = if norm > 0.0 {
        let w: Vec<f64> = delta.as_slice().iter().map(|v| v / norm).collect();
        let g = diff.chunks_exact(dd).map(|c| c.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
        mean_sd(g).1 / (m as f64).sqrt() * scale
    } else {
        0.0
    };
    let abs = Matrix::from_row_major(d, delta.as_slice().iter().map(|v| v.abs()).collect());
    (abs, se, norm, se_f)
}

/// Runs `base` at each step in `h_list` and fits error slopes.
///
/// All runs share the seed and, through Brownian sub-stepping, the same
/// Brownian paths: the run at `h` uses `h / h₀` base increments per step,
/// where `h₀` is the reference step (fine-step reference) or the smallest
/// studied step (fixed reference).
pub fn convergence_study(
    problem: &Problem,
    h_list: &[f64],
    base: &EnsembleConfig,
    reference: &StudyReference,
) -> Result<StudyTable> {
    let d = problem.dim();
    let mut distinct = h_list.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 || distinct.len() != h_list.len() {
        return Err(Error::InvalidArgument("convergence study needs at least 3 distinct time steps".into()));
    }
    if distinct.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidArgument("time steps must be positive".into()));
    }
    let h0 = match reference {
        StudyReference::FineStep { h, .. } => *h,
        StudyReference::Fixed { matrix } => {
            if matrix.dim() != d {
                return Err(Error::InvalidArgument(format!("reference must be {d}x{d}")));
            }
            distinct[0]
        }
    };
    let base_steps = (base.horizon / h0).round() as usize;
    let horizon = base_steps as f64 * h0;
    let mut substeps = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let k = (h / h0).round() as usize;
        if k == 0 || ((k as f64) * h0 - h).abs() > 1e-9 * h {
            return Err(Error::InvalidArgument(format!("time step {h} is not a multiple of {h0}")));
        }
        if !base_steps.is_multiple_of(k) {
            return Err(Error::InvalidArgument(format!("horizon {horizon} is not a multiple of time step {h}")));
        }
        substeps.push(k);
    }

    let config_for = |h: f64, kind: SchemeKind, k: usize| {
        let mut c = base.clone();
        c.scheme.h = h;
        c.scheme.kind = kind;
        c.horizon = horizon;
        c.brownian_substeps = k;
        c.histogram_bins = 0;
        c
    };

    let (ref_matrix, ref_stderr, ref_run) = match reference {
        StudyReference::Fixed { matrix } => (matrix.clone(), None, None),
        StudyReference::FineStep { h, scheme } => {
            let r = simulate_ensemble(problem, &config_for(*h, *scheme, 1))?;
            (r.diffusivity.matrix.clone(), Some(r.diffusivity.stderr.clone()), Some(r))
        }
    };

    let mut rows = Vec::with_capacity(h_list.len());
    for (&h, &k) in h_list.iter().zip(&substeps) {
        let start = Instant::now();
        let run = simulate_ensemble(problem, &config_for(h, base.scheme.kind, k))?;
        let (error, error_stderr, error_frobenius, error_frobenius_stderr) =
            error_with_stderr(&run, &ref_matrix, ref_run.as_ref(), d, horizon);
        rows.push(StudyRow {
            h,
            scheme: base.scheme.kind,
            estimate: run.diffusivity.matrix.clone(),
            stderr: run.diffusivity.stderr.clone(),
            error,
            error_stderr,
            error_frobenius,
            error_frobenius_stderr,
            failures: run.failures,
            wallclock_seconds: start.elapsed().as_secs_f64(),
        });
    }

    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let col = |f: &dyn Fn(&StudyRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let slope_frobenius =
        gated_slope(&hs, &col(&|r| r.error_frobenius), &col(&|r| r.error_frobenius_stderr), NOISE_GATE);
    let slope_diagonal = (0..d)
        .map(|i| gated_slope(&hs, &col(&|r| r.error[(i, i)]), &col(&|r| r.error_stderr[(i, i)]), NOISE_GATE))
        .collect();
    Ok(StudyTable {
        rows,
        reference: ref_matrix,
        reference_stderr: ref_stderr,
        slope_frobenius,
        slope_diagonal,
        horizon,
        particles: base.particles,
    })
}
