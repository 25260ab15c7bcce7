//! Particle ensembles, the Lagrangian estimators and convergence studies.
//!
//! Every particle draws from its own stream keyed by `(seed, particle)`;
//! particles are processed in fixed chunks whose results land in fixed
//! slots, and histogram counts are integers. An ensemble is therefore
//! bitwise reproducible for any worker count.

mod estimate;
mod study;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::Problem;
use crate::error::{Error, Result};
use crate::grid::TorusGridField;
use crate::rng::ParticleStreams;
use crate::schemes::{SchemeConfig, Stepper};

pub use estimate::{effective_diffusivity_estimate, invariant_histogram, DiffusivityEstimate};
pub use study::{
    convergence_study, fit_log_slope, gated_slope, SlopeFit, StudyReference, StudyRow, StudyTable, NOISE_GATE,
};

/// Particles per work unit.
const CHUNK: usize = 256;

/// Largest tolerated fraction of failed trajectories.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub particles: usize,
    /// Requested horizon `T`; the run uses `N = round(T/h)` steps.
    pub horizon: f64,
    pub scheme: SchemeConfig,
    pub seed: u64,
    /// Start point of every particle; the origin if `None`.
    pub x0: Option<Vec<f64>>,
    /// Bins per axis of the occupation histogram; 0 disables it.
    pub histogram_bins: usize,
    pub burn_in_fraction: f64,
    /// Each step consumes the normalized sum of this many base normals, so
    /// runs with `h` and `h / k` can share one Brownian path.
    pub brownian_substeps: usize,
    /// Worker count; the global rayon pool if `None`.
    pub threads: Option<usize>,
}

impl EnsembleConfig {
    pub fn new(particles: usize, horizon: f64, scheme: SchemeConfig, seed: u64) -> Self {
        Self {
            particles,
            horizon,
            scheme,
            seed,
            x0: None,
            histogram_bins: 0,
            burn_in_fraction: 0.1,
            brownian_substeps: 1,
            threads: None,
        }
    }

    /// Number of steps `N = round(T/h) ≥ 1`.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.scheme.h).round() as usize).max(1)
    }

    /// The horizon actually simulated, `N h`.
    pub fn effective_horizon(&self) -> f64 {
        self.steps() as f64 * self.scheme.h
    }

    /// First step whose position enters the histogram.
    pub fn burn_in_steps(&self) -> usize {
        (self.burn_in_fraction * self.steps() as f64).ceil() as usize
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.scheme.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.particles == 0 {
            return bad("need at least one particle".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad(format!("burn-in fraction must lie in [0,1), got {}", self.burn_in_fraction));
        }
        if self.histogram_bins == 1 {
            return bad("histogram needs at least 2 bins per axis".into());
        }
        if self.brownian_substeps == 0 {
            return bad("brownian_substeps must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != dim || x0.iter().any(|v| !v.is_finite()) {
                return bad(format!("x0 must be a finite point of dimension {dim}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub diffusivity: DiffusivityEstimate,
    /// `(mean(X_T) − x₀)/T`.
    pub mean_drift: Vec<f64>,
    pub mean_drift_stderr: Vec<f64>,
    pub histogram: Option<TorusGridField>,
    pub failures: usize,
    pub steps: usize,
    pub requested_horizon: f64,
    pub horizon: f64,
    /// Unwrapped final positions, point-major; failed particles hold NaN.
    #[serde(skip)]
    pub positions: Vec<f64>,
}

impl EnsembleResult {
    /// Final positions of the particles that finished.
    pub fn surviving_positions(&self) -> Vec<f64> {
        let d = self.mean_drift.len();
        self.positions.chunks_exact(d).filter(|p| p[0].is_finite()).flatten().copied().collect()
    }
}

#[derive(Default)]
struct Partial {
    failures: usize,
    counts: Vec<u64>,
    first_error: Option<(usize, String)>,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        self.failures += other.failures;
        if self.counts.is_empty() {
            self.counts = other.counts;
        } else {
            for (a, b) in self.counts.iter_mut().zip(&other.counts) {
                *a += b;
            }
        }
        self.first_error = match (self.first_error, other.first_error) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }
}

fn run_chunk(
    template: &Stepper,
    config: &EnsembleConfig,
    x0: &[f64],
    first: usize,
    out: &mut [f64],
    acc: &mut Partial,
) {
    let d = x0.len();
    let n = config.steps();
    let burn = config.burn_in_steps().max(1);
    let bins = config.histogram_bins;
    if bins > 0 && acc.counts.is_empty() {
        acc.counts = vec![0; bins.pow(d as u32)];
    }
    let mut stepper = template.clone();
    let with_aux = stepper.needs_aux();
    let mut draw = stepper.new_draw();
    for (k, x) in out.chunks_exact_mut(d).enumerate() {
        let particle = first + k;
        let mut streams = ParticleStreams::new(config.seed, particle as u64);
        x.copy_from_slice(x0);
        for step in 1..=n {
            streams.fill(&mut draw, config.brownian_substeps, with_aux);
            if let Err(e) = stepper.step(x, &draw) {
                acc.failures += 1;
                if acc.first_error.as_ref().is_none_or(|(p, _)| particle < *p) {
                    acc.first_error = Some((particle, e.to_string()));
                }
                x.fill(f64::NAN);
                break;
            }
            if bins > 0 && step >= burn {
                acc.counts[estimate::bin_index(x, bins)] += 1;
            }
        }
    }
}

/// Runs `M` independent trajectories of `N = round(T/h)` steps from `x₀`.
pub fn simulate_ensemble(problem: &Problem, config: &EnsembleConfig) -> Result<EnsembleResult> {
    let d = problem.dim();
    config.validate(d)?;
    let per_axis = ((4096f64).powf(1.0 / d as f64).floor() as usize).max(2);
    problem.ellipticity_bounds(per_axis)?;
    let template = Stepper::new(problem, &config.scheme)?;
    let x0 = config.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut positions = vec![0.0; config.particles * d];

    let work = |positions: &mut Vec<f64>| -> Partial {
        positions
            .par_chunks_mut(CHUNK * d)
            .enumerate()
            .fold(Partial::default, |mut acc, (c, slice)| {
                run_chunk(&template, config, &x0, c * CHUNK, slice, &mut acc);
                acc
            })
            .reduce(Partial::default, Partial::merge)
    };
    let partial = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?
            .install(|| work(&mut positions)),
        None => work(&mut positions),
    };

    let failures = partial.failures;
    if failures as f64 > MAX_FAILURE_FRACTION * config.particles as f64 {
        return Err(Error::TooManyFailures { failures, particles: config.particles });
    }
    let horizon = config.effective_horizon();
    let result_positions = positions;
    let alive: Vec<f64> = result_positions.chunks_exact(d).filter(|p| p[0].is_finite()).flatten().copied().collect();
    let mut diffusivity = effective_diffusivity_estimate(&alive, d, horizon)?;
    diffusivity.h = Some(config.scheme.h);
    let (mean_drift, mean_drift_stderr) = estimate::mean_drift(&alive, d, &x0, horizon);
    let histogram =
        (config.histogram_bins > 0).then(|| estimate::density_from_counts(d, config.histogram_bins, &partial.counts));
    Ok(EnsembleResult {
        diffusivity,
        mean_drift,
        mean_drift_stderr,
        histogram,
        failures,
        steps: config.steps(),
        requested_horizon: config.horizon,
        horizon,
        positions: result_positions,
    })
}

#[cfg(test)]
mod tests;
