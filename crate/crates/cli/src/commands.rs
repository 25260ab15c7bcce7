//! The four workflows. Each returns its JSON summary; files go to the
//! configured output directory.

use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;

use effdiff::coeffs::DerivativeMode;
use effdiff::eulerian::{self, EulerianOptions};
use effdiff::montecarlo::{SlopeFit, StudyRow};
use effdiff::{
    convergence_study, simulate_ensemble, DiffusivityEstimate, EnsembleConfig, EulerianSolution, Matrix, Problem,
    SchemeConfig, SchemeKind, StudyReference,
};

use crate::config::{ReferenceKind, RunConfig};
use crate::output;

/// Values derived from the config that a rerun needs to reproduce the output.
#[derive(Serialize)]
pub struct Resolved {
    pub dim: usize,
    pub derivative_mode: String,
    pub commutative: Option<bool>,
    /// `N h`, the horizon actually simulated.
    pub effective_horizon: Option<f64>,
    pub steps: Option<usize>,
    pub grid_n: Option<usize>,
}

impl Resolved {
    fn new(problem: &Problem) -> Self {
        Self {
            dim: problem.dim(),
            derivative_mode: match problem.derivative_mode() {
                DerivativeMode::Analytic => "analytic".into(),
                DerivativeMode::FiniteDifference { step } => format!("finite-difference({})", output::float(step)),
            },
            commutative: None,
            effective_horizon: None,
            steps: None,
            grid_n: None,
        }
    }
}

#[derive(Serialize)]
struct Summary<'a, T> {
    command: &'a str,
    config: &'a RunConfig,
    resolved: Resolved,
    result: T,
}

pub struct Run {
    pub config: RunConfig,
    pub problem: Problem,
}

impl Run {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let problem = config.problem.build()?;
        if let Some(x0) = &config.ensemble.x0 {
            if x0.len() != problem.dim() {
                bail!("ensemble.x0 has {} coordinates, problem dimension is {}", x0.len(), problem.dim());
            }
        }
        Ok(Self { config, problem })
    }

    fn output_dir(&self) -> Result<Option<&Path>> {
        match &self.config.output.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)
                    .map_err(|e| anyhow::anyhow!("cannot create output directory {}: {e}", dir.display()))?;
                Ok(Some(dir.as_path()))
            }
            None => Ok(None),
        }
    }

    fn finish<T: Serialize>(&self, command: &str, resolved: Resolved, result: T) -> Result<String> {
        let text = output::to_json(&Summary { command, config: &self.config, resolved, result })?;
        if let Some(dir) = self.output_dir()? {
            output::write_text(&dir.join(format!("{command}.json")), &text)?;
        }
        Ok(text)
    }

    fn scheme(&self, kind: SchemeKind, h: f64) -> SchemeConfig {
        let e = &self.config.ensemble;
        SchemeConfig { kind, h, fl_order: e.fl_order, force_commutative: e.force_commutative }
    }

    fn ensemble(&self, kind: SchemeKind, h: f64) -> EnsembleConfig {
        let e = &self.config.ensemble;
        let mut c = EnsembleConfig::new(e.particles, e.horizon, self.scheme(kind, h), e.seed);
        c.x0 = e.x0.clone();
        c.histogram_bins = e.histogram_bins;
        c.burn_in_fraction = e.burn_in_fraction;
        c.threads = e.threads;
        c
    }

    fn eulerian_options(&self) -> EulerianOptions {
        let e = &self.config.eulerian;
        let mut o = EulerianOptions::default_for_dim(self.problem.dim());
        if let Some(n) = e.n {
            o.n = n;
        }
        o.tol_lin = e.tol_lin;
        o.restart = e.restart;
        o.max_iter = e.max_iter;
        o
    }

    fn commutative(&self) -> Result<bool> {
        Ok(match self.config.ensemble.force_commutative {
            Some(c) => c,
            None => self.problem.sigma_is_constant() || self.problem.commutativity()?.commutative,
        })
    }

    fn solve_eulerian(&self) -> Result<(EulerianSolution, Resolved)> {
        let opts = self.eulerian_options();
        let sol = eulerian::solve(&self.problem, &opts)?;
        let mut resolved = Resolved::new(&self.problem);
        resolved.grid_n = Some(opts.n);
        Ok((sol, resolved))
    }

    pub fn simulate(&self) -> Result<String> {
        let e = &self.config.ensemble;
        let cfg = self.ensemble(e.scheme, e.h);
        let run = simulate_ensemble(&self.problem, &cfg)?;
        if let (Some(dir), Some(hist)) = (self.output_dir()?, &run.histogram) {
            output::write_grid_csv(&dir.join("histogram.csv"), hist, &["density".into()])?;
        }
        let mut resolved = Resolved::new(&self.problem);
        resolved.commutative = Some(self.commutative()?);
        resolved.effective_horizon = Some(run.horizon);
        resolved.steps = Some(run.steps);
        let result = SimulateResult {
            diffusivity: run.diffusivity,
            mean_drift: run.mean_drift,
            mean_drift_stderr: run.mean_drift_stderr,
            failures: run.failures,
        };
        self.finish("simulate", resolved, result)
    }

    pub fn reference(&self) -> Result<String> {
        let (sol, resolved) = self.solve_eulerian()?;
        if let Some(dir) = self.output_dir()? {
            output::write_grid_csv(&dir.join("density.csv"), &sol.r, &["r".into()])?;
            let names: Vec<String> = (1..=self.problem.dim()).map(|i| format!("chi{i}")).collect();
            output::write_grid_csv(&dir.join("corrector.csv"), &sol.chi, &names)?;
        }
        self.finish("reference", resolved, ReferenceResult::from(&sol))
    }

    pub fn converge(&self) -> Result<String> {
        let e = &self.config.ensemble;
        let c = &self.config.converge;
        let finest = e.h_list.iter().cloned().fold(f64::INFINITY, f64::min);
        let reference = match c.reference {
            ReferenceKind::FineStep => {
                StudyReference::FineStep { h: c.reference_h.unwrap_or(finest / 4.0), scheme: c.reference_scheme }
            }
            ReferenceKind::Eulerian => StudyReference::Fixed { matrix: self.solve_eulerian()?.0.a_eff },
        };
        let mut studies = Vec::new();
        let mut rows = Vec::new();
        let mut resolved = Resolved::new(&self.problem);
        resolved.commutative = Some(self.commutative()?);
        for &kind in &e.schemes {
            let table = convergence_study(&self.problem, &e.h_list, &self.ensemble(kind, e.h_list[0]), &reference)?;
            resolved.effective_horizon = Some(table.horizon);
            rows.extend(table.rows.iter().cloned());
            studies.push(StudySummary {
                scheme: kind,
                reference: table.reference,
                reference_stderr: table.reference_stderr,
                slope_frobenius: table.slope_frobenius,
                slope_diagonal: table.slope_diagonal,
                rows: table.rows,
            });
        }
        if let Some(dir) = self.output_dir()? {
            output::write_converge_csv(&dir.join("converge.csv"), self.problem.dim(), &rows)?;
        }
        self.finish("converge", resolved, ConvergeResult { reference, studies })
    }

    pub fn compare(&self) -> Result<String> {
        let (sol, mut resolved) = self.solve_eulerian()?;
        let e = &self.config.ensemble;
        let run = simulate_ensemble(&self.problem, &self.ensemble(e.scheme, e.h))?;
        resolved.commutative = Some(self.commutative()?);
        resolved.effective_horizon = Some(run.horizon);
        resolved.steps = Some(run.steps);

        let tol = &self.config.compare;
        let slack = tol.rel_tol * sol.a_eff.frobenius_norm();
        let d = self.problem.dim();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let (l, u) = (run.diffusivity.matrix[(i, j)], sol.a_eff[(i, j)]);
                let tolerance = tol.stderr_factor * run.diffusivity.stderr[(i, j)] + slack;
                entries.push(EntryComparison {
                    i: i + 1,
                    j: j + 1,
                    lagrangian: l,
                    eulerian: u,
                    difference: l - u,
                    tolerance,
                    pass: (l - u).abs() <= tolerance,
                });
            }
        }
        let pass = entries.iter().all(|e| e.pass);
        let result = CompareResult {
            pass,
            lagrangian: run.diffusivity,
            lagrangian_mean_drift: run.mean_drift,
            lagrangian_mean_drift_stderr: run.mean_drift_stderr,
            eulerian: sol.a_eff,
            eulerian_mean_drift: sol.b_bar,
            entries,
        };
        self.finish("compare", resolved, result)
    }
}

#[derive(Serialize)]
struct SimulateResult {
    diffusivity: DiffusivityEstimate,
    mean_drift: Vec<f64>,
    mean_drift_stderr: Vec<f64>,
    failures: usize,
}

#[derive(Serialize)]
struct ReferenceResult {
    a_eff: Matrix,
    b_bar: Vec<f64>,
    asymmetry: f64,
    density_residual: f64,
    cell_residuals: Vec<f64>,
    iterations: Vec<usize>,
    warnings: Vec<String>,
}

impl From<&EulerianSolution> for ReferenceResult {
    fn from(s: &EulerianSolution) -> Self {
        Self {
            a_eff: s.a_eff.clone(),
            b_bar: s.b_bar.clone(),
            asymmetry: s.asymmetry,
            density_residual: s.density_residual,
            cell_residuals: s.cell_residuals.clone(),
            iterations: s.iterations.clone(),
            warnings: s.warnings.clone(),
        }
    }
}

#[derive(Serialize)]
struct StudySummary {
    scheme: SchemeKind,
    reference: Matrix,
    reference_stderr: Option<Matrix>,
    slope_frobenius: SlopeFit,
    slope_diagonal: Vec<SlopeFit>,
    rows: Vec<StudyRow>,
}

#[derive(Serialize)]
struct ConvergeResult {
    reference: StudyReference,
    studies: Vec<StudySummary>,
}

#[derive(Serialize)]
struct EntryComparison {
    i: usize,
    j: usize,
    lagrangian: f64,
    eulerian: f64,
    difference: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct CompareResult {
    pass: bool,
    lagrangian: DiffusivityEstimate,
    lagrangian_mean_drift: Vec<f64>,
    lagrangian_mean_drift_stderr: Vec<f64>,
    eulerian: Matrix,
    eulerian_mean_drift: Vec<f64>,
    entries: Vec<EntryComparison>,
}
