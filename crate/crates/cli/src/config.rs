//! Run configuration: a TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use effdiff::coeffs::{ExpressionField, DEFAULT_FD_STEP};
use effdiff::{benchmarks, DerivativeMode, Problem, SchemeKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSpec {
    Named(String),
    Inline(InlineProblem),
}

/// Coefficients given as expressions in `y1 … yd` and `pi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    #[serde(default = "inline_name")]
    pub name: String,
    pub drift: Vec<String>,
    /// Rows of σ.
    pub sigma: Vec<Vec<String>>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

fn inline_name() -> String {
    "inline".into()
}

fn default_fd_step() -> f64 {
    DEFAULT_FD_STEP
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        match self {
            ProblemSpec::Named(name) => benchmarks::by_name(name)
                .with_context(|| format!("unknown problem {name:?}; expected one of {}", benchmarks::NAMES.join(", "))),
            ProblemSpec::Inline(p) => {
                let field = ExpressionField::new(&p.drift, &p.sigma)?;
                Ok(Problem::new(
                    p.name.clone(),
                    std::sync::Arc::new(field),
                    DerivativeMode::FiniteDifference { step: p.fd_step },
                )?)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub particles: usize,
    pub horizon: f64,
    pub h: f64,
    /// Time steps of a convergence study, strictly decreasing.
    pub h_list: Vec<f64>,
    pub scheme: SchemeKind,
    /// Schemes compared by `converge`.
    pub schemes: Vec<SchemeKind>,
    pub fl_order: usize,
    pub force_commutative: Option<bool>,
    pub seed: u64,
    pub x0: Option<Vec<f64>>,
    pub histogram_bins: usize,
    pub burn_in_fraction: f64,
    pub threads: Option<usize>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            particles: 200_000,
            horizon: 50.0,
            h: 0.005,
            h_list: vec![0.04, 0.02, 0.01],
            scheme: SchemeKind::ModifiedMilstein,
            schemes: vec![SchemeKind::EulerMaruyama, SchemeKind::ModifiedMilstein],
            fl_order: 2,
            force_commutative: None,
            seed: 0,
            x0: None,
            histogram_bins: 0,
            burn_in_fraction: 0.1,
            threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EulerianSection {
    /// Nodes per axis; 128 in 2D and 48 in 3D when absent.
    pub n: Option<usize>,
    pub tol_lin: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for EulerianSection {
    fn default() -> Self {
        Self { n: None, tol_lin: 1e-10, restart: 50, max_iter: 5000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Same seed and Brownian paths at a finer step.
    FineStep,
    /// The Eulerian solver.
    Eulerian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeSection {
    pub reference: ReferenceKind,
    /// Step of the fine-step reference; the smallest `h_list` entry over 4 if absent.
    pub reference_h: Option<f64>,
    pub reference_scheme: SchemeKind,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self { reference: ReferenceKind::FineStep, reference_h: None, reference_scheme: SchemeKind::ModifiedMilstein }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    /// Tolerance per entry is `stderr_factor · stderr + rel_tol · ‖Ā‖_F`.
    pub stderr_factor: f64,
    pub rel_tol: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { stderr_factor: 4.0, rel_tol: 0.02 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Directory for JSON and CSV files; nothing is written when absent.
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub eulerian: EulerianSection,
    #[serde(default)]
    pub converge: ConvergeSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::Named("benchmark-2d-constant".into()),
            ensemble: EnsembleSection::default(),
            eulerian: EulerianSection::default(),
            converge: ConvergeSection::default(),
            compare: CompareSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.ensemble;
        if e.h_list.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Greater)) {
            bail!("ensemble.h_list must be strictly decreasing, got {:?}", e.h_list);
        }
        if e.schemes.is_empty() {
            bail!("ensemble.schemes must not be empty");
        }
        if !(self.compare.stderr_factor >= 0.0 && self.compare.rel_tol >= 0.0) {
            bail!("compare tolerances must be non-negative");
        }
        if let Some(dir) = &self.output.dir {
            if dir.exists() && !dir.is_dir() {
                bail!("output.dir {} is not a directory", dir.display());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = RunConfig::from_toml("problem = \"benchmark-3d\"\n").unwrap();
        assert_eq!(cfg.problem, ProblemSpec::Named("benchmark-3d".into()));
        assert_eq!(cfg.ensemble, EnsembleSection::default());
        assert_eq!(cfg.problem.build().unwrap().dim(), 3);
    }

    #[test]
    fn inline_problem_parses_and_builds() {
        let cfg = RunConfig::from_toml(
            "[problem]\ndrift = [\"0\", \"0\"]\nsigma = [[\"1.0\", \"0\"], [\"0\", \"1.0\"]]\nfd_step = 1e-4\n",
        )
        .unwrap();
        let p = cfg.problem.build().unwrap();
        assert_eq!(p.name(), "inline");
        assert_eq!(p.derivative_mode(), DerivativeMode::FiniteDifference { step: 1e-4 });
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = RunConfig::from_toml("problem = \"free-brownian\"\n[eulerian]\ngrid = 3\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("grid") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn step_lists_must_decrease() {
        let mut cfg = RunConfig::default();
        cfg.ensemble.h_list = vec![0.02, 0.02, 0.01];
        assert!(cfg.validate().is_err());
        cfg.ensemble.h_list = vec![0.04, 0.02, 0.01];
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_problem_lists_benchmarks() {
        let err = ProblemSpec::Named("nope".into()).build().unwrap_err();
        assert!(err.to_string().contains("benchmark-2d-constant"));
    }
}
