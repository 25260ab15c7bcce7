//! `effdiff`: effective diffusivities from the command line.
//!
//! Exit status: 0 on success, 1 for configuration errors, 2 for numerical
//! failures (blow-up, non-convergence, non-elliptic problems).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ProblemSpec, RunConfig};
use effdiff::SchemeKind;

#[derive(Parser)]
#[command(name = "effdiff", version, about = "Effective diffusivities of periodic diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a particle ensemble and estimate Ā, the mean drift and the occupation histogram.
    Simulate(Overrides),
    /// Solve the Eulerian density and cell problems on a grid.
    Reference(Overrides),
    /// Measure the time-step error of one or more schemes and fit convergence slopes.
    Converge(Overrides),
    /// Compare the Lagrangian estimate with the Eulerian reference.
    Compare(Overrides),
}

/// Values given here replace those of the config file.
#[derive(Args, Default)]
struct Overrides {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Benchmark name.
    #[arg(long)]
    problem: Option<String>,
    /// Directory for JSON and CSV output.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Time step.
    #[arg(long = "step")]
    h: Option<f64>,
    /// Comma-separated, strictly decreasing time steps for `converge`.
    #[arg(long, value_delimiter = ',')]
    h_list: Option<Vec<f64>>,
    #[arg(long)]
    scheme: Option<SchemeKind>,
    /// Comma-separated schemes for `converge`.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeKind>>,
    /// Fourier–Legendre order q.
    #[arg(long)]
    fl_order: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Histogram bins per axis (0 disables).
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Eulerian nodes per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tol_lin: Option<f64>,
}

impl Overrides {
    fn apply(self, cfg: &mut RunConfig) {
        let e = &mut cfg.ensemble;
        if let Some(p) = self.problem {
            cfg.problem = ProblemSpec::Named(p);
        }
        if let Some(o) = self.output {
            cfg.output.dir = Some(o);
        }
        macro_rules! set {
            ($($src:ident => $dst:expr),*) => { $(if let Some(v) = self.$src { $dst = v; })* };
        }
        set!(particles => e.particles, horizon => e.horizon, h => e.h, h_list => e.h_list, scheme => e.scheme,
             schemes => e.schemes, fl_order => e.fl_order, seed => e.seed, bins => e.histogram_bins,
             tol_lin => cfg.eulerian.tol_lin);
        if self.threads.is_some() {
            e.threads = self.threads;
        }
        if self.grid.is_some() {
            cfg.eulerian.n = self.grid;
        }
    }
}

fn is_numerical(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<effdiff::Error>(),
            Some(
                effdiff::Error::NonFiniteCoefficient { .. }
                    | effdiff::Error::StepBlowUp { .. }
                    | effdiff::Error::NotElliptic { .. }
                    | effdiff::Error::TooManyFailures { .. }
                    | effdiff::Error::SolverDivergence { .. }
                    | effdiff::Error::DiscretizationTooCoarse { .. }
            )
        )
    })
}

fn run(cli: Cli) -> anyhow::Result<String> {
    let (name, overrides) = match cli.command {
        Command::Simulate(o) => ("simulate", o),
        Command::Reference(o) => ("reference", o),
        Command::Converge(o) => ("converge", o),
        Command::Compare(o) => ("compare", o),
    };
    let mut cfg = match &overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    let run = commands::Run::new(cfg)?;
    match name {
        "simulate" => run.simulate(),
        "reference" => run.reference(),
        "converge" => run.converge(),
        _ => run.compare(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_numerical(&err) { 2 } else { 1 })
        }
    }
}
