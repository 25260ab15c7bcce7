//! One-step weak integrators.
//!
//! * Euler–Maruyama: `x + b h + σ √h ξ`.
//! * Milstein: Euler–Maruyama plus `M_i = Ξ_i : J`, where `J` approximates the
//!   double Itô integrals (closed form under commutativity, truncated
//!   Fourier–Legendre series otherwise).
//! * Modified Milstein: the Milstein step driven by `b_h = b + h b₁` and
//!   `σ_h = σ + h σ₁`, which is weakly second order. `Ξ` is built from the
//!   unmodified `σ`; the difference is `O(h²)` inside an `O(h)` term.

use serde::{Deserialize, Serialize};

use crate::coeffs::{first_order_corrections, xi_tensor, CoefficientEval, DerivativeLevel, Problem};
use crate::error::{Error, Result};

pub const DEFAULT_FL_ORDER: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    EulerMaruyama,
    Milstein,
    ModifiedMilstein,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::EulerMaruyama => "euler-maruyama",
            SchemeKind::Milstein => "milstein",
            SchemeKind::ModifiedMilstein => "modified-milstein",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler-maruyama" | "em" => Ok(SchemeKind::EulerMaruyama),
            "milstein" => Ok(SchemeKind::Milstein),
            "modified-milstein" | "modified" => Ok(SchemeKind::ModifiedMilstein),
            other => Err(Error::InvalidArgument(format!("unknown scheme {other:?}"))),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub h: f64,
    pub fl_order: usize,
    pub force_commutative: Option<bool>,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, h: f64) -> Self {
        Self { kind, h, fl_order: DEFAULT_FL_ORDER, force_commutative: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", self.h)));
        }
        Ok(())
    }
}

/// Gaussian inputs of one step: `ξ` and, for non-commutative Milstein steps,
/// `q` auxiliary vectors stored back to back.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDraw {
    pub xi: Vec<f64>,
    pub xi_aux: Vec<f64>,
}

impl GaussianDraw {
    pub fn new(dim: usize) -> Self {
        Self { xi: vec![0.0; dim], xi_aux: Vec::new() }
    }

    pub fn with_aux(dim: usize, q: usize) -> Self {
        Self { xi: vec![0.0; dim], xi_aux: vec![0.0; dim * q] }
    }

    pub fn aux_count(&self) -> usize {
        if self.xi.is_empty() {
            0
        } else {
            self.xi_aux.len() / self.xi.len()
        }
    }
}

/// Approximate double Itô integrals `J^{[j1,j2]}` over one step, written
/// row-major into `out`.
///
/// Commutative: `(h/2)(ξ_{j1} ξ_{j2} − δ)`. Otherwise the order-`q`
/// Fourier–Legendre series with `ξ^{(0)} = ξ` and the auxiliary vectors of
/// `draw`.
pub fn sample_double_ito(
    d: usize,
    h: f64,
    q: usize,
    draw: &GaussianDraw,
    commutative: bool,
    out: &mut [f64],
) -> Result<()> {
    if draw.xi.len() != d || out.len() != d * d {
        return Err(Error::InvalidArgument("draw or output has wrong dimension".into()));
    }
    if !commutative && draw.xi_aux.len() < q * d {
        return Err(Error::InvalidArgument(format!(
            "Fourier–Legendre path needs {q} auxiliary vectors, draw has {}",
            draw.aux_count()
        )));
    }
    match d {
        1 => double_ito_body(1, h, q, draw, commutative, out),
        2 => double_ito_body(2, h, q, draw, commutative, out),
        3 => double_ito_body(3, h, q, draw, commutative, out),
        _ => double_ito_body(d, h, q, draw, commutative, out),
    }
    Ok(())
}

#[inline(always)]
fn double_ito_body(d: usize, h: f64, q: usize, draw: &GaussianDraw, commutative: bool, out: &mut [f64]) {
    let half_h = 0.5 * h;
    let xi = &draw.xi[..d];
    for j1 in 0..d {
        for j2 in 0..d {
            let delta = if j1 == j2 { 1.0 } else { 0.0 };
            out[j1 * d + j2] = xi[j1] * xi[j2] - delta;
        }
    }
    if !commutative {
        for k in 1..=q {
            let prev = if k == 1 { xi } else { &draw.xi_aux[(k - 2) * d..(k - 1) * d] };
            let cur = &draw.xi_aux[(k - 1) * d..k * d];
            let w = 1.0 / ((4 * k * k - 1) as f64).sqrt();
            for j1 in 0..d {
                for j2 in 0..d {
                    out[j1 * d + j2] += w * (prev[j1] * cur[j2] - cur[j1] * prev[j2]);
                }
            }
        }
    }
    for v in out[..d * d].iter_mut() {
        *v *= half_h;
    }
}

/// Reusable single-step integrator with preallocated buffers.
#[derive(Clone, Debug)]
pub struct Stepper {
    problem: Problem,
    kind: SchemeKind,
    h: f64,
    sqrt_h: f64,
    q: usize,
    commutative: bool,
    correction: bool,
    level: DerivativeLevel,
    eval: CoefficientEval,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    b1: Vec<f64>,
    sigma1: Vec<f64>,
    sst: Vec<f64>,
    xi: Vec<f64>,
    j: Vec<f64>,
    out: Vec<f64>,
}

impl Stepper {
    pub fn new(problem: &Problem, config: &SchemeConfig) -> Result<Self> {
        config.validate()?;
        let d = problem.dim();
        let correction = config.kind != SchemeKind::EulerMaruyama && !problem.sigma_is_constant();
        let commutative = match config.force_commutative {
            Some(c) => c,
            None if correction => problem.commutativity()?.commutative,
            None => true,
        };
        let level = match config.kind {
            SchemeKind::EulerMaruyama => DerivativeLevel::Values,
            SchemeKind::Milstein if correction => DerivativeLevel::First,
            SchemeKind::Milstein => DerivativeLevel::Values,
            SchemeKind::ModifiedMilstein => DerivativeLevel::Second,
        };
        Ok(Self {
            problem: problem.clone(),
            level,
            kind: config.kind,
            h: config.h,
            sqrt_h: config.h.sqrt(),
            q: config.fl_order,
            commutative,
            correction,
            eval: CoefficientEval::new(d),
            drift: vec![0.0; d],
            diffusion: vec![0.0; d * d],
            b1: vec![0.0; d],
            sigma1: vec![0.0; d * d],
            sst: vec![0.0; d * d],
            xi: vec![0.0; d * d * d],
            j: vec![0.0; d * d],
            out: vec![0.0; d],
        })
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Whether steps take the closed-form `J` path.
    pub fn commutative(&self) -> bool {
        self.commutative
    }

    /// Whether draws must carry auxiliary Fourier–Legendre vectors.
    pub fn needs_aux(&self) -> bool {
        self.correction && !self.commutative && self.q > 0
    }

    /// Allocates a draw of the shape this stepper consumes.
    pub fn new_draw(&self) -> GaussianDraw {
        if self.needs_aux() {
            GaussianDraw::with_aux(self.dim(), self.q)
        } else {
            GaussianDraw::new(self.dim())
        }
    }

    /// Advances `x` in place by one step.
    pub fn step(&mut self, x: &mut [f64], draw: &GaussianDraw) -> Result<()> {
        let d = self.dim();
        let h = self.h;
        self.problem.evaluate(x, self.level, &mut self.eval)?;

        if self.kind == SchemeKind::ModifiedMilstein {
            first_order_corrections(&self.eval, &mut self.sst, &mut self.b1, &mut self.sigma1);
            for i in 0..d {
                self.drift[i] = self.eval.b[i] + h * self.b1[i];
            }
            for ij in 0..d * d {
                self.diffusion[ij] = self.eval.sigma[ij] + h * self.sigma1[ij];
            }
        } else {
            self.drift.copy_from_slice(&self.eval.b);
            self.diffusion.copy_from_slice(&self.eval.sigma);
        }

        for i in 0..d {
            let mut noise = 0.0;
            for j in 0..d {
                noise += self.diffusion[i * d + j] * draw.xi[j];
            }
            self.out[i] = x[i] + (self.drift[i] * h + noise * self.sqrt_h);
        }

        if self.correction {
            sample_double_ito(d, h, self.q, draw, self.commutative, &mut self.j)?;
            if self.problem.sigma_is_diagonal() {
                // Ξ_{i,[j1,j2]} is nonzero only for j2 = i.
                for i in 0..d {
                    let mut m = 0.0;
                    for j1 in 0..d {
                        m += self.eval.grad_sigma[(i * d + i) * d + j1]
                            * self.eval.sigma[j1 * d + j1]
                            * self.j[j1 * d + i];
                    }
                    self.out[i] += m;
                }
            } else {
                xi_tensor(&self.eval, &mut self.xi);
                for i in 0..d {
                    let mut m = 0.0;
                    for jj in 0..d * d {
                        m += self.xi[i * d * d + jj] * self.j[jj];
                    }
                    self.out[i] += m;
                }
            }
        }

        if self.out.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepBlowUp { x: x.to_vec() });
        }
        x.copy_from_slice(&self.out);
        Ok(())
    }
}

fn single_step(
    problem: &Problem,
    kind: SchemeKind,
    x: &[f64],
    h: f64,
    q: usize,
    draw: &GaussianDraw,
) -> Result<Vec<f64>> {
    if x.len() != problem.dim() || draw.xi.len() != problem.dim() {
        return Err(Error::InvalidArgument("point or draw has wrong dimension".into()));
    }
    let mut cfg = SchemeConfig::new(kind, h);
    cfg.fl_order = q;
    let mut stepper = Stepper::new(problem, &cfg)?;
    let mut y = x.to_vec();
    stepper.step(&mut y, draw)?;
    Ok(y)
}

/// One Euler–Maruyama step.
pub fn em_step(problem: &Problem, x: &[f64], h: f64, draw: &GaussianDraw) -> Result<Vec<f64>> {
    single_step(problem, SchemeKind::EulerMaruyama, x, h, DEFAULT_FL_ORDER, draw)
}

/// One Milstein step; the `J` path follows the problem's cached commutativity verdict.
pub fn milstein_step(problem: &Problem, x: &[f64], h: f64, q: usize, draw: &GaussianDraw) -> Result<Vec<f64>> {
    single_step(problem, SchemeKind::Milstein, x, h, q, draw)
}

/// One modified Milstein step.
pub fn modified_milstein_step(problem: &Problem, x: &[f64], h: f64, q: usize, draw: &GaussianDraw) -> Result<Vec<f64>> {
    single_step(problem, SchemeKind::ModifiedMilstein, x, h, q, draw)
}
