//! SDE coefficients on the unit torus.
//!
//! A [`Problem`] wraps a [`CoefficientField`] (drift `b` and diffusion factor
//! `σ`, both 1-periodic) together with a policy for obtaining derivatives:
//! hand-coded for the shipped benchmarks, central finite differences for
//! user-defined fields. On top of the raw coefficients this module provides
//! the diffusion matrix `A = ½σσᵀ`, the Milstein tensor `Ξ`, the commutativity
//! detector and the first-order modified-equation corrections `b₁`, `σ₁`.

pub mod benchmarks;
mod expression;
pub(crate) mod jet;

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix};

pub use expression::ExpressionField;

/// Asymmetry threshold for the commutativity detector.
pub const COMMUTATIVITY_TOL: f64 = 1e-10;

/// Default central-difference step for user-defined problems.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Number of quasi-random points used when auto-detecting commutativity.
pub const COMMUTATIVITY_SAMPLES: usize = 100;

/// How many derivatives an evaluation must provide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DerivativeLevel {
    Values,
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference { step: f64 },
}

/// Coefficients and derivatives at one point, stored flat and row-major.
///
/// * `b[i]`
/// * `sigma[i*d + j]`                    = σ_ij
/// * `jac_b[i*d + k]`                    = ∂_k b_i
/// * `hess_b[(i*d + k1)*d + k2]`         = ∂_k1 ∂_k2 b_i
/// * `grad_sigma[(i*d + j)*d + k]`       = ∂_k σ_ij
/// * `hess_sigma[((i*d + j)*d + k1)*d + k2]` = ∂_k1 ∂_k2 σ_ij
#[derive(Clone, Debug)]
pub struct CoefficientEval {
    pub dim: usize,
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    pub jac_b: Vec<f64>,
    pub hess_b: Vec<f64>,
    pub grad_sigma: Vec<f64>,
    pub hess_sigma: Vec<f64>,
    y: Vec<f64>,
    scratch: Vec<f64>,
}

impl CoefficientEval {
    pub fn new(dim: usize) -> Self {
        let d = dim;
        Self {
            dim,
            b: vec![0.0; d],
            sigma: vec![0.0; d * d],
            jac_b: vec![0.0; d * d],
            hess_b: vec![0.0; d * d * d],
            grad_sigma: vec![0.0; d * d * d],
            hess_sigma: vec![0.0; d * d * d * d],
            y: vec![0.0; d],
            scratch: Vec::new(),
        }
    }

    /// The canonicalized point of the last evaluation.
    pub fn point(&self) -> &[f64] {
        &self.y
    }

    /// `A = ½σσᵀ`.
    pub fn diffusion_matrix(&self) -> Matrix {
        let d = self.dim;
        let mut a = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += self.sigma[i * d + k] * self.sigma[j * d + k];
                }
                a[(i, j)] = 0.5 * s;
            }
        }
        a
    }

    /// `σσᵀ` into `out` (row-major, `d×d`).
    pub fn sigma_sigma_t(&self, out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += self.sigma[i * d + k] * self.sigma[j * d + k];
                }
                out[i * d + j] = s;
            }
        }
    }
}

/// Periodic drift and diffusion factor on `[0,1)ᵈ`.
///
/// Implementors must be 1-periodic in every coordinate; [`Problem`]
/// canonicalizes points to `[0,1)ᵈ` before calling in.
pub trait CoefficientField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// Writes `b(y)` and `σ(y)` (row-major).
    fn values(&self, y: &[f64], b: &mut [f64], sigma: &mut [f64]);

    /// Fills `out` with values and analytic derivatives up to `level`.
    /// Returns `false` if the field has no analytic derivatives.
    fn analytic(&self, _y: &[f64], _level: DerivativeLevel, _out: &mut CoefficientEval) -> bool {
        false
    }

    fn has_analytic_derivatives(&self) -> bool {
        false
    }

    /// σ is diagonal everywhere.
    fn sigma_is_diagonal(&self) -> bool {
        false
    }

    /// σ does not depend on `y`.
    fn sigma_is_constant(&self) -> bool {
        false
    }

    /// Closed-form invariant density, when known.
    fn invariant_density(&self, _y: &[f64]) -> Option<f64> {
        None
    }

    /// Whether `∫ b r dy = 0` is known analytically.
    fn known_centered(&self) -> Option<bool> {
        None
    }
}

/// Result of the commutativity detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommutativityReport {
    pub commutative: bool,
    pub max_asymmetry: f64,
}

/// An SDE problem on the d-torus.
#[derive(Clone)]
pub struct Problem {
    name: String,
    field: Arc<dyn CoefficientField>,
    mode: DerivativeMode,
    commutativity: Arc<OnceLock<CommutativityReport>>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem").field("name", &self.name).field("dim", &self.dim()).field("mode", &self.mode).finish()
    }
}

impl Problem {
    /// Builds a problem; analytic mode requires the field to supply derivatives.
    pub fn new(name: impl Into<String>, field: Arc<dyn CoefficientField>, mode: DerivativeMode) -> Result<Self> {
        if field.dim() == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        match mode {
            DerivativeMode::Analytic if !field.has_analytic_derivatives() => {
                return Err(Error::InvalidArgument("analytic derivatives requested but the field provides none".into()))
            }
            DerivativeMode::FiniteDifference { step } if !(step > 0.0 && step.is_finite()) => {
                return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {step}")))
            }
            _ => {}
        }
        Ok(Self { name: name.into(), field, mode, commutativity: Arc::new(OnceLock::new()) })
    }

    /// Analytic derivatives when the field has them, otherwise central differences.
    pub fn with_default_mode(name: impl Into<String>, field: Arc<dyn CoefficientField>) -> Result<Self> {
        let mode = if field.has_analytic_derivatives() {
            DerivativeMode::Analytic
        } else {
            DerivativeMode::FiniteDifference { step: DEFAULT_FD_STEP }
        };
        Self::new(name, field, mode)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn field(&self) -> &Arc<dyn CoefficientField> {
        &self.field
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.mode
    }

    /// Same coefficients with a different derivative policy.
    pub fn with_mode(&self, mode: DerivativeMode) -> Result<Self> {
        Self::new(self.name.clone(), self.field.clone(), mode)
    }

    pub fn sigma_is_diagonal(&self) -> bool {
        self.field.sigma_is_diagonal()
    }

    pub fn sigma_is_constant(&self) -> bool {
        self.field.sigma_is_constant()
    }

    pub fn known_invariant_density(&self, y: &[f64]) -> Option<f64> {
        self.field.invariant_density(&canonical(y))
    }

    pub fn known_centered(&self) -> Option<bool> {
        self.field.known_centered()
    }

    /// Evaluates coefficients (and derivatives up to `level`) at `y`, after
    /// reducing `y` modulo 1.
    pub fn evaluate(&self, y: &[f64], level: DerivativeLevel, out: &mut CoefficientEval) -> Result<()> {
        let d = self.dim();
        debug_assert_eq!(y.len(), d);
        debug_assert_eq!(out.dim, d);
        for (c, &v) in out.y.iter_mut().zip(y) {
            *c = v - v.floor();
        }
        let yc = std::mem::take(&mut out.y);
        let res = self.evaluate_canonical(&yc, level, out);
        out.y = yc;
        res?;
        if out.b.iter().chain(&out.sigma).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoefficient { y: y.to_vec() });
        }
        Ok(())
    }

    fn evaluate_canonical(&self, y: &[f64], level: DerivativeLevel, out: &mut CoefficientEval) -> Result<()> {
        match (self.mode, level) {
            (_, DerivativeLevel::Values) => {
                if !self.field.analytic(y, DerivativeLevel::Values, out) {
                    self.field.values(y, &mut out.b, &mut out.sigma);
                }
                Ok(())
            }
            (DerivativeMode::Analytic, _) => {
                if self.field.analytic(y, level, out) {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument("field lost its analytic derivatives".into()))
                }
            }
            (DerivativeMode::FiniteDifference { step }, _) => {
                finite_difference_eval(self.field.as_ref(), y, level, step, out);
                Ok(())
            }
        }
    }

    /// Commutativity verdict on a fixed quasi-random point set, computed once.
    pub fn commutativity(&self) -> Result<CommutativityReport> {
        if let Some(r) = self.commutativity.get() {
            return Ok(*r);
        }
        let pts = quasi_random_points(self.dim(), COMMUTATIVITY_SAMPLES);
        let report = is_commutative(self, &pts)?;
        Ok(*self.commutativity.get_or_init(|| report))
    }

    /// Smallest and largest eigenvalue of `A` over a uniform grid with
    /// `per_axis` nodes per coordinate.
    pub fn ellipticity_bounds(&self, per_axis: usize) -> Result<(f64, f64)> {
        let d = self.dim();
        let mut eval = CoefficientEval::new(d);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut y = vec![0.0; d];
        let total = per_axis.pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            for c in y.iter_mut() {
                *c = (rem % per_axis) as f64 / per_axis as f64;
                rem /= per_axis;
            }
            self.evaluate(&y, DerivativeLevel::Values, &mut eval)?;
            let a = eval.diffusion_matrix();
            let ev = symmetric_eigenvalues(d, a.as_slice());
            if ev[0] <= 0.0 {
                return Err(Error::NotElliptic { y: y.clone(), min_eigenvalue: ev[0] });
            }
            lo = lo.min(ev[0]);
            hi = hi.max(ev[d - 1]);
        }
        Ok((lo, hi))
    }
}

/// Reduces each coordinate modulo 1.
pub fn canonical(y: &[f64]) -> Vec<f64> {
    y.iter().map(|v| v - v.floor()).collect()
}

/// Kronecker (additive recurrence) points in `[0,1)ᵈ`.
pub fn quasi_random_points(dim: usize, count: usize) -> Vec<Vec<f64>> {
    // Generalized golden ratio: root of x^(d+1) = x + 1.
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=dim).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
    (1..=count).map(|n| alpha.iter().map(|a| (0.5 + a * n as f64).fract()).collect()).collect()
}

fn finite_difference_eval(
    field: &dyn CoefficientField,
    y: &[f64],
    level: DerivativeLevel,
    step: f64,
    out: &mut CoefficientEval,
) {
    let d = field.dim();
    let dd = d * d;
    field.values(y, &mut out.b, &mut out.sigma);

    // scratch: [point | b | sigma] for each of 4 stencil evaluations
    let block = d + d + dd;
    out.scratch.resize(5 * block, 0.0);
    let (pt, rest) = out.scratch.split_at_mut(block);
    let pt = &mut pt[..d];
    let mut probes: Vec<&mut [f64]> = rest.chunks_mut(block).collect();

    let mut sample = |shift: &[(usize, f64)], slot: &mut [f64]| {
        pt.copy_from_slice(y);
        for &(k, s) in shift {
            pt[k] += s;
        }
        let (bs, ss) = slot.split_at_mut(d);
        field.values(pt, &mut bs[..d], &mut ss[..dd]);
    };

    let e = step;
    for k in 0..d {
        let (p, rest2) = probes.split_at_mut(1);
        sample(&[(k, e)], p[0]);
        sample(&[(k, -e)], rest2[0]);
        for i in 0..d {
            out.jac_b[i * d + k] = (p[0][i] - rest2[0][i]) / (2.0 * e);
        }
        for ij in 0..dd {
            out.grad_sigma[ij * d + k] = (p[0][d + ij] - rest2[0][d + ij]) / (2.0 * e);
        }
    }
    if level < DerivativeLevel::Second {
        return;
    }

    // Second differences lose digits as step⁻²; use a wider stencil.
    let e2 = 10.0 * step;
    for k1 in 0..d {
        for k2 in k1..d {
            let (a, rest2) = probes.split_at_mut(1);
            let (b, rest3) = rest2.split_at_mut(1);
            let (c, dslot) = rest3.split_at_mut(1);
            if k1 == k2 {
                sample(&[(k1, e2)], a[0]);
                sample(&[(k1, -e2)], b[0]);
                let inv = 1.0 / (e2 * e2);
                for i in 0..d {
                    out.hess_b[(i * d + k1) * d + k1] = (a[0][i] - 2.0 * out.b[i] + b[0][i]) * inv;
                }
                for ij in 0..dd {
                    out.hess_sigma[(ij * d + k1) * d + k1] = (a[0][d + ij] - 2.0 * out.sigma[ij] + b[0][d + ij]) * inv;
                }
            } else {
                sample(&[(k1, e2), (k2, e2)], a[0]);
                sample(&[(k1, e2), (k2, -e2)], b[0]);
                sample(&[(k1, -e2), (k2, e2)], c[0]);
                sample(&[(k1, -e2), (k2, -e2)], dslot[0]);
                let inv = 1.0 / (4.0 * e2 * e2);
                for i in 0..d {
                    let v = (a[0][i] - b[0][i] - c[0][i] + dslot[0][i]) * inv;
                    out.hess_b[(i * d + k1) * d + k2] = v;
                    out.hess_b[(i * d + k2) * d + k1] = v;
                }
                for ij in 0..dd {
                    let v = (a[0][d + ij] - b[0][d + ij] - c[0][d + ij] + dslot[0][d + ij]) * inv;
                    out.hess_sigma[(ij * d + k1) * d + k2] = v;
                    out.hess_sigma[(ij * d + k2) * d + k1] = v;
                }
            }
        }
    }
}

/// `b`, `σ` and `A = ½σσᵀ` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientValues {
    pub b: Vec<f64>,
    pub sigma: Matrix,
    pub a: Matrix,
}

pub fn evaluate_coefficients(problem: &Problem, y: &[f64]) -> Result<CoefficientValues> {
    check_point(problem, y)?;
    let mut eval = CoefficientEval::new(problem.dim());
    problem.evaluate(y, DerivativeLevel::Values, &mut eval)?;
    Ok(CoefficientValues {
        b: eval.b.clone(),
        sigma: Matrix::from_row_major(problem.dim(), eval.sigma.clone()),
        a: eval.diffusion_matrix(),
    })
}

fn check_point(problem: &Problem, y: &[f64]) -> Result<()> {
    if y.len() != problem.dim() {
        return Err(Error::InvalidArgument(format!(
            "point has {} coordinates, problem dimension is {}",
            y.len(),
            problem.dim()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite point {y:?}")));
    }
    Ok(())
}

/// `Ξ_{i,[j1,j2]} = Σ_k ∂_k σ_{i,j2} σ_{k,j1}`, flat at `(i*d + j1)*d + j2`.
pub fn xi_tensor(eval: &CoefficientEval, out: &mut [f64]) {
    match eval.dim {
        1 => xi_body(1, eval, out),
        2 => xi_body(2, eval, out),
        3 => xi_body(3, eval, out),
        d => xi_body(d, eval, out),
    }
}

#[inline(always)]
fn xi_body(d: usize, eval: &CoefficientEval, out: &mut [f64]) {
    for i in 0..d {
        for j1 in 0..d {
            for j2 in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += eval.grad_sigma[(i * d + j2) * d + k] * eval.sigma[k * d + j1];
                }
                out[(i * d + j1) * d + j2] = s;
            }
        }
    }
}

/// The Milstein tensor at `y`, flat at `(i*d + j1)*d + j2`.
pub fn milstein_xi(problem: &Problem, y: &[f64]) -> Result<Vec<f64>> {
    check_point(problem, y)?;
    let d = problem.dim();
    let mut eval = CoefficientEval::new(d);
    problem.evaluate(y, DerivativeLevel::First, &mut eval)?;
    let mut xi = vec![0.0; d * d * d];
    xi_tensor(&eval, &mut xi);
    Ok(xi)
}

/// Checks `Ξ_{i,[j1,j2]} = Ξ_{i,[j2,j1]}` on the given points.
pub fn is_commutative(problem: &Problem, points: &[Vec<f64>]) -> Result<CommutativityReport> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("commutativity check needs at least one point".into()));
    }
    let d = problem.dim();
    let mut worst = 0.0f64;
    if !problem.sigma_is_constant() {
        let mut eval = CoefficientEval::new(d);
        let mut xi = vec![0.0; d * d * d];
        for y in points {
            check_point(problem, y)?;
            problem.evaluate(y, DerivativeLevel::First, &mut eval)?;
            xi_tensor(&eval, &mut xi);
            for i in 0..d {
                for j1 in 0..d {
                    for j2 in 0..j1 {
                        let a = (xi[(i * d + j1) * d + j2] - xi[(i * d + j2) * d + j1]).abs();
                        worst = worst.max(a);
                    }
                }
            }
        }
    }
    Ok(CommutativityReport { commutative: worst <= COMMUTATIVITY_TOL, max_asymmetry: worst })
}

/// First-order modified-equation corrections:
///
/// `b₁_i = ½ b·∇b_i + ¼ (σσᵀ):∇²b_i`
/// `σ₁_{j1j2} = ½ ((∇b)σ)_{j1j2} + ½ b·∇σ_{j1j2} + ¼ (σσᵀ):∇²σ_{j1j2}`
///
/// `eval` must hold second derivatives. `sst` is a `d×d` scratch buffer.
pub fn first_order_corrections(eval: &CoefficientEval, sst: &mut [f64], b1: &mut [f64], sigma1: &mut [f64]) {
    match eval.dim {
        1 => corrections_body(1, eval, sst, b1, sigma1),
        2 => corrections_body(2, eval, sst, b1, sigma1),
        3 => corrections_body(3, eval, sst, b1, sigma1),
        d => corrections_body(d, eval, sst, b1, sigma1),
    }
}

#[inline(always)]
fn corrections_body(d: usize, eval: &CoefficientEval, sst: &mut [f64], b1: &mut [f64], sigma1: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += eval.sigma[i * d + k] * eval.sigma[j * d + k];
            }
            sst[i * d + j] = s;
        }
    }
    for i in 0..d {
        let mut adv = 0.0;
        for k in 0..d {
            adv += eval.b[k] * eval.jac_b[i * d + k];
        }
        let mut diff = 0.0;
        for k1 in 0..d {
            for k2 in 0..d {
                diff += sst[k1 * d + k2] * eval.hess_b[(i * d + k1) * d + k2];
            }
        }
        b1[i] = 0.5 * adv + 0.25 * diff;
    }
    for j1 in 0..d {
        for j2 in 0..d {
            let ij = j1 * d + j2;
            let mut stretch = 0.0;
            for k in 0..d {
                stretch += eval.jac_b[j1 * d + k] * eval.sigma[k * d + j2];
            }
            let mut adv = 0.0;
            for k in 0..d {
                adv += eval.b[k] * eval.grad_sigma[ij * d + k];
            }
            let mut diff = 0.0;
            for k1 in 0..d {
                for k2 in 0..d {
                    diff += sst[k1 * d + k2] * eval.hess_sigma[(ij * d + k1) * d + k2];
                }
            }
            sigma1[ij] = 0.5 * stretch + 0.5 * adv + 0.25 * diff;
        }
    }
}

/// Modified coefficients `b_h = b + h b₁`, `σ_h = σ + h σ₁` of a problem.
#[derive(Clone, Debug)]
pub struct ModifiedCoefficients {
    problem: Problem,
    h: f64,
}

pub fn modified_coefficients(problem: &Problem, h: f64) -> Result<ModifiedCoefficients> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {h}")));
    }
    Ok(ModifiedCoefficients { problem: problem.clone(), h })
}

impl ModifiedCoefficients {
    pub fn h(&self) -> f64 {
        self.h
    }

    /// `(b₁(y), σ₁(y))`.
    pub fn corrections(&self, y: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        check_point(&self.problem, y)?;
        let d = self.problem.dim();
        let mut eval = CoefficientEval::new(d);
        self.problem.evaluate(y, DerivativeLevel::Second, &mut eval)?;
        let mut sst = vec![0.0; d * d];
        let mut b1 = vec![0.0; d];
        let mut s1 = vec![0.0; d * d];
        first_order_corrections(&eval, &mut sst, &mut b1, &mut s1);
        Ok((b1, Matrix::from_row_major(d, s1)))
    }

    /// `(b_h(y), σ_h(y))`.
    pub fn eval(&self, y: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        self.eval_with_step(y, self.h)
    }

    /// `(b + s b₁, σ + s σ₁)` at `y` for any step `s ≥ 0`; `s = 0` returns `(b, σ)` exactly.
    pub fn eval_with_step(&self, y: &[f64], s: f64) -> Result<(Vec<f64>, Matrix)> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be non-negative, got {s}")));
        }
        let (b1, s1) = self.corrections(y)?;
        let base = evaluate_coefficients(&self.problem, y)?;
        let b: Vec<f64> = base.b.iter().zip(&b1).map(|(b, c)| b + s * c).collect();
        let sigma: Vec<f64> = base.sigma.as_slice().iter().zip(s1.as_slice()).map(|(v, c)| v + s * c).collect();
        Ok((b, Matrix::from_row_major(self.problem.dim(), sigma)))
    }
}

#[cfg(test)]
mod tests;
