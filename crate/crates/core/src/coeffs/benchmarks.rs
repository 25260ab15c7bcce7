//! Benchmark problems with hand-coded derivatives.
//!
//! * `benchmark-2d-constant`: cellular flow `b = 2π(sin sin, cos cos)`, `σ = 2I`.
//! * `benchmark-2d-variable`: anisotropic diagonal `A`, invariant density
//!   `1 + ½ sin(2πy₁) sin(2πy₂)`.
//! * `benchmark-3d`: three-dimensional analogue coupled through `y₂, y₃`.
//! * `free-brownian`: `b = 0`, `σ = √2 I₂`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use super::jet::Jet;
use super::{CoefficientEval, CoefficientField, DerivativeLevel, DerivativeMode, Problem};

const K: f64 = 2.0 * PI;

pub const NAMES: [&str; 4] = ["benchmark-2d-constant", "benchmark-2d-variable", "benchmark-3d", "free-brownian"];

/// Looks up a shipped benchmark by name.
pub fn by_name(name: &str) -> Option<Problem> {
    Some(match name {
        "benchmark-2d-constant" => cellular_flow(),
        "benchmark-2d-variable" => anisotropic_2d(),
        "benchmark-3d" => anisotropic_3d(),
        "free-brownian" => free_brownian(2),
        _ => return None,
    })
}

fn analytic(name: &str, field: Arc<dyn CoefficientField>) -> Problem {
    Problem::new(name, field, DerivativeMode::Analytic).expect("benchmark fields are analytic")
}

pub fn cellular_flow() -> Problem {
    analytic("benchmark-2d-constant", Arc::new(CellularFlow))
}

pub fn anisotropic_2d() -> Problem {
    analytic("benchmark-2d-variable", Arc::new(AnisotropicFlow::<2> { p: 0, q: 1 }))
}

pub fn anisotropic_3d() -> Problem {
    analytic("benchmark-3d", Arc::new(AnisotropicFlow::<3> { p: 1, q: 2 }))
}

pub fn free_brownian(dim: usize) -> Problem {
    let mut sigma = vec![0.0; dim * dim];
    for i in 0..dim {
        sigma[i * dim + i] = SQRT_2;
    }
    analytic("free-brownian", Arc::new(ConstantField::new(vec![0.0; dim], sigma)))
}

/// The cellular flow with a constant added to the drift. The invariant
/// density stays uniform, so the mean drift equals `shift`.
pub fn shifted_cellular_flow(shift: [f64; 2]) -> Problem {
    let field = ShiftedDrift::new(Arc::new(CellularFlow), shift.to_vec(), true);
    analytic("benchmark-2d-constant-shifted", Arc::new(field))
}

fn write_b<const N: usize>(out: &mut CoefficientEval, i: usize, jet: &Jet<N>, level: DerivativeLevel) {
    out.b[i] = jet.v;
    if level >= DerivativeLevel::First {
        for k in 0..N {
            out.jac_b[i * N + k] = jet.g[k];
        }
    }
    if level >= DerivativeLevel::Second {
        for k1 in 0..N {
            for k2 in 0..N {
                out.hess_b[(i * N + k1) * N + k2] = jet.h[k1][k2];
            }
        }
    }
}

fn write_sigma<const N: usize>(out: &mut CoefficientEval, ij: usize, jet: &Jet<N>, level: DerivativeLevel) {
    out.sigma[ij] = jet.v;
    if level >= DerivativeLevel::First {
        for k in 0..N {
            out.grad_sigma[ij * N + k] = jet.g[k];
        }
    }
    if level >= DerivativeLevel::Second {
        for k1 in 0..N {
            for k2 in 0..N {
                out.hess_sigma[(ij * N + k1) * N + k2] = jet.h[k1][k2];
            }
        }
    }
}

fn zero_derivatives(out: &mut CoefficientEval, level: DerivativeLevel) {
    if level >= DerivativeLevel::First {
        out.jac_b.fill(0.0);
        out.grad_sigma.fill(0.0);
    }
    if level >= DerivativeLevel::Second {
        out.hess_b.fill(0.0);
        out.hess_sigma.fill(0.0);
    }
}

/// `b(y) = 2π (sin 2πy₁ sin 2πy₂, cos 2πy₁ cos 2πy₂)`, `σ = 2 I₂`.
#[derive(Debug, Clone, Copy)]
pub struct CellularFlow;

impl CellularFlow {
    fn fill_values(s: [f64; 2], c: [f64; 2], b: &mut [f64], sigma: &mut [f64]) {
        b[0] = K * s[0] * s[1];
        b[1] = K * c[0] * c[1];
        sigma.copy_from_slice(&[2.0, 0.0, 0.0, 2.0]);
    }
}

impl CoefficientField for CellularFlow {
    fn dim(&self) -> usize {
        2
    }

    fn values(&self, y: &[f64], b: &mut [f64], sigma: &mut [f64]) {
        let (s1, c1) = (K * y[0]).sin_cos();
        let (s2, c2) = (K * y[1]).sin_cos();
        Self::fill_values([s1, s2], [c1, c2], b, sigma);
    }

    fn analytic(&self, y: &[f64], level: DerivativeLevel, out: &mut CoefficientEval) -> bool {
        if level == DerivativeLevel::Values {
            self.values(y, &mut out.b, &mut out.sigma);
            return true;
        }
        let (s1, c1) = (K * y[0]).sin_cos();
        let (s2, c2) = (K * y[1]).sin_cos();
        let (js1, jc1) = Jet::<2>::trig(0, K, s1, c1);
        let (js2, jc2) = Jet::<2>::trig(1, K, s2, c2);
        write_b(out, 0, &js1.mul(&js2).scale(K), level);
        write_b(out, 1, &jc1.mul(&jc2).scale(K), level);
        // Values from the plain formula so every level agrees bitwise.
        Self::fill_values([s1, s2], [c1, c2], &mut out.b, &mut out.sigma);
        out.grad_sigma.fill(0.0);
        if level >= DerivativeLevel::Second {
            out.hess_sigma.fill(0.0);
        }
        true
    }

    fn has_analytic_derivatives(&self) -> bool {
        true
    }

    fn sigma_is_diagonal(&self) -> bool {
        true
    }

    fn sigma_is_constant(&self) -> bool {
        true
    }

    fn invariant_density(&self, _y: &[f64]) -> Option<f64> {
        Some(1.0)
    }

    fn known_centered(&self) -> Option<bool> {
        Some(true)
    }
}

/// Diagonal anisotropic diffusion with drift, coupled through coordinates `p`, `q`:
///
/// `D = 2 + sin 2πy_p sin 2πy_q`, `A_ii = (2 + sin 2πy_i)/D`,
/// `b_i = 2π cos 2πy_i / D`, `σ = √2 A^{1/2}`, `r = D/2`.
#[derive(Debug, Clone, Copy)]
pub struct AnisotropicFlow<const N: usize> {
    pub p: usize,
    pub q: usize,
}

impl<const N: usize> AnisotropicFlow<N> {
    fn fill_values(&self, s: &[f64; N], c: &[f64; N], b: &mut [f64], sigma: &mut [f64]) {
        let inv_d = 1.0 / (2.0 + s[self.p] * s[self.q]);
        sigma.fill(0.0);
        for i in 0..N {
            b[i] = K * c[i] * inv_d;
            sigma[i * N + i] = (2.0 * (2.0 + s[i]) * inv_d).sqrt();
        }
    }
}

impl<const N: usize> CoefficientField for AnisotropicFlow<N> {
    fn dim(&self) -> usize {
        N
    }

    fn values(&self, y: &[f64], b: &mut [f64], sigma: &mut [f64]) {
        let mut s = [0.0; N];
        let mut c = [0.0; N];
        for i in 0..N {
            (s[i], c[i]) = (K * y[i]).sin_cos();
        }
        self.fill_values(&s, &c, b, sigma);
    }

    fn analytic(&self, y: &[f64], level: DerivativeLevel, out: &mut CoefficientEval) -> bool {
        if level == DerivativeLevel::Values {
            self.values(y, &mut out.b, &mut out.sigma);
            return true;
        }
        let mut sj = [Jet::<N>::constant(0.0); N];
        let mut cj = [Jet::<N>::constant(0.0); N];
        let mut s = [0.0; N];
        let mut c = [0.0; N];
        for i in 0..N {
            (s[i], c[i]) = (K * y[i]).sin_cos();
            (sj[i], cj[i]) = Jet::trig(i, K, s[i], c[i]);
        }
        let inv_d = sj[self.p].mul(&sj[self.q]).add_const(2.0).recip();
        zero_derivatives(out, level);
        out.sigma.fill(0.0);
        for i in 0..N {
            write_b(out, i, &cj[i].mul(&inv_d).scale(K), level);
            let sig = sj[i].add_const(2.0).mul(&inv_d).scale(2.0).sqrt();
            write_sigma(out, i * N + i, &sig, level);
        }
        self.fill_values(&s, &c, &mut out.b, &mut out.sigma);
        true
    }

    fn has_analytic_derivatives(&self) -> bool {
        true
    }

    fn sigma_is_diagonal(&self) -> bool {
        true
    }

    fn invariant_density(&self, y: &[f64]) -> Option<f64> {
        Some(1.0 + 0.5 * (K * y[self.p]).sin() * (K * y[self.q]).sin())
    }

    fn known_centered(&self) -> Option<bool> {
        Some(true)
    }
}

/// Constant drift and diffusion factor.
#[derive(Debug, Clone)]
pub struct ConstantField {
    b: Vec<f64>,
    sigma: Vec<f64>,
}

impl ConstantField {
    /// `sigma` is row-major `d×d`.
    pub fn new(b: Vec<f64>, sigma: Vec<f64>) -> Self {
        assert_eq!(sigma.len(), b.len() * b.len(), "sigma must be d×d");
        Self { b, sigma }
    }
}

impl CoefficientField for ConstantField {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn values(&self, _y: &[f64], b: &mut [f64], sigma: &mut [f64]) {
        b.copy_from_slice(&self.b);
        sigma.copy_from_slice(&self.sigma);
    }

    fn analytic(&self, y: &[f64], level: DerivativeLevel, out: &mut CoefficientEval) -> bool {
        self.values(y, &mut out.b, &mut out.sigma);
        zero_derivatives(out, level);
        true
    }

    fn has_analytic_derivatives(&self) -> bool {
        true
    }

    fn sigma_is_diagonal(&self) -> bool {
        let d = self.b.len();
        (0..d).all(|i| (0..d).all(|j| i == j || self.sigma[i * d + j] == 0.0))
    }

    fn sigma_is_constant(&self) -> bool {
        true
    }

    fn invariant_density(&self, _y: &[f64]) -> Option<f64> {
        Some(1.0)
    }

    fn known_centered(&self) -> Option<bool> {
        Some(self.b.iter().all(|&v| v == 0.0))
    }
}

/// Adds a constant vector to the drift of another field.
#[derive(Debug, Clone)]
pub struct ShiftedDrift {
    inner: Arc<dyn CoefficientField>,
    shift: Vec<f64>,
    keeps_density: bool,
}

impl ShiftedDrift {
    /// `keeps_density` asserts that the inner invariant density is also
    /// invariant for the shifted drift (true whenever it is constant).
    pub fn new(inner: Arc<dyn CoefficientField>, shift: Vec<f64>, keeps_density: bool) -> Self {
        assert_eq!(shift.len(), inner.dim());
        Self { inner, shift, keeps_density }
    }
}

impl CoefficientField for ShiftedDrift {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn values(&self, y: &[f64], b: &mut [f64], sigma: &mut [f64]) {
        self.inner.values(y, b, sigma);
        for (b, s) in b.iter_mut().zip(&self.shift) {
            *b += s;
        }
    }

    fn analytic(&self, y: &[f64], level: DerivativeLevel, out: &mut CoefficientEval) -> bool {
        if !self.inner.analytic(y, level, out) {
            return false;
        }
        for (b, s) in out.b.iter_mut().zip(&self.shift) {
            *b += s;
        }
        true
    }

    fn has_analytic_derivatives(&self) -> bool {
        self.inner.has_analytic_derivatives()
    }

    fn sigma_is_diagonal(&self) -> bool {
        self.inner.sigma_is_diagonal()
    }

    fn sigma_is_constant(&self) -> bool {
        self.inner.sigma_is_constant()
    }

    fn invariant_density(&self, y: &[f64]) -> Option<f64> {
        if self.keeps_density {
            self.inner.invariant_density(y)
        } else {
            None
        }
    }

    fn known_centered(&self) -> Option<bool> {
        if self.shift.iter().all(|&s| s == 0.0) {
            self.inner.known_centered()
        } else if self.keeps_density && self.inner.known_centered() == Some(true) {
            Some(false)
        } else {
            None
        }
    }
}
