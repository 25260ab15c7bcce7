//! FFT inverse of the constant-coefficient part of the discrete operator.
//!
//! With `ā` the grid mean of `A`, the operator `−Σ ā_aa D2_a − 2Σ_{a<b} ā_ab D1_a D1_b`
//! is diagonal in Fourier space with symbol
//! `Σ ā_aa λ(θ_a) + 2Σ_{a<b} ā_ab s(θ_a) s(θ_b)`, where
//! `λ(θ) = (30 − 32 cos θ + 2 cos 2θ)/12h²` and `s(θ) = (8 sin θ − sin 2θ)/6h`.
//! It is symmetric, so it serves both `L` and `L*`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::stencil::Grid;

pub(crate) struct FftPreconditioner {
    grid: Grid,
    symbol: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    line: Vec<Complex<f64>>,
}

impl FftPreconditioner {
    pub fn new(grid: &Grid, mean_a: &[f64]) -> Self {
        let (d, n) = (grid.dim, grid.n);
        let h = 1.0 / n as f64;
        let lam: Vec<f64> = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                (30.0 - 32.0 * t.cos() + 2.0 * (2.0 * t).cos()) / (12.0 * h * h)
            })
            .collect();
        let sn: Vec<f64> = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                (8.0 * t.sin() - (2.0 * t).sin()) / (6.0 * h)
            })
            .collect();
        let mut symbol = vec![0.0; grid.len];
        let mut idx = vec![0; d];
        for (p, sym) in symbol.iter_mut().enumerate() {
            let mut q = p;
            for a in (0..d).rev() {
                idx[a] = q % n;
                q /= n;
            }
            let mut s = 0.0;
            for a in 0..d {
                s += mean_a[a * d + a] * lam[idx[a]];
                for b in a + 1..d {
                    s += 2.0 * mean_a[a * d + b] * sn[idx[a]] * sn[idx[b]];
                }
            }
            *sym = s;
        }
        let mut planner = FftPlanner::new();
        Self {
            grid: grid.clone(),
            symbol,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            buf: vec![Complex::new(0.0, 0.0); grid.len],
            line: vec![Complex::new(0.0, 0.0); n],
        }
    }

    fn transform(&mut self, inverse: bool) {
        let (d, n) = (self.grid.dim, self.grid.n);
        let fft = if inverse { &self.inverse } else { &self.forward };
        for a in 0..d {
            let stride = n.pow((d - 1 - a) as u32);
            if stride == 1 {
                for chunk in self.buf.chunks_exact_mut(n) {
                    fft.process(chunk);
                }
                continue;
            }
            let block = stride * n;
            for start in (0..self.grid.len).step_by(block) {
                for off in 0..stride {
                    for k in 0..n {
                        self.line[k] = self.buf[start + off + k * stride];
                    }
                    fft.process(&mut self.line);
                    for k in 0..n {
                        self.buf[start + off + k * stride] = self.line[k];
                    }
                }
            }
        }
    }

    /// Solves `[[L₀, 1], [meanᵀ, 0]] [u; μ] = [f; g]` where `x = [f; g]`.
    pub fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        let len = self.grid.len;
        let (f, g) = (&x[..len], x[len]);
        for (c, &v) in self.buf.iter_mut().zip(f) {
            *c = Complex::new(v, 0.0);
        }
        self.transform(false);
        let mu = self.buf[0].re / len as f64;
        for (c, &s) in self.buf.iter_mut().zip(&self.symbol).skip(1) {
            *c /= s;
        }
        self.buf[0] = Complex::new(g * len as f64, 0.0);
        self.transform(true);
        let scale = 1.0 / len as f64;
        for (o, c) in out[..len].iter_mut().zip(&self.buf) {
            *o = c.re * scale;
        }
        out[len] = mu;
    }
}
