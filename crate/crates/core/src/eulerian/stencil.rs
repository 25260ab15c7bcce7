//! Fourth-order central differences on the periodic grid.
//!
//! `D1 f = (−f₊₂ + 8f₊₁ − 8f₋₁ + f₋₂)/12h` is antisymmetric and
//! `D2 f = (−f₊₂ + 16f₊₁ − 30f₀ + 16f₋₁ − f₋₂)/12h²` symmetric, and the
//! per-axis operators commute. Writing `L = −Σ A_aa D2_a − 2Σ_{a<b} A_ab D1_a D1_b − Σ b_a D1_a`
//! and `L* = −Σ D2_a A_aa − 2Σ_{a<b} D1_a D1_b A_ab + Σ D1_a b_a` therefore makes the
//! discrete `L*` the exact transpose of the discrete `L`.

use crate::coeffs::{CoefficientEval, DerivativeLevel, Problem};
use crate::error::Result;
use crate::grid::{Sampling, TorusGridField};

#[derive(Clone, Debug)]
pub(crate) struct Grid {
    pub dim: usize,
    pub n: usize,
    pub len: usize,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Self {
        let strides = (0..dim).map(|a| n.pow((dim - 1 - a) as u32)).collect();
        Self { dim, n, len: n.pow(dim as u32), strides }
    }

    /// `f(p + δ e_axis)` for every `p`, via an index map.
    fn shift_index(&self, axis: usize, delta: isize) -> Vec<usize> {
        let n = self.n as isize;
        let s = self.strides[axis];
        (0..self.len)
            .map(|p| {
                let i = ((p / s) % self.n) as isize;
                let j = (i + delta).rem_euclid(n);
                (p as isize + (j - i) * s as isize) as usize
            })
            .collect()
    }

    pub fn field(&self, values: Vec<f64>, components: usize) -> TorusGridField {
        TorusGridField { dim: self.dim, n: self.n, components, sampling: Sampling::Node, values }
    }
}

/// Neighbour tables for one axis.
#[derive(Clone, Debug)]
struct AxisShifts {
    m2: Vec<usize>,
    m1: Vec<usize>,
    p1: Vec<usize>,
    p2: Vec<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct Stencils {
    pub grid: Grid,
    inv_h: f64,
    axes: Vec<AxisShifts>,
}

impl Stencils {
    pub fn new(grid: Grid) -> Self {
        let axes = (0..grid.dim)
            .map(|a| AxisShifts {
                m2: grid.shift_index(a, -2),
                m1: grid.shift_index(a, -1),
                p1: grid.shift_index(a, 1),
                p2: grid.shift_index(a, 2),
            })
            .collect();
        let inv_h = grid.n as f64;
        Self { grid, inv_h, axes }
    }

    pub fn d1(&self, axis: usize, f: &[f64], out: &mut [f64]) {
        let s = &self.axes[axis];
        let c = self.inv_h / 12.0;
        for p in 0..f.len() {
            out[p] = c * ((f[s.m2[p]] - f[s.p2[p]]) + 8.0 * (f[s.p1[p]] - f[s.m1[p]]));
        }
    }

    pub fn d2(&self, axis: usize, f: &[f64], out: &mut [f64]) {
        let s = &self.axes[axis];
        let c = self.inv_h * self.inv_h / 12.0;
        for p in 0..f.len() {
            out[p] = c * (16.0 * (f[s.p1[p]] + f[s.m1[p]]) - (f[s.p2[p]] + f[s.m2[p]]) - 30.0 * f[p]);
        }
    }
}

/// Coefficients sampled at the grid nodes.
#[derive(Clone, Debug)]
pub(crate) struct NodeCoefficients {
    /// `a[(i*d + j)][p]` = A_ij at node p.
    pub a: Vec<Vec<f64>>,
    /// `b[i][p]`.
    pub b: Vec<Vec<f64>>,
}

impl NodeCoefficients {
    pub fn sample(problem: &Problem, grid: &Grid) -> Result<Self> {
        let d = grid.dim;
        let mut a = vec![vec![0.0; grid.len]; d * d];
        let mut b = vec![vec![0.0; grid.len]; d];
        let mut eval = CoefficientEval::new(d);
        let mut y = vec![0.0; d];
        let field = grid.field(Vec::new(), 1);
        for p in 0..grid.len {
            field.node_coordinates(p, &mut y);
            problem.evaluate(&y, DerivativeLevel::Values, &mut eval)?;
            let am = eval.diffusion_matrix();
            for i in 0..d {
                b[i][p] = eval.b[i];
                for j in 0..d {
                    a[i * d + j][p] = am[(i, j)];
                }
            }
        }
        Ok(Self { a, b })
    }

    /// Grid mean of `A`.
    pub fn mean_a(&self, d: usize) -> Vec<f64> {
        self.a.iter().take(d * d).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    }
}

/// The discrete generator and its adjoint with scratch buffers.
pub(crate) struct Operator<'a> {
    pub st: &'a Stencils,
    pub co: &'a NodeCoefficients,
    t1: Vec<f64>,
    t2: Vec<f64>,
    t3: Vec<f64>,
}

impl<'a> Operator<'a> {
    pub fn new(st: &'a Stencils, co: &'a NodeCoefficients) -> Self {
        let len = st.grid.len;
        Self { st, co, t1: vec![0.0; len], t2: vec![0.0; len], t3: vec![0.0; len] }
    }

    /// `out = L u = −A:∇²u − b·∇u`.
    pub fn apply_l(&mut self, u: &[f64], out: &mut [f64]) {
        let d = self.st.grid.dim;
        out.fill(0.0);
        for a in 0..d {
            self.st.d2(a, u, &mut self.t1);
            let caa = &self.co.a[a * d + a];
            self.st.d1(a, u, &mut self.t2);
            let ba = &self.co.b[a];
            for p in 0..out.len() {
                out[p] -= caa[p] * self.t1[p] + ba[p] * self.t2[p];
            }
            for b in a + 1..d {
                self.st.d1(b, &self.t2, &mut self.t3);
                let cab = &self.co.a[a * d + b];
                for p in 0..out.len() {
                    out[p] -= 2.0 * cab[p] * self.t3[p];
                }
            }
        }
    }

    /// `out = L* r = −∇²:(A r) + ∇·(b r)`.
    pub fn apply_adjoint(&mut self, r: &[f64], out: &mut [f64]) {
        let d = self.st.grid.dim;
        out.fill(0.0);
        for a in 0..d {
            let caa = &self.co.a[a * d + a];
            for p in 0..r.len() {
                self.t1[p] = caa[p] * r[p];
            }
            self.st.d2(a, &self.t1, &mut self.t2);
            for p in 0..r.len() {
                out[p] -= self.t2[p];
            }
            let ba = &self.co.b[a];
            for p in 0..r.len() {
                self.t1[p] = ba[p] * r[p];
            }
            self.st.d1(a, &self.t1, &mut self.t2);
            for p in 0..r.len() {
                out[p] += self.t2[p];
            }
            for b in a + 1..d {
                let cab = &self.co.a[a * d + b];
                for p in 0..r.len() {
                    self.t1[p] = cab[p] * r[p];
                }
                self.st.d1(b, &self.t1, &mut self.t2);
                self.st.d1(a, &self.t2, &mut self.t3);
                for p in 0..r.len() {
                    out[p] -= 2.0 * self.t3[p];
                }
            }
        }
    }
}
