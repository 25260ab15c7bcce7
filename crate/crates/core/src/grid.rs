//! Fields on a uniform periodic grid of `[0,1)ᵈ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the stored values live.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Point values at `k/n`.
    Node,
    /// Averages over the cells `[k/n, (k+1)/n)`.
    CellAverage,
}

/// A scalar or vector field with `nᵈ` grid points, first axis slowest.
///
/// Values are stored point-major: component `c` of point `p` is
/// `values[p * components + c]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGridField {
    pub dim: usize,
    pub n: usize,
    pub components: usize,
    pub sampling: Sampling,
    pub values: Vec<f64>,
}

impl TorusGridField {
    pub fn zeros(dim: usize, n: usize, components: usize, sampling: Sampling) -> Self {
        let len = n.pow(dim as u32) * components;
        Self { dim, n, components, sampling, values: vec![0.0; len] }
    }

    pub fn from_values(dim: usize, n: usize, components: usize, sampling: Sampling, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || n == 0 || components == 0 || values.len() != n.pow(dim as u32) * components {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fit a {n}^{dim} grid with {components} components",
                values.len()
            )));
        }
        Ok(Self { dim, n, components, sampling, values })
    }

    /// Scalar field sampled at the nodes.
    pub fn from_fn(dim: usize, n: usize, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut out = Self::zeros(dim, n, 1, Sampling::Node);
        let mut y = vec![0.0; dim];
        for p in 0..out.points() {
            out.node_coordinates(p, &mut y);
            out.values[p] = f(&y);
        }
        out
    }

    pub fn points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Multi-index of a flat point index.
    pub fn multi_index(&self, mut p: usize, idx: &mut [usize]) {
        for a in (0..self.dim).rev() {
            idx[a] = p % self.n;
            p /= self.n;
        }
    }

    /// Flat index of a multi-index taken mod `n`.
    pub fn flat_index(&self, idx: &[isize]) -> usize {
        let n = self.n as isize;
        idx.iter().fold(0, |acc, &i| acc * self.n + i.rem_euclid(n) as usize)
    }

    /// Node position `k/n`, or the cell centre for cell averages.
    pub fn node_coordinates(&self, p: usize, y: &mut [f64]) {
        let offset = match self.sampling {
            Sampling::Node => 0.0,
            Sampling::CellAverage => 0.5,
        };
        let mut p = p;
        for a in (0..self.dim).rev() {
            y[a] = ((p % self.n) as f64 + offset) / self.n as f64;
            p /= self.n;
        }
    }

    pub fn get(&self, p: usize, c: usize) -> f64 {
        self.values[p * self.components + c]
    }

    /// Values of one component.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.components).copied().collect()
    }

    /// Integral over the unit torus: the point mean (periodic trapezoidal
    /// rule for nodes, exact for cell averages).
    pub fn integral(&self, c: usize) -> f64 {
        let sum: f64 = self.values.iter().skip(c).step_by(self.components).sum();
        sum / self.points() as f64
    }

    /// Sums out every axis not listed in `keep`, returning the marginal
    /// field (values averaged over the removed axes).
    pub fn marginal(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() || keep.iter().any(|&a| a >= self.dim) || keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("invalid marginal axes {keep:?}")));
        }
        let mut out = Self::zeros(keep.len(), self.n, self.components, self.sampling);
        let removed = self.points() / out.points();
        let mut idx = vec![0; self.dim];
        let mut sub = vec![0isize; keep.len()];
        for p in 0..self.points() {
            self.multi_index(p, &mut idx);
            for (s, &a) in sub.iter_mut().zip(keep) {
                *s = idx[a] as isize;
            }
            let q = out.flat_index(&sub);
            for c in 0..self.components {
                out.values[q * self.components + c] += self.get(p, c);
            }
        }
        for v in &mut out.values {
            *v /= removed as f64;
        }
        Ok(out)
    }

    /// `∫ |f − g|` of two scalar fields on the same grid.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if self.dim != other.dim || self.n != other.n || self.components != 1 || other.components != 1 {
            return Err(Error::InvalidArgument("fields are not comparable".into()));
        }
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum();
        Ok(s / self.points() as f64)
    }
}
