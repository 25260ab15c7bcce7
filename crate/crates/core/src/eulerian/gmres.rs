//! Restarted GMRES with right preconditioning.

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a converged solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    /// True relative residual `‖b − Ax‖/‖b‖` at exit.
    pub residual: f64,
    /// Relative residual at the end of every restart cycle.
    pub history: Vec<f64>,
}

/// Solves `A x = rhs` from the initial guess in `x`, stopping once
/// `‖rhs − Ax‖ ≤ tol · max(‖rhs‖, ‖x‖)`.
///
/// Measuring against `‖x‖` as well keeps the test meaningful when the
/// right-hand side is small next to the operator scale (the bordered density
/// system has `rhs = [0; 1]`), where rounding puts a floor near `ε‖A‖‖x‖`.
pub(crate) fn gmres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<Convergence> {
    let len = rhs.len();
    let bnorm = norm(rhs);
    let mut r = vec![0.0; len];
    let mut w = vec![0.0; len];
    let mut z = vec![0.0; len];
    let residual = |x: &[f64], r: &mut [f64], w: &mut [f64], apply: &mut dyn FnMut(&[f64], &mut [f64])| {
        apply(x, w);
        for i in 0..len {
            r[i] = rhs[i] - w[i];
        }
        norm(r)
    };
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(Convergence { iterations: 0, residual: 0.0, history: vec![0.0] });
    }
    let mut rnorm = residual(x, &mut r, &mut w, &mut apply);
    let mut history = vec![rnorm / bnorm];
    let mut iterations = 0;
    let m = restart.max(1);
    let mut v: Vec<Vec<f64>> = (0..=m).map(|_| vec![0.0; len]).collect();
    let mut hmat = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn, mut g) = (vec![0.0; m], vec![0.0; m], vec![0.0; m + 1]);

    let target = |x: &[f64]| tol * bnorm.max(norm(x));
    while rnorm > target(x) {
        let goal = target(x);
        if iterations >= max_iter {
            return Err(Error::SolverDivergence { residual: rnorm / bnorm, iterations, history });
        }
        for i in 0..len {
            v[0][i] = r[i] / rnorm;
        }
        g.fill(0.0);
        g[0] = rnorm;
        let mut k = 0;
        while k < m && iterations < max_iter {
            precond(&v[k], &mut z);
            apply(&z, &mut w);
            for j in 0..=k {
                let hj = dot(&w, &v[j]);
                hmat[j][k] = hj;
                for i in 0..len {
                    w[i] -= hj * v[j][i];
                }
            }
            let hn = norm(&w);
            hmat[k + 1][k] = hn;
            if hn > 0.0 {
                for i in 0..len {
                    v[k + 1][i] = w[i] / hn;
                }
            }
            for j in 0..k {
                let t = cs[j] * hmat[j][k] + sn[j] * hmat[j + 1][k];
                hmat[j + 1][k] = -sn[j] * hmat[j][k] + cs[j] * hmat[j + 1][k];
                hmat[j][k] = t;
            }
            let den = hmat[k][k].hypot(hmat[k + 1][k]);
            cs[k] = hmat[k][k] / den;
            sn[k] = hmat[k + 1][k] / den;
            hmat[k][k] = den;
            hmat[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            iterations += 1;
            if g[k].abs() <= 0.5 * goal || hn == 0.0 {
                break;
            }
        }
        // Back substitution, then x += P⁻¹ V y.
        let mut y = vec![0.0; k];
        for j in (0..k).rev() {
            let mut s = g[j];
            for l in j + 1..k {
                s -= hmat[j][l] * y[l];
            }
            y[j] = s / hmat[j][j];
        }
        w.fill(0.0);
        for (j, yj) in y.iter().enumerate() {
            for i in 0..len {
                w[i] += yj * v[j][i];
            }
        }
        precond(&w, &mut z);
        for i in 0..len {
            x[i] += z[i];
        }
        rnorm = residual(x, &mut r, &mut w, &mut apply);
        history.push(rnorm / bnorm);
        if !rnorm.is_finite() {
            return Err(Error::SolverDivergence { residual: rnorm, iterations, history });
        }
    }
    Ok(Convergence { iterations, residual: rnorm / bnorm, history })
}
