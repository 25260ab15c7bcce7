use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::benchmarks::{self, ConstantField};
use super::*;

const K: f64 = 2.0 * PI;

fn random_points(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

// Closed forms of the variable benchmark, written independently of the jets.
fn aniso_b(y: &[f64]) -> [f64; 2] {
    let den = 2.0 + (K * y[0]).sin() * (K * y[1]).sin();
    [K * (K * y[0]).cos() / den, K * (K * y[1]).cos() / den]
}

fn aniso_sigma(y: &[f64]) -> [[f64; 2]; 2] {
    let den = 2.0 + (K * y[0]).sin() * (K * y[1]).sin();
    [[((4.0 + 2.0 * (K * y[0]).sin()) / den).sqrt(), 0.0], [0.0, ((4.0 + 2.0 * (K * y[1]).sin()) / den).sqrt()]]
}

fn central<F: Fn(&[f64]) -> f64>(f: F, y: &[f64], k: usize, e: f64) -> f64 {
    let mut p = y.to_vec();
    let mut m = y.to_vec();
    p[k] += e;
    m[k] -= e;
    (f(&p) - f(&m)) / (2.0 * e)
}

/// Central difference with one Richardson step: error `O(e⁴)`.
fn richardson<F: Fn(&[f64]) -> f64>(f: F, y: &[f64], k: usize, e: f64) -> f64 {
    (4.0 * central(&f, y, k, 0.5 * e) - central(&f, y, k, e)) / 3.0
}

fn richardson2<F: Fn(&[f64]) -> f64>(f: F, y: &[f64], k1: usize, k2: usize, e: f64) -> f64 {
    let g = |z: &[f64]| richardson(&f, z, k2, e);
    richardson(g, y, k1, e)
}

#[test]
fn cellular_flow_values_at_quarter_point() {
    let p = benchmarks::cellular_flow();
    let v = evaluate_coefficients(&p, &[0.25, 0.25]).unwrap();
    assert!((v.b[0] - 2.0 * PI).abs() < 1e-14);
    assert!(v.b[1].abs() < 1e-14);
    assert_eq!(v.sigma, Matrix::from_row_major(2, vec![2.0, 0.0, 0.0, 2.0]));
    assert_eq!(v.a, Matrix::from_row_major(2, vec![2.0, 0.0, 0.0, 2.0]));
}

#[test]
fn anisotropic_diffusion_is_identity_at_quarter_point() {
    let v = evaluate_coefficients(&benchmarks::anisotropic_2d(), &[0.25, 0.25]).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v.a[(i, j)] - want).abs() < 1e-14);
        }
    }
}

#[test]
fn free_brownian_has_identity_diffusion() {
    let p = benchmarks::free_brownian(3);
    let v = evaluate_coefficients(&p, &[0.3, -7.1, 12.5]).unwrap();
    assert_eq!(v.b, vec![0.0; 3]);
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v.a[(i, j)] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn non_finite_coefficients_are_reported_with_point() {
    let field = ExpressionField::new(&["1/y1".into()], &[vec!["1.0".into()]]).unwrap();
    let p = Problem::with_default_mode("bad", Arc::new(field)).unwrap();
    match evaluate_coefficients(&p, &[0.0]) {
        Err(Error::NonFiniteCoefficient { y }) => assert_eq!(y, vec![0.0]),
        other => panic!("expected evaluation error, got {other:?}"),
    }
}

#[test]
fn xi_vanishes_for_constant_sigma() {
    let p = benchmarks::cellular_flow();
    for y in random_points(2, 20, 1) {
        assert!(milstein_xi(&p, &y).unwrap().iter().all(|&v| v == 0.0));
    }
    let diag = Problem::new(
        "diag",
        Arc::new(ConstantField::new(vec![0.3, 0.1], vec![0.7, 0.0, 0.0, 1.0])),
        DerivativeMode::Analytic,
    )
    .unwrap();
    assert!(milstein_xi(&diag, &[0.4, 0.9]).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn xi_matches_finite_difference_oracle_on_variable_benchmark() {
    let p = benchmarks::anisotropic_2d();
    let y = [0.25, 0.25];
    let xi = milstein_xi(&p, &y).unwrap();
    let s = aniso_sigma(&y);
    let e = 1e-6;
    for i in 0..2 {
        for j1 in 0..2 {
            for j2 in 0..2 {
                let mut want = 0.0;
                for k in 0..2 {
                    let ds = central(|z| aniso_sigma(z)[i][j2], &y, k, e);
                    want += ds * s[k][j1];
                }
                let got = xi[(i * 2 + j1) * 2 + j2];
                assert!((got - want).abs() < 1e-7, "Ξ[{i},{j1},{j2}] = {got}, oracle {want}");
            }
        }
    }
}

#[test]
fn commutativity_verdicts() {
    let pts2 = random_points(2, 100, 7);
    let r = is_commutative(&benchmarks::cellular_flow(), &pts2).unwrap();
    assert!(r.commutative);
    assert_eq!(r.max_asymmetry, 0.0);

    let r = is_commutative(&benchmarks::anisotropic_2d(), &pts2).unwrap();
    assert!(!r.commutative && r.max_asymmetry > COMMUTATIVITY_TOL);

    let pts3 = random_points(3, 100, 8);
    let r = is_commutative(&benchmarks::anisotropic_3d(), &pts3).unwrap();
    assert!(!r.commutative && r.max_asymmetry > COMMUTATIVITY_TOL);

    assert!(is_commutative(&benchmarks::cellular_flow(), &[]).is_err());
    assert!(!benchmarks::anisotropic_2d().commutativity().unwrap().commutative);
}

#[test]
fn modified_coefficients_of_constant_problem_are_unchanged() {
    let p = Problem::new(
        "const",
        Arc::new(ConstantField::new(vec![1.0, -0.5], vec![1.0, 0.2, 0.0, 0.8])),
        DerivativeMode::Analytic,
    )
    .unwrap();
    let m = modified_coefficients(&p, 0.1).unwrap();
    let (b1, s1) = m.corrections(&[0.3, 0.6]).unwrap();
    assert_eq!(b1, vec![0.0, 0.0]);
    assert!(s1.as_slice().iter().all(|&v| v == 0.0));
    let (bh, sh) = m.eval(&[0.3, 0.6]).unwrap();
    assert_eq!(bh, vec![1.0, -0.5]);
    assert_eq!(sh.as_slice(), &[1.0, 0.2, 0.0, 0.8]);
}

#[test]
fn modified_coefficients_reject_non_positive_step() {
    let p = benchmarks::cellular_flow();
    assert!(modified_coefficients(&p, 0.0).is_err());
    assert!(modified_coefficients(&p, -1e-3).is_err());
}

#[test]
fn cellular_flow_drift_correction_matches_symbolic_value() {
    // b₁_1 = ½ b·∇b_1 + Δb_1 (σσᵀ = 4I) = 2π³ sin 4πy₁ − 16π³ sin 2πy₁ sin 2πy₂
    let p = benchmarks::cellular_flow();
    let m = modified_coefficients(&p, 0.01).unwrap();
    for y in [[0.25, 0.25], [0.1, 0.7], [0.83, 0.41]] {
        let (b1, _) = m.corrections(&y).unwrap();
        let want = 2.0 * PI.powi(3) * (2.0 * K * y[0]).sin() - 16.0 * PI.powi(3) * (K * y[0]).sin() * (K * y[1]).sin();
        assert!((b1[0] - want).abs() < 1e-10 * want.abs().max(1.0), "{y:?}");
    }
    let (b1, _) = m.corrections(&[0.25, 0.25]).unwrap();
    assert!((b1[0] + 16.0 * PI.powi(3)).abs() < 1e-10);
    assert!((b1[0] + 496.1).abs() < 0.01);
}

#[test]
fn variable_benchmark_corrections_match_finite_difference_formula() {
    let p = benchmarks::anisotropic_2d();
    let m = modified_coefficients(&p, 0.01).unwrap();
    let e = 1e-3;
    for y in random_points(2, 5, 11) {
        let (b1, s1) = m.corrections(&y).unwrap();
        let b = aniso_b(&y);
        let s = aniso_sigma(&y);
        let mut sst = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                sst[i][j] = (0..2).map(|k| s[i][k] * s[j][k]).sum();
            }
        }
        for i in 0..2 {
            let mut want = 0.0;
            for k in 0..2 {
                want += 0.5 * b[k] * richardson(|z| aniso_b(z)[i], &y, k, e);
                for l in 0..2 {
                    want += 0.25 * sst[k][l] * richardson2(|z| aniso_b(z)[i], &y, k, l, e);
                }
            }
            assert!((b1[i] - want).abs() < 1e-6 * (1.0 + want.abs()), "b1[{i}] {} vs {want}", b1[i]);
        }
        for j1 in 0..2 {
            for j2 in 0..2 {
                let mut want = 0.0;
                for k in 0..2 {
                    want += 0.5 * richardson(|z| aniso_b(z)[j1], &y, k, e) * s[k][j2];
                    want += 0.5 * b[k] * richardson(|z| aniso_sigma(z)[j1][j2], &y, k, e);
                    for l in 0..2 {
                        want += 0.25 * sst[k][l] * richardson2(|z| aniso_sigma(z)[j1][j2], &y, k, l, e);
                    }
                }
                let got = s1[(j1, j2)];
                assert!((got - want).abs() < 1e-6 * (1.0 + want.abs()), "σ1[{j1},{j2}] {got} vs {want}");
            }
        }
    }
}

#[test]
fn modified_coefficients_are_linear_in_step() {
    let p = benchmarks::anisotropic_2d();
    let y = [0.37, 0.81];
    let base = evaluate_coefficients(&p, &y).unwrap();
    let (b1, s1) = modified_coefficients(&p, 1.0).unwrap().corrections(&y).unwrap();
    let nb1 = b1.iter().map(|v| v * v).sum::<f64>().sqrt();
    for h in [1e-2, 5e-3, 1e-3] {
        let (bh, sh) = modified_coefficients(&p, h).unwrap().eval(&y).unwrap();
        let db = bh.iter().zip(&base.b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ds = sh.sub(&base.sigma).frobenius_norm();
        assert!((db / h - nb1).abs() < 1e-9 * nb1.max(1.0));
        assert!((ds / h - s1.frobenius_norm()).abs() < 1e-9 * s1.frobenius_norm().max(1.0));
    }
}

fn all_maps(p: &Problem, y: &[f64]) -> Vec<f64> {
    let mut e = CoefficientEval::new(p.dim());
    p.evaluate(y, DerivativeLevel::Second, &mut e).unwrap();
    [e.b, e.sigma, e.jac_b, e.hess_b, e.grad_sigma, e.hess_sigma].concat()
}

fn shipped() -> Vec<Problem> {
    benchmarks::NAMES.iter().map(|n| benchmarks::by_name(n).unwrap()).collect()
}

#[test]
fn analytic_derivatives_match_central_differences() {
    let e = 1e-5;
    for p in shipped() {
        let d = p.dim();
        for y in random_points(d, 10, 3) {
            let mut an = CoefficientEval::new(d);
            p.evaluate(&y, DerivativeLevel::Second, &mut an).unwrap();
            let vals = |z: &[f64]| {
                let mut ev = CoefficientEval::new(d);
                p.evaluate(z, DerivativeLevel::First, &mut ev).unwrap();
                ev
            };
            for k in 0..d {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[k] += e;
                ym[k] -= e;
                let (ep, em) = (vals(&yp), vals(&ym));
                let close = |fd: f64, a: f64| (fd - a).abs() <= 1e-6 * (1.0 + a.abs());
                for i in 0..d {
                    assert!(close((ep.b[i] - em.b[i]) / (2.0 * e), an.jac_b[i * d + k]));
                    for k2 in 0..d {
                        let fd = (ep.jac_b[i * d + k2] - em.jac_b[i * d + k2]) / (2.0 * e);
                        assert!(close(fd, an.hess_b[(i * d + k2) * d + k]), "{} hess_b", p.name());
                    }
                }
                for ij in 0..d * d {
                    assert!(close((ep.sigma[ij] - em.sigma[ij]) / (2.0 * e), an.grad_sigma[ij * d + k]));
                    for k2 in 0..d {
                        let fd = (ep.grad_sigma[ij * d + k2] - em.grad_sigma[ij * d + k2]) / (2.0 * e);
                        assert!(close(fd, an.hess_sigma[(ij * d + k2) * d + k]), "{} hess_sigma", p.name());
                    }
                }
            }
        }
    }
}

#[test]
fn finite_difference_mode_agrees_with_analytic_mode() {
    for p in shipped() {
        let fd = p.with_mode(DerivativeMode::FiniteDifference { step: DEFAULT_FD_STEP }).unwrap();
        for y in random_points(p.dim(), 10, 5) {
            let a = all_maps(&p, &y);
            let b = all_maps(&fd, &y);
            let d = p.dim();
            // values exact; first derivatives O(ε²); second derivatives use 10ε
            let blocks =
                [(d + d * d, 1e-14), (d * d, 1e-6), (d * d * d, 2e-4), (d * d * d, 1e-6), (d * d * d * d, 2e-4)];
            let tols: Vec<f64> = blocks.iter().flat_map(|&(n, t)| std::iter::repeat_n(t, n)).collect();
            for (i, (x, z)) in a.iter().zip(&b).enumerate() {
                let tol = tols[i];
                assert!((x - z).abs() <= tol * (1.0 + x.abs()), "{} entry {i}: {x} vs {z}", p.name());
            }
        }
    }
}

#[test]
fn shipped_benchmarks_are_elliptic() {
    for p in shipped() {
        let (lo, hi) = p.ellipticity_bounds(32).unwrap();
        assert!(lo > 0.0 && hi >= lo, "{}", p.name());
    }
    let (lo, _) = benchmarks::anisotropic_2d().ellipticity_bounds(32).unwrap();
    assert!(lo >= 1.0 / 3.0 - 1e-12);
}

#[test]
fn degenerate_sigma_fails_ellipticity() {
    let p = Problem::new(
        "degenerate",
        Arc::new(ConstantField::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0])),
        DerivativeMode::Analytic,
    )
    .unwrap();
    assert!(matches!(p.ellipticity_bounds(4), Err(Error::NotElliptic { .. })));
}

#[test]
fn analytic_mode_requires_derivatives() {
    let field = ExpressionField::new(&["0".into()], &[vec!["1.0".into()]]).unwrap();
    assert!(Problem::new("e", Arc::new(field), DerivativeMode::Analytic).is_err());
}

#[test]
fn sigma_of_anisotropic_benchmark_is_sqrt2_root_of_a() {
    let y = [0.61, 0.07];
    let v = evaluate_coefficients(&benchmarks::anisotropic_2d(), &y).unwrap();
    let den = 2.0 + (K * y[0]).sin() * (K * y[1]).sin();
    let a11 = (2.0 + (K * y[0]).sin()) / den;
    assert!((v.sigma[(0, 0)] - SQRT_2 * a11.sqrt()).abs() < 1e-14);
    assert!((v.a[(0, 0)] - a11).abs() < 1e-14);
}

#[test]
fn quasi_random_points_fill_unit_cube() {
    let pts = quasi_random_points(3, 100);
    assert_eq!(pts.len(), 100);
    assert!(pts.iter().flatten().all(|&v| (0.0..1.0).contains(&v)));
}

proptest! {
    #[test]
    fn coefficient_maps_are_periodic(y0 in 0.0f64..1.0, y1 in 0.0f64..1.0, y2 in 0.0f64..1.0, axis in 0usize..3) {
        for p in shipped() {
            let d = p.dim();
            let y: Vec<f64> = [y0, y1, y2][..d].to_vec();
            let mut shifted = y.clone();
            shifted[axis % d] += 1.0;
            let a = all_maps(&p, &y);
            let b = all_maps(&p, &shifted);
            for (x, z) in a.iter().zip(&b) {
                prop_assert!((x - z).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn diffusion_matrix_is_symmetric(y0 in -3.0f64..3.0, y1 in -3.0f64..3.0) {
        let v = evaluate_coefficients(&benchmarks::anisotropic_2d(), &[y0, y1]).unwrap();
        prop_assert_eq!(v.a.max_asymmetry(), 0.0);
        prop_assert!(v.a.min_eigenvalue() > 0.0);
    }
}

#[test]
fn zero_step_returns_original_coefficients_exactly() {
    for p in shipped() {
        let m = modified_coefficients(&p, 0.01).unwrap();
        for y in quasi_random_points(p.dim(), 20) {
            let base = evaluate_coefficients(&p, &y).unwrap();
            let (b, s) = m.eval_with_step(&y, 0.0).unwrap();
            assert_eq!(b, base.b);
            assert_eq!(s, base.sigma);
        }
        assert!(m.eval_with_step(&[0.1; 3][..p.dim()], -1e-3).is_err());
    }
}
