use std::sync::Arc;

use super::*;
use crate::coeffs::benchmarks::{self, ConstantField};
use crate::coeffs::DerivativeMode;
use crate::linalg::Matrix;
use crate::schemes::SchemeKind;

fn brownian_config(kind: SchemeKind, particles: usize) -> EnsembleConfig {
    EnsembleConfig::new(particles, 1.0, SchemeConfig::new(kind, 0.01), 7)
}

#[test]
fn free_brownian_diffusivity_is_identity() {
    let p = benchmarks::free_brownian(2);
    for kind in [SchemeKind::EulerMaruyama, SchemeKind::ModifiedMilstein] {
        let r = simulate_ensemble(&p, &brownian_config(kind, 20_000)).unwrap();
        let e = &r.diffusivity;
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e.matrix[(i, j)] - want).abs() < 4.0 * e.stderr[(i, j)], "{kind}: {:?}", e.matrix);
            }
        }
        assert_eq!(r.failures, 0);
    }
}

#[test]
fn constant_drift_is_recovered() {
    let s = std::f64::consts::SQRT_2;
    let field = ConstantField::new(vec![0.7, -1.2], vec![s, 0.0, 0.0, s]);
    let p = Problem::new("drift", Arc::new(field), DerivativeMode::Analytic).unwrap();
    let mut cfg = brownian_config(SchemeKind::Milstein, 10_000);
    cfg.x0 = Some(vec![3.0, -2.0]);
    let r = simulate_ensemble(&p, &cfg).unwrap();
    for (m, (c, se)) in r.mean_drift.iter().zip([0.7, -1.2].iter().zip(&r.mean_drift_stderr)) {
        assert!((m - c).abs() < 4.0 * se, "{m} vs {c}");
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let p = benchmarks::anisotropic_2d();
    let mut cfg = EnsembleConfig::new(1_000, 0.5, SchemeConfig::new(SchemeKind::ModifiedMilstein, 0.01), 11);
    cfg.histogram_bins = 8;
    cfg.threads = Some(1);
    let a = simulate_ensemble(&p, &cfg).unwrap();
    cfg.threads = Some(8);
    let b = simulate_ensemble(&p, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        a.positions.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.positions.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn particle_streams_do_not_depend_on_ensemble_size() {
    let p = benchmarks::cellular_flow();
    let cfg = EnsembleConfig::new(300, 0.2, SchemeConfig::new(SchemeKind::EulerMaruyama, 0.01), 5);
    let mut small = cfg.clone();
    small.particles = 10;
    let a = simulate_ensemble(&p, &cfg).unwrap();
    let b = simulate_ensemble(&p, &small).unwrap();
    assert_eq!(&a.positions[..20], &b.positions[..]);
}

#[test]
fn horizon_is_rounded_to_whole_steps() {
    let cfg = EnsembleConfig::new(10, 1.006, SchemeConfig::new(SchemeKind::EulerMaruyama, 0.01), 0);
    assert_eq!(cfg.steps(), 101);
    assert!((cfg.effective_horizon() - 1.01).abs() < 1e-12);
    let tiny = EnsembleConfig::new(10, 1e-5, SchemeConfig::new(SchemeKind::EulerMaruyama, 0.01), 0);
    assert_eq!(tiny.steps(), 1);
}

#[test]
fn config_validation() {
    let p = benchmarks::free_brownian(2);
    let good = brownian_config(SchemeKind::EulerMaruyama, 10);
    for f in [
        (|c: &mut EnsembleConfig| c.particles = 0) as fn(&mut EnsembleConfig),
        |c| c.horizon = -1.0,
        |c| c.burn_in_fraction = 1.0,
        |c| c.histogram_bins = 1,
        |c| c.scheme.h = 0.0,
        |c| c.x0 = Some(vec![0.0]),
        |c| c.threads = Some(0),
    ] {
        let mut c = good.clone();
        f(&mut c);
        assert!(matches!(simulate_ensemble(&p, &c), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn blow_up_beyond_one_percent_is_an_error() {
    let field = ConstantField::new(vec![1e308], vec![1.0]);
    let p = Problem::new("runaway", Arc::new(field), DerivativeMode::Analytic).unwrap();
    let mut cfg = EnsembleConfig::new(50, 30.0, SchemeConfig::new(SchemeKind::EulerMaruyama, 10.0), 1);
    cfg.x0 = Some(vec![0.0]);
    match simulate_ensemble(&p, &cfg) {
        Err(Error::TooManyFailures { failures, particles }) => assert_eq!((failures, particles), (50, 50)),
        other => panic!("expected failure, got {other:?}"),
    }
}

#[test]
fn degenerate_diffusion_is_rejected() {
    let field = ConstantField::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]);
    let p = Problem::new("degenerate", Arc::new(field), DerivativeMode::Analytic).unwrap();
    let cfg = brownian_config(SchemeKind::EulerMaruyama, 10);
    assert!(matches!(simulate_ensemble(&p, &cfg), Err(Error::NotElliptic { .. })));
}

#[test]
fn histogram_counts_positions_after_burn_in() {
    let p = benchmarks::cellular_flow();
    let mut cfg = EnsembleConfig::new(200, 1.0, SchemeConfig::new(SchemeKind::EulerMaruyama, 0.01), 3);
    cfg.histogram_bins = 4;
    cfg.burn_in_fraction = 0.25;
    assert_eq!(cfg.burn_in_steps(), 25);
    let r = simulate_ensemble(&p, &cfg).unwrap();
    let h = r.histogram.unwrap();
    assert_eq!(h.values.len(), 16);
    assert!((h.integral(0) - 1.0).abs() < 1e-12);
}

#[test]
fn slope_fit_recovers_exact_power() {
    let h = [0.04, 0.02, 0.01];
    let e: Vec<f64> = h.iter().map(|v| 3.0 * v * v).collect();
    assert!((fit_log_slope(&h, &e).unwrap() - 2.0).abs() < 1e-12);
    assert!(fit_log_slope(&h[..1], &e[..1]).is_err());
    assert!(fit_log_slope(&[0.1, 0.1], &[1.0, 2.0]).is_err());
}

#[test]
fn noise_gate_drops_noisy_points() {
    let h = [0.04, 0.02, 0.01];
    let e = [1.6e-2, 4e-3, 5e-3];
    let fit = gated_slope(&h, &e, &[1e-4, 1e-4, 2e-3], NOISE_GATE);
    assert_eq!(fit.used, vec![true, true, false]);
    assert!((fit.slope.unwrap() - 2.0).abs() < 1e-12);
    let none = gated_slope(&h, &e, &[1.0, 1.0, 1e-4], NOISE_GATE);
    assert_eq!(none.slope, None);
}

#[test]
fn study_argument_checks() {
    let p = benchmarks::free_brownian(2);
    let base = brownian_config(SchemeKind::EulerMaruyama, 10);
    let fixed = StudyReference::Fixed { matrix: Matrix::identity(2) };
    assert!(convergence_study(&p, &[0.02, 0.01], &base, &fixed).is_err());
    assert!(convergence_study(&p, &[0.02, 0.01, 0.01], &base, &fixed).is_err());
    let fine = StudyReference::FineStep { h: 0.003, scheme: SchemeKind::ModifiedMilstein };
    assert!(convergence_study(&p, &[0.04, 0.02, 0.01], &base, &fine).is_err());
}

#[test]
fn study_against_fine_step_on_brownian_motion_has_zero_error() {
    // Constant coefficients: every scheme reproduces the Brownian path exactly,
    // so paired errors vanish up to rounding.
    let p = benchmarks::free_brownian(2);
    let base = brownian_config(SchemeKind::EulerMaruyama, 200);
    let fine = StudyReference::FineStep { h: 0.0025, scheme: SchemeKind::EulerMaruyama };
    let t = convergence_study(&p, &[0.04, 0.02, 0.01], &base, &fine).unwrap();
    for r in &t.rows {
        assert!(r.error_frobenius < 1e-12, "{}", r.error_frobenius);
    }
    assert_eq!(t.slope_frobenius.slope.is_some(), t.slope_frobenius.used.iter().filter(|u| **u).count() >= 2);
}
