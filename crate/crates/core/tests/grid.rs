use std::f64::consts::PI;

use nelsonlab::grid::{self, Grid, GridError, LatticeFunction, NyquistGuard, Profile};
use num_complex::Complex64;
use proptest::prelude::*;

fn circle(l: usize) -> Grid {
    Grid::new(1, l, 2.0 * PI).unwrap()
}

fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn constant_function_transforms_to_zero_mode() {
    for (d, l) in [(1, 16), (2, 8), (3, 4)] {
        let g = Grid::new(d, l, 3.0).unwrap();
        let u = LatticeFunction::from_fn(g, |_| cplx(1.0, 0.0));
        let hat = grid::dft(&u);
        let expected = (g.len() as f64).sqrt();
        for (k, z) in hat.values().iter().enumerate() {
            let want = if k == 0 { expected } else { 0.0 };
            assert!((z - cplx(want, 0.0)).norm() < 1e-12, "d {d} k {k}: {z}");
        }
    }
}

#[test]
fn plane_waves_are_lattice_eigenfunctions() {
    let g = circle(32);
    for k in [0usize, 1, 5, 31] {
        let xi = g.momentum(k)[0];
        let u = LatticeFunction::from_fn(g, |x| Complex64::from_polar(1.0, xi * x[0]));
        let hat = grid::dft(&u);
        let peak = hat.values()[k].norm();
        let rest: f64 = hat.values().iter().enumerate().filter(|(j, _)| *j != k).map(|(_, z)| z.norm()).sum();
        assert!((peak - (g.len() as f64).sqrt()).abs() < 1e-10);
        assert!(rest < 1e-10);
    }
}

#[test]
fn sobolev_norm_of_zero_and_at_s_zero() {
    let g = circle(16);
    assert_eq!(grid::sobolev_norm(&LatticeFunction::zeros(g), 1.5), 0.0);
    let u = LatticeFunction::from_fn(g, |x| cplx(x[0].cos(), (2.0 * x[0]).sin()));
    assert!((grid::sobolev_norm(&u, 0.0) - u.norm()).abs() < 1e-12);
}

#[test]
fn negative_sobolev_distance_to_delta_shrinks_with_cutoff() {
    let g = circle(64);
    let delta = grid::delta_function(&g, &[0.0]);
    let dist: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&l| {
            let rho = grid::cutoff_function(&g, Profile::Gaussian, l, &[0.0], NyquistGuard::default()).unwrap();
            grid::sobolev_norm(&rho.sub(&delta).unwrap(), -2.0)
        })
        .collect();
    for w in dist.windows(2) {
        assert!(w[1] < w[0], "{dist:?}");
    }
}

#[test]
fn gaussian_cutoff_has_unit_mass() {
    let g = circle(64);
    let rho = grid::cutoff_function(&g, Profile::Gaussian, 2.0, &[0.0], NyquistGuard::default()).unwrap();
    let mass: f64 = rho.values().iter().map(|z| z.re).sum::<f64>() * g.cell_volume();
    assert!((mass - 1.0).abs() < 1e-8);
    let hat = grid::fourier_transform(&rho);
    assert!((hat[0] - cplx(1.0, 0.0)).norm() < 1e-8);
    assert_eq!(Profile::Gaussian.hat(0.0), 1.0);
}

#[test]
fn cutoff_is_translation_covariant() {
    let g = circle(32);
    let guard = NyquistGuard::default();
    let base = grid::cutoff_function(&g, Profile::Gaussian, 3.0, &[0.0], guard).unwrap();
    for x in [0.3, 1.7, 4.0] {
        let moved = grid::cutoff_function(&g, Profile::Gaussian, 3.0, &[x], guard).unwrap();
        let shift = g.snap(&[x]) as i64;
        let expected = base.translate([shift, 0, 0]);
        let err = moved.sub(&expected).unwrap().norm();
        assert!(err < 1e-12, "x {x}: {err}");
    }
}

#[test]
fn cutoff_above_guard_is_rejected() {
    let g = circle(8);
    let err = grid::cutoff_function(&g, Profile::Gaussian, 5.0, &[0.0], NyquistGuard::default()).unwrap_err();
    assert!(matches!(err, GridError::Resolution { .. }), "{err}");
    assert!(grid::cutoff_function(&g, Profile::Gaussian, 4.0, &[0.0], NyquistGuard::default()).is_ok());
}

#[test]
fn delta_reproduces_point_values() {
    let g = circle(16);
    let u = LatticeFunction::from_fn(g, |x| cplx(x[0].sin() + 0.2, x[0].cos()));
    for k in [0usize, 3, 11] {
        let x = g.position(k);
        let d = grid::delta_function(&g, &x);
        let val = d.inner(&u).unwrap();
        assert!((val - u.values()[k]).norm() < 1e-12);
    }
    let hat = grid::dft(&grid::delta_function(&g, &[0.0]));
    let first = hat.values()[0].norm();
    assert!(hat.values().iter().all(|z| (z.norm() - first).abs() < 1e-12));
}

#[test]
fn negative_sobolev_norm_of_delta_is_grid_independent() {
    let norms: Vec<f64> = [32usize, 64, 128]
        .iter()
        .map(|&l| grid::sobolev_norm(&grid::delta_function(&circle(l), &[0.0]), -2.0))
        .collect();
    for w in norms.windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() < 0.1, "{norms:?}");
    }
}

#[test]
fn non_power_of_two_is_rejected() {
    assert_eq!(Grid::new(1, 12, 1.0).unwrap_err(), GridError::Points(12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 32)) {
        let g = circle(32);
        let v: Vec<Complex64> = values.iter().map(|&(a, b)| cplx(a, b)).collect();
        let u = LatticeFunction::new(g, v).unwrap();
        let hat = grid::dft(&u);
        let lhs: f64 = hat.values().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let rhs: f64 = u.values().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((lhs - rhs).abs() < 1e-12);
        let back = grid::idft(&hat);
        prop_assert!(back.sub(&u).unwrap().norm() < 1e-12);
    }

    #[test]
    fn sobolev_norm_is_monotone_in_s(values in prop::collection::vec(-1.0f64..1.0, 16), s in -2.0f64..2.0) {
        let g = circle(16);
        let u = LatticeFunction::from_real(g, &values).unwrap();
        prop_assert!(grid::sobolev_norm(&u, s) <= grid::sobolev_norm(&u, s + 0.5) * (1.0 + 1e-12));
    }

    #[test]
    fn cutoff_profile_is_positive_and_normalized(lambda in 0.5f64..4.0, x in 0.0f64..6.0) {
        let g = circle(32);
        let rho = grid::cutoff_function(&g, Profile::Gaussian, lambda, &[x], NyquistGuard::default()).unwrap();
        prop_assert!(rho.values().iter().all(|z| z.re > 0.0 && z.im == 0.0));
        let mass: f64 = rho.values().iter().map(|z| z.re).sum::<f64>() * g.cell_volume();
        prop_assert!((mass - 1.0).abs() < 1e-12);
    }
}
