use std::f64::consts::PI;

use nelsonlab::grid::Grid;
use nelsonlab::linalg::{self, c, CMat};
use nelsonlab::psido::*;
use num_complex::Complex64;

fn grid(l: usize) -> Grid {
    Grid::new(1, l, 2.0 * PI).unwrap()
}

fn diff(a: &CMat, b: &CMat) -> f64 {
    linalg::max_abs(&(a - b))
}

/// Spectral derivative with the Nyquist symbol set to `sign·π/h`.
fn derivative_matrix(g: &Grid, sign: f64) -> CMat {
    let n = g.len();
    let mut out = CMat::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                let mut xi = g.momentum(k)[0];
                if k == n / 2 {
                    xi = sign * g.nyquist();
                }
                acc += Complex64::from_polar(xi, xi * (g.position(x)[0] - g.position(y)[0]));
            }
            out[(x, y)] = acc / n as f64;
        }
    }
    out
}

fn diag(g: &Grid, f: impl Fn(f64) -> f64) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_iterator(g.len(), (0..g.len()).map(|k| c(f(g.position(k)[0])))))
}

#[test]
fn change_of_quantization_is_exact() {
    let g = grid(32);
    for seed in 0..5 {
        let a = random_band_limited(g, seed, false);
        for (t, s) in [(1.0, 0.0), (0.5, 1.0), (0.0, 0.5), (0.25, 0.75)] {
            let b = change_quantization(&a, t, s).unwrap();
            let err = diff(&quantize(&b, s).unwrap(), &quantize(&a, t).unwrap());
            assert!(err < 1e-10, "seed {seed} t {t} s {s}: {err:e}");
        }
        assert_eq!(change_quantization(&a, 0.5, 0.5).unwrap(), a);
    }
}

#[test]
fn momentum_only_symbols_are_fixed_points() {
    let g = grid(16);
    let a = Symbol::from_fn(g, OrderFunction::Japanese(2.0), |_, k| c(1.0 + k[0] * k[0]));
    for (t, s) in [(0.0, 1.0), (1.0, 0.5)] {
        let b = change_quantization(&a, t, s).unwrap();
        assert!(b.sub(&a).unwrap().sup_norm() < 1e-10);
    }
}

#[test]
fn moyal_matches_matrix_product() {
    let g = grid(32);
    for seed in 0..4 {
        let a = random_band_limited(g, 100 + seed, false);
        let b = random_band_limited(g, 200 + seed, false);
        for t in [0.0, 0.5, 1.0] {
            let ab = moyal(&a, &b, t).unwrap();
            let lhs = quantize(&ab, t).unwrap();
            let rhs = quantize(&a, t).unwrap() * quantize(&b, t).unwrap();
            assert!(diff(&lhs, &rhs) < 1e-10, "seed {seed} t {t}");
        }
    }
}

#[test]
fn moyal_of_momentum_symbols_is_pointwise() {
    let g = grid(16);
    let a = Symbol::from_fn(g, OrderFunction::Japanese(1.0), |_, k| c(k[0]));
    let b = Symbol::from_fn(g, OrderFunction::Japanese(1.0), |_, k| c((1.0 + k[0] * k[0]).sqrt()));
    let ab = moyal(&a, &b, 1.0).unwrap();
    assert!(ab.sub(&a.pointwise(&b).unwrap()).unwrap().sup_norm() < 1e-10);
    let one = Symbol::constant(g, c(1.0));
    assert!(moyal(&one, &b, 0.5).unwrap().sub(&b).unwrap().sup_norm() < 1e-10);
}

#[test]
fn adjoint_matches_conjugate_transpose() {
    let g = grid(32);
    for seed in 0..4 {
        let a = random_band_limited(g, 300 + seed, false);
        for t in [0.0, 0.5, 1.0, 0.3] {
            let star = adjoint_symbol(&a, t).unwrap();
            let err = diff(&quantize(&star, t).unwrap(), &quantize(&a, t).unwrap().adjoint());
            assert!(err < 1e-10, "seed {seed} t {t}: {err:e}");
        }
    }
    let real = random_band_limited(g, 9, true);
    assert!(adjoint_symbol(&real, 0.5).unwrap().sub(&real).unwrap().sup_norm() < 1e-10);
}

#[test]
fn weyl_quantization_of_real_symbols_is_hermitian() {
    let g = grid(32);
    let a = Symbol::from_fn(g, OrderFunction::Japanese(2.0), |x, k| c((1.0 + 0.3 * x[0].sin()) * k[0] * k[0]));
    assert!(linalg::hermiticity_defect(&quantize(&a, 0.5).unwrap()) < 1e-10);
}

#[test]
fn second_order_symbol_in_standard_and_right_quantization() {
    let g = grid(32);
    let coeff = |x: f64| 1.0 + 0.3 * x.sin();
    let a = Symbol::from_fn(g, OrderFunction::Japanese(2.0), |x, k| c(coeff(x[0]) * k[0] * k[0]));
    let dp = derivative_matrix(&g, 1.0);
    let dm = derivative_matrix(&g, -1.0);
    let d2 = (&dp * &dp + &dm * &dm).scale(0.5);
    let gm = diag(&g, coeff);
    assert!(diff(&quantize(&a, 1.0).unwrap(), &(&gm * &d2)) < 1e-10);
    assert!(diff(&quantize(&a, 0.0).unwrap(), &(&d2 * &gm)) < 1e-10);
}

/// The Weyl quantization of `ξ g ξ` is `D g D − g''/4`, not `D g D`. On low momenta the
/// lattice reproduces the corrected form up to interpolation error.
#[test]
fn weyl_second_order_symbol_on_low_momenta() {
    let g = grid(32);
    let coeff = |x: f64| 1.0 + 0.3 * x.sin();
    let a = Symbol::from_fn(g, OrderFunction::Japanese(2.0), |x, k| c(coeff(x[0]) * k[0] * k[0]));
    let dp = derivative_matrix(&g, 1.0);
    let dm = derivative_matrix(&g, -1.0);
    let gm = diag(&g, coeff);
    let dgd = (&dp * &gm * &dp + &dm * &gm * &dm).scale(0.5);
    let corrected = &dgd + diag(&g, |x| 0.075 * x.sin());
    let n = g.len();
    let low = CMat::from_fn(n, n, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            if g.wave_number(k).abs() < 8 {
                let xi = g.momentum(k)[0];
                acc += Complex64::from_polar(1.0, xi * (g.position(i)[0] - g.position(j)[0]));
            }
        }
        acc / n as f64
    });
    let w = quantize(&a, 0.5).unwrap();
    let err_corrected = linalg::spectral_norm(&(&low * (&w - &corrected) * &low));
    let err_plain = linalg::spectral_norm(&(&low * (&w - &dgd) * &low));
    assert!(err_corrected < 0.1, "{err_corrected}");
    assert!(err_corrected < err_plain, "{err_corrected} vs {err_plain}");
}

#[test]
fn commutator_matches_poisson_bracket_to_leading_order() {
    let mut errs = Vec::new();
    for l in [32, 64, 128] {
        let g = grid(l);
        let a = Symbol::from_fn(g, OrderFunction::Japanese(1.0), |x, k| c(x[0].sin() * k[0].sin()));
        let b = Symbol::from_fn(g, OrderFunction::Japanese(1.0), |x, k| c(x[0].cos() + (2.0 * k[0]).cos()));
        let comm = moyal(&a, &b, 1.0).unwrap().sub(&moyal(&b, &a, 1.0).unwrap()).unwrap();
        let pb = poisson_bracket(&a, &b).unwrap().map(|v| v * linalg::I);
        errs.push(comm.sub(&pb).unwrap().weighted_sup(&OrderFunction::Japanese(0.0)));
    }
    assert!(errs[2] <= 2.0 * errs[0], "{errs:?}");
}

#[test]
fn parametrix_of_constant() {
    let g = grid(16);
    let a = Symbol::constant(g, c(2.5));
    let p = parametrix(&a, 1.0, 0).unwrap();
    assert!(p.residual <= 1e-12);
    assert!(p.symbol.sub(&Symbol::constant(g, c(0.4))).unwrap().sup_norm() < 1e-14);
}

#[test]
fn parametrix_rejects_non_elliptic() {
    let g = grid(16);
    let a = Symbol::from_fn(g, OrderFunction::Japanese(1.0), |_, k| c(k[0]));
    assert!(matches!(parametrix(&a, 1.0, 1), Err(PsidoError::NotElliptic { .. })));
}

#[test]
fn parametrix_improves_with_iterations_for_variable_symbol() {
    let g = grid(32);
    let a = Symbol::from_fn(g, OrderFunction::Japanese(2.0), |x, k| {
        c((1.0 + 0.3 * x[0].sin()) * (1.0 + k[0] * k[0]))
    });
    let r: Vec<Parametrix> = (0..4).map(|k| parametrix(&a, 1.0, k).unwrap()).collect();
    for w in r.windows(2) {
        assert!(w[1].residual <= w[0].residual * (1.0 + 1e-9));
        assert!(w[1].inverse_error.unwrap() <= w[0].inverse_error.unwrap() * (1.0 + 1e-9));
    }
    assert!(r[3].residual * 10.0 <= r[0].residual);
}

#[test]
fn resummation_orders() {
    let g = grid(128);
    let first = Symbol::from_fn(g, OrderFunction::Japanese(1.0), |_, k| c((1.0 + k[0] * k[0]).sqrt()));
    let second = Symbol::from_fn(g, OrderFunction::Japanese(0.0), |x, _| c(2.0 + x[0].cos()));
    let total = asymptotic_resum(g, &[(first.clone(), 1.0), (second, 0.0)], &[0.5, 0.25]).unwrap();
    let single = asymptotic_resum(g, &[(first.clone(), 1.0)], &[0.5]).unwrap();
    let remainder = total.sub(&single).unwrap();
    let fit = shell_order(&remainder, 8.0).unwrap();
    assert!(fit.slope <= 0.2, "{}", fit.slope);
    for xi in 0..g.len() {
        if g.momentum_sq(xi).sqrt() >= 4.0 {
            assert_eq!(single.at(3, xi), first.at(3, xi));
        }
    }
    let empty = asymptotic_resum(g, &[], &[]).unwrap();
    assert_eq!(empty.sup_norm(), 0.0);
    assert!(matches!(
        asymptotic_resum(g, &[(first.clone(), 0.0), (first, 1.0)], &[1.0, 1.0]),
        Err(PsidoError::Orders { .. })
    ));
}

#[test]
fn functional_calculus_square_root() {
    for l in [32, 64, 128] {
        let g = grid(l);
        let a = Symbol::from_fn(g, OrderFunction::Japanese(2.0), |_, k| c(1.0 + k[0] * k[0]));
        let rep = functional_calculus_check(&a, f64::sqrt, 0.5).unwrap();
        assert!(rep.norms.iter().all(|(_, v)| *v < 1e-9), "{rep:?}");
        let id = functional_calculus_check(&a, |v| v, 1.0).unwrap();
        assert!(id.norms.iter().all(|(_, v)| *v < 1e-9));
    }
}

#[test]
fn functional_calculus_variable_symbol_is_uniformly_bounded() {
    let mut worst = Vec::new();
    for l in [32, 64, 128] {
        let g = grid(l);
        let a = Symbol::from_fn(g, OrderFunction::Japanese(2.0), |x, k| {
            c(1.0 + (1.0 + 0.3 * x[0].sin()) * k[0] * k[0])
        });
        let rep = functional_calculus_check(&a, f64::sqrt, 0.5).unwrap();
        worst.push(rep.norms.iter().map(|p| p.1).fold(0.0, f64::max));
    }
    assert!(worst[2] <= 2.0 * worst[0], "{worst:?}");
}

#[test]
fn norm_estimators_dominate() {
    use rand::{RngExt, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let g = grid(16);
    for _ in 0..100 {
        let m = CMat::from_fn(16, 16, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let k = KernelMatrix::from_operator(g, &m);
        let truth = linalg::spectral_norm(&m);
        assert!(schur_bound(&k) >= truth * (1.0 - 1e-12));
        let blocks: Vec<CMat> = (0..4)
            .map(|b| CMat::from_fn(16, 16, |i, j| if i / 4 == b || j / 4 == b { m[(i, j)] * 0.5 } else { c(0.0) }))
            .collect();
        let sum = blocks.iter().fold(CMat::zeros(16, 16), |acc, b| acc + b);
        assert!(cotlar_stein_bound(&blocks) >= linalg::spectral_norm(&sum) * (1.0 - 1e-12));
    }
    let id = KernelMatrix::from_operator(g, &linalg::identity(16));
    assert!((schur_bound(&id) - 1.0).abs() < 1e-12);
}
