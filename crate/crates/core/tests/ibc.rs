use std::f64::consts::PI;

use nelsonlab::grid::Grid;
use nelsonlab::ibc;
use nelsonlab::linalg::{self, c};
use nelsonlab::nelson::{self, FreeModel, ModelSpec};

fn model(modes: usize, max_bosons: usize, coupling: f64) -> FreeModel {
    let mut spec = ModelSpec::new(Grid::new(1, 8, 2.0 * PI).unwrap()).with_scalar_metric(|x| 1.0 + 0.3 * x[0].sin());
    spec.ellipticity = (0.69, 1.31);
    spec.modes = modes;
    spec.max_bosons = max_bosons;
    spec.coupling = coupling;
    nelson::assemble_free(&spec).unwrap()
}

#[test]
fn zero_form_factor_gives_zero_g_and_free_hamiltonian() {
    let m = model(4, 2, 0.0);
    let ops = ibc::build(&m, 2.0).unwrap();
    assert_eq!(linalg::max_abs(ops.g.entries()), 0.0);
    let h0 = m.free_hamiltonian().unwrap().into_entries();
    assert!(linalg::max_abs(&(ops.h_ibc.entries() - h0)) < 1e-12);
    assert_eq!(ops.one_minus_g_inverse.terms, 1);
    assert!(linalg::max_abs(&(&ops.one_minus_g_inverse.matrix - linalg::identity(m.tensor_dim()))) == 0.0);
    assert!(ibc::sector_norms(&m, 2.0).unwrap().iter().all(|&n| n == 0.0));
}

#[test]
fn g_raises_the_boson_number_by_one() {
    let m = model(4, 2, 1.0);
    let ops = ibc::build(&m, 2.0).unwrap();
    let g = ops.g.entries();
    let f = m.basis.dim();
    let mut off = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if m.basis.total(i % f) != m.basis.total(j % f) + 1 {
                off = off.max(g[(i, j)].norm());
            }
        }
    }
    assert!(off < 1e-14 * linalg::max_abs(g).max(1.0), "{off}");
}

#[test]
fn neumann_series_is_exact_and_terminates() {
    let m = model(4, 3, 1.0);
    let ops = ibc::build(&m, 2.0).unwrap();
    let g = ops.g.entries();
    let inv = &ops.one_minus_g_inverse;
    assert!(inv.terms <= 4);
    assert_eq!(inv.tail, 0.0);
    let id = linalg::identity(m.tensor_dim());
    let residual = linalg::spectral_norm(&((&id - g) * &inv.matrix - &id));
    assert!(residual <= 1e-12, "{residual}");
    let dense = (&id - g).try_inverse().unwrap();
    assert!(linalg::spectral_norm(&(dense - &inv.matrix)) <= 1e-12);
    // Successive ratios ‖G^{k+1}‖/‖G^k‖ shrink.
    let norms: Vec<f64> = inv.power_norms.iter().cloned().filter(|&n| n > 0.0).collect();
    let ratios: Vec<f64> = norms.windows(2).skip(1).map(|w| w[1] / w[0]).collect();
    for w in ratios.windows(2) {
        assert!(w[1] < w[0], "{norms:?}");
    }
}

#[test]
fn factorization_identity_holds_for_every_cutoff() {
    let m = model(8, 2, 1.0);
    for lambda in [1.0, 2.0, 4.0] {
        let r = ibc::factorization_identity_check(&m, lambda).unwrap();
        assert!(r.relative <= 1e-10, "Λ {lambda}: {r:?}");
    }
}

#[test]
fn ibc_spectrum_equals_subtracted_cutoff_spectrum() {
    let m = model(8, 2, 1.0);
    let gap = ibc::spectral_equivalence(&m, 2.0).unwrap();
    assert!(gap <= 1e-9, "{gap}");
    let ops = ibc::build(&m, 2.0).unwrap();
    assert!(linalg::hermiticity_defect(ops.h_ibc.entries()) < 1e-10);
}

#[test]
fn g_converges_along_the_cutoff_sweep() {
    let m = model(8, 2, 1.0);
    let gs: Vec<_> = [1.0, 2.0, 4.0].iter().map(|&l| ibc::build(&m, l).unwrap().g.into_entries()).collect();
    let d1 = linalg::spectral_norm(&(&gs[1] - &gs[0]));
    let d2 = linalg::spectral_norm(&(&gs[2] - &gs[1]));
    assert!(d2 < d1, "{d1} {d2}");
}

#[test]
fn sector_norms_decay_with_boson_number() {
    let m = model(8, 3, 1.0);
    let norms = ibc::sector_norms(&m, 2.0).unwrap();
    for w in norms.windows(2) {
        assert!(w[1] < w[0], "{norms:?}");
    }
}

#[test]
fn weighted_norms_reduce_to_g_at_p_zero_and_grow_with_p() {
    let m = model(8, 2, 1.0);
    let rows = ibc::domain_regularity_experiment(&[(m.clone(), 2.0)], &[0.0, 0.2, 0.4, 0.5]).unwrap();
    let direct = ibc::build(&m, 2.0).unwrap();
    let g_norm = linalg::spectral_norm(direct.g.entries());
    assert!((rows[0].norm - g_norm).abs() <= 1e-10 * g_norm.max(1.0), "{} vs {g_norm}", rows[0].norm);
    for w in rows.windows(2) {
        assert!(w[1].norm >= w[0].norm * (1.0 - 1e-12));
    }
    let free = model(8, 2, 0.0);
    let zero = ibc::domain_regularity_experiment(&[(free, 2.0)], &[0.0, 0.5]).unwrap();
    assert!(zero.iter().all(|r| r.norm == 0.0));
}

#[test]
fn explicit_zero_form_factor_matches_uncoupled_build() {
    let m = model(4, 2, 1.0);
    let zeros = vec![vec![c(0.0); 4]; m.sites()];
    let ops = ibc::build_with_form_factor(&m, 2.0, &zeros).unwrap();
    assert_eq!(linalg::max_abs(ops.t.entries()), 0.0);
}
