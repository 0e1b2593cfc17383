use std::f64::consts::PI;

use nelsonlab::grid::Grid;
use nelsonlab::linalg::{self, c, CMat};
use nelsonlab::nelson::{self, ModelSpec, NelsonError, TransformedOptions};
use proptest::prelude::*;

fn circle(l: usize) -> Grid {
    Grid::new(1, l, 2.0 * PI).unwrap()
}

fn modulated(l: usize, a: f64) -> ModelSpec {
    let mut spec = ModelSpec::new(circle(l)).with_scalar_metric(|x| 1.0 + a * x[0].sin());
    spec.ellipticity = ((1.0 - a.abs()) * 0.999, (1.0 + a.abs()) * 1.001);
    spec
}

fn small_model(modes: usize, max_bosons: usize) -> nelson::FreeModel {
    let mut spec = modulated(8, 0.3);
    spec.modes = modes;
    spec.max_bosons = max_bosons;
    nelson::assemble_free(&spec).unwrap()
}

#[test]
fn flat_one_particle_spectrum_is_xi_squared_plus_m_squared() {
    let g = circle(16);
    let model = nelson::assemble_free(&ModelSpec::new(g)).unwrap();
    let mut expected: Vec<f64> = (0..g.len()).map(|k| g.momentum_sq(k) + 1.0).collect();
    expected.sort_by(f64::total_cmp);
    for (ours, want) in model.one_particle_eigen.values.iter().zip(&expected) {
        assert!((ours - want).abs() < 1e-10, "{ours} vs {want}");
    }
}

#[test]
fn omega_is_the_square_root_of_h() {
    let model = small_model(8, 1);
    assert!(linalg::max_abs(&(&model.omega * &model.omega - &model.one_particle)) < 1e-10);
    let half = model.omega_power(0.5);
    assert!(linalg::max_abs(&(&half * &half - &model.omega)) < 1e-10);
    assert!(linalg::eigenvalues_hermitian(&model.omega)[0] > 0.0);
    assert_eq!(model.fock_energies[0], 0.0);
}

#[test]
fn variable_metric_spectrum_stays_in_ellipticity_bounds() {
    let l = 16;
    let model = nelson::assemble_free(&modulated(l, 0.3)).unwrap();
    assert!(linalg::hermiticity_defect(&model.one_particle) < 1e-12);
    let xi_max = l as f64 / 2.0;
    let vals = &model.one_particle_eigen.values;
    assert!(vals[0] >= 1.0 - 1e-10);
    assert!(vals[vals.len() - 1] <= 1.3 * xi_max * xi_max + 1.0 + 1e-10);
}

#[test]
fn ellipticity_violation_names_the_lattice_point() {
    let mut spec = modulated(8, 0.3);
    spec.ellipticity = (0.9, 1.1);
    let err = nelson::assemble_free(&spec).unwrap_err();
    assert!(matches!(err, NelsonError::Ellipticity { .. }), "{err}");
    assert!(err.to_string().contains("lattice point"));
}

#[test]
fn cutoff_hamiltonian_is_hermitian_and_lowers_the_ground_energy() {
    let model = small_model(8, 2);
    let h0 = model.free_hamiltonian().unwrap().into_entries();
    let h = model.cutoff_hamiltonian(2.0).unwrap().into_entries();
    assert!(linalg::hermiticity_defect(&h) < 1e-10);
    assert!(linalg::hermiticity_defect(&h0) < 1e-10);
    assert!(linalg::eigenvalues_hermitian(&h)[0] <= linalg::eigenvalues_hermitian(&h0)[0]);
}

#[test]
fn tiny_cutoff_couples_every_site_identically() {
    let model = small_model(8, 1);
    let field = model.field_term(0.05).unwrap();
    let f = model.basis.dim();
    let first = field.view((0, 0), (f, f)).clone_owned();
    for x in 1..model.sites() {
        let block = field.view((x * f, x * f), (f, f)).clone_owned();
        assert!(linalg::max_abs(&(block - &first)) < 1e-10);
    }
}

#[test]
fn vacuum_energy_matches_second_order_perturbation() {
    // Flat coefficients with every mode kept: the constant particle state couples only to
    // one-boson states, and the second-order shift is −½⟨v, (K⊗1 + 1⊗ω)^{−1} v⟩.
    let mut spec = ModelSpec::new(circle(8));
    spec.modes = 8;
    spec.max_bosons = 1;
    let model = nelson::assemble_free(&spec).unwrap();
    let lambda = 2.0;
    let h0 = model.free_hamiltonian().unwrap().into_entries();
    let field = model.field_term(lambda).unwrap();
    let f = model.basis.dim();
    let n = model.sites();
    let mut psi = nalgebra::DVector::zeros(n * f);
    for x in 0..n {
        psi[x * f] = c(1.0 / (n as f64).sqrt());
    }
    let excited: Vec<usize> = (0..n * f).filter(|i| i % f != 0).collect();
    let v = &field * &psi;
    let h_ex = CMat::from_fn(excited.len(), excited.len(), |i, j| h0[(excited[i], excited[j])]);
    let v_ex = nalgebra::DVector::from_iterator(excited.len(), excited.iter().map(|&i| v[i]));
    let solved = h_ex.lu().solve(&v_ex).unwrap();
    let shift = v_ex.dotc(&solved).re;
    let energies = model.vacuum_energies(lambda).unwrap();
    for e in &energies {
        assert!((e - shift).abs() < 1e-8, "{e} vs {shift}");
    }
}

#[test]
fn vacuum_energy_is_positive_increasing_and_vanishes_without_coupling() {
    let model = small_model(8, 1);
    let e: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|&l| model.vacuum_energy(l, 3).unwrap()).collect();
    assert!(e[0] > 0.0 && e[0] < e[1] && e[1] < e[2], "{e:?}");
    let mut spec = modulated(8, 0.3);
    spec.coupling = 0.0;
    let free = nelson::assemble_free(&spec).unwrap();
    assert_eq!(free.vacuum_energy(2.0, 0).unwrap(), 0.0);
    let b = free.gross_b(2.0, 0.0).unwrap();
    assert_eq!(linalg::max_abs(&b.values), 0.0);
}

#[test]
fn gross_b_is_real() {
    let model = small_model(8, 1);
    for sigma in [0.0, 0.5] {
        let b = model.gross_b(2.0, sigma).unwrap();
        assert!(b.imaginary <= 1e-10 * linalg::max_abs(&b.values));
    }
}

#[test]
fn renormalized_resolvents_converge_and_stabilize_the_ground_energy() {
    let model = small_model(8, 2);
    let rows = nelson::renorm_convergence_experiment(&model, &[1.0, 1.0, 2.0, 4.0]).unwrap();
    assert_eq!(rows[0].subtracted, 0.0);
    assert_eq!(rows[0].unsubtracted, 0.0);
    assert!(rows[2].subtracted < rows[1].subtracted, "{rows:?}");
    let spread = |v: Vec<f64>| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    let plain = spread(rows.iter().map(|r| r.ground_next).collect());
    let sub = spread(rows.iter().map(|r| r.ground_next_subtracted).collect());
    assert!(sub < plain, "{sub} vs {plain}");
}

#[test]
fn zero_gross_transform_leaves_the_hamiltonian_unchanged() {
    let opts = TransformedOptions { b_override: Some(vec![c(0.0); 4]), ..TransformedOptions::default() };
    let report = nelson::transformed_hamiltonian_check(&modulated(8, 0.3), 2.0, 0.0, &opts).unwrap();
    assert!(report.residual <= 1e-10, "{report:?}");
}

#[test]
fn relative_bound_holds_on_random_states() {
    let model = small_model(4, 2);
    let r = nelson::relative_bound_check(&model, 2.0, 100, 0.5, 3).unwrap();
    assert_eq!(r.violations, 0);
    assert_eq!(r.epsilon_violations, 0);
}

#[test]
fn frozen_symbol_dominates_the_form_factor() {
    let model = small_model(8, 1);
    for site in [0, 2, 5] {
        let s = model.form_factor_split(4.0, site).unwrap();
        let ratio = linalg::norm(&s.remainder) / linalg::norm(&s.leading);
        assert!(ratio < 0.3, "site {site}: {ratio}");
        let rebuilt: Vec<_> = s.leading.iter().zip(&s.remainder).map(|(a, b)| a + b).collect();
        let diff: Vec<_> = rebuilt.iter().zip(&s.full).map(|(a, b)| a - b).collect();
        assert!(linalg::norm(&diff) < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn omega_is_positive_for_any_admissible_metric(a in -0.6f64..0.6, mass in 0.5f64..2.0) {
        let spec = modulated(8, a).with_mass(mass, |_| mass);
        let model = nelson::assemble_free(&spec).unwrap();
        prop_assert!(linalg::max_abs(&(&model.omega * &model.omega - &model.one_particle)) < 1e-10);
        prop_assert!(linalg::eigenvalues_hermitian(&model.omega)[0] >= mass - 1e-10);
    }
}
