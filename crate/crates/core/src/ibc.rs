//! Interior-boundary-condition operators: `G = −(H₀+s)^{−1}a*(v)`, `T = a(v)G` and the
//! factorization `H_Λ + s = (1−G)*(H₀+s)(1−G) + T`.
//!
//! `H₀` is diagonal in the product of the `K` eigenbasis and the occupation basis of the
//! `h` eigenmodes, so every inverse and fractional power is taken there.

use num_complex::Complex64;
use serde::Serialize;

use crate::fock::{Hermiticity, OperatorMatrix};
use crate::linalg::{self, c, CMat};
use crate::nelson::{FreeModel, NelsonError};

/// Shift applied to `H₀` before inversion: zero unless the lowest energy on sectors ≥ 1 fails
/// to be positive.
pub fn free_shift(model: &FreeModel) -> f64 {
    let floor = model.particle_eigen.values[0] + model.mode_energies.iter().cloned().fold(f64::INFINITY, f64::min);
    if floor > 0.0 {
        0.0
    } else {
        1.0 - floor
    }
}

/// `v_X = ω^{−1/2}ρ_{Λ,X}/√2` in mode coefficients, one row per `X`.
pub fn form_factor_modes(model: &FreeModel, lambda: f64) -> Result<Vec<Vec<Complex64>>, NelsonError> {
    let (u, _) = model.form_factors(lambda)?;
    Ok(u.into_iter().map(|row| row.into_iter().map(|z| z * std::f64::consts::FRAC_1_SQRT_2).collect()).collect())
}

/// `⊕_X a*(v_X)` on the tensor space.
pub fn creation_block(model: &FreeModel, v: &[Vec<Complex64>]) -> Result<CMat, NelsonError> {
    let f = model.basis.dim();
    let dim = model.tensor_dim();
    if dim > crate::nelson::MAX_TENSOR_DIM {
        return Err(NelsonError::Size { dim, limit: crate::nelson::MAX_TENSOR_DIM });
    }
    let mut out = CMat::zeros(dim, dim);
    for (x, vx) in v.iter().enumerate() {
        out.view_mut((x * f, x * f), (f, f)).copy_from(&model.basis.creation(vx)?);
    }
    Ok(out)
}

/// Neumann inverse of `1 − G` with its bookkeeping.
#[derive(Debug, Clone)]
pub struct NeumannInverse {
    pub matrix: CMat,
    /// Number of nonzero powers `G⁰ … G^{terms−1}` summed.
    pub terms: usize,
    /// `‖G^{terms}‖`, zero when the series terminated.
    pub tail: f64,
    /// `‖G^k‖` for `k = 0 … terms`.
    pub power_norms: Vec<f64>,
}

/// `Σ_k G^k`, stopped at the first vanishing power (at most `max_terms`).
pub fn invert_one_minus_g(g: &CMat, max_terms: usize) -> NeumannInverse {
    let n = g.nrows();
    let mut power = linalg::identity(n);
    let mut sum = CMat::zeros(n, n);
    let mut power_norms = Vec::new();
    let mut terms = 0;
    loop {
        let norm = linalg::spectral_norm(&power);
        power_norms.push(norm);
        if norm == 0.0 || terms == max_terms {
            return NeumannInverse { matrix: sum, terms, tail: norm, power_norms };
        }
        sum += &power;
        terms += 1;
        power = &power * g;
    }
}

/// All operators of the IBC construction at one cutoff.
#[derive(Debug, Clone)]
pub struct IbcOperators {
    pub lambda: f64,
    pub shift: f64,
    pub g: OperatorMatrix,
    pub t: OperatorMatrix,
    pub h_ibc: OperatorMatrix,
    pub one_minus_g_inverse: NeumannInverse,
    /// `(H₀ + s)` on the tensor space.
    pub shifted_free: CMat,
    /// `⊕_X Φ(u_X)`, `u = √2 v`.
    pub field: CMat,
    pub vacuum: Vec<f64>,
}

/// Builds `G`, `T`, `(1−G)^{−1}` and `H_ibc = (1−G)*(H₀+s)(1−G) + T − s + E_Λ`.
pub fn build(model: &FreeModel, lambda: f64) -> Result<IbcOperators, NelsonError> {
    let v = form_factor_modes(model, lambda)?;
    build_with_form_factor(model, lambda, &v)
}

pub fn build_with_form_factor(model: &FreeModel, lambda: f64, v: &[Vec<Complex64>]) -> Result<IbcOperators, NelsonError> {
    let shift = free_shift(model);
    let f = model.basis.dim();
    let n = model.sites();
    let dim = model.tensor_dim();
    let a_star = creation_block(model, v)?;
    let basis_change = linalg::kron(&model.particle_eigen.vectors, &linalg::identity(f));
    let mut g_eig = basis_change.adjoint() * &a_star * &basis_change;
    for gamma in 0..n {
        for i in 0..f {
            let row = gamma * f + i;
            if model.basis.total(i) == 0 {
                continue;
            }
            let energy = model.particle_eigen.values[gamma] + model.fock_energies[i] + shift;
            if energy <= 0.0 {
                return Err(NelsonError::Spectral { what: "H₀ + s on sectors >= 1", min_eigenvalue: energy });
            }
            for col in 0..dim {
                g_eig[(row, col)] /= -energy;
            }
        }
    }
    let g = &basis_change * g_eig * basis_change.adjoint();
    let t = a_star.adjoint() * &g;
    let t = linalg::hermitian_part(&t);
    let h0 = model.free_hamiltonian()?.into_entries();
    let shifted_free = &h0 + linalg::identity(dim).scale(shift);
    let one_minus_g = linalg::identity(dim) - &g;
    let factor = one_minus_g.adjoint() * &shifted_free * &one_minus_g;
    let vacuum = model.vacuum_energies(lambda)?;
    let mut h_ibc = factor + &t - linalg::identity(dim).scale(shift);
    for i in 0..dim {
        h_ibc[(i, i)] += c(vacuum[i / f]);
    }
    let h_ibc = linalg::hermitian_part(&h_ibc);
    let field = &a_star + a_star.adjoint();
    let space = model.space();
    Ok(IbcOperators {
        lambda,
        shift,
        one_minus_g_inverse: invert_one_minus_g(&g, model.basis.max_bosons() + 2),
        g: OperatorMatrix::square(space.clone(), g, Hermiticity::NonHermitian)?,
        t: OperatorMatrix::square(space.clone(), t, Hermiticity::Hermitian)?,
        h_ibc: OperatorMatrix::square(space, h_ibc, Hermiticity::Hermitian)?,
        shifted_free,
        field,
        vacuum,
    })
}

/// Indices of tensor states in Fock sectors `≤ max_sector`.
fn window_indices(model: &FreeModel, max_sector: usize) -> Vec<usize> {
    let f = model.basis.dim();
    (0..model.tensor_dim()).filter(|&i| model.basis.total(i % f) <= max_sector).collect()
}

fn restrict(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FactorizationResidual {
    pub lambda: f64,
    pub shift: f64,
    /// Full truncated space.
    pub absolute: f64,
    /// Sectors `≤ N_max − 1`.
    pub safe_absolute: f64,
    pub h_norm: f64,
    pub relative: f64,
}

/// `‖(H_Λ + s) − ((1−G)*(H₀+s)(1−G) + T)‖`, with `H_Λ` assembled independently.
pub fn factorization_identity_check(model: &FreeModel, lambda: f64) -> Result<FactorizationResidual, NelsonError> {
    let ops = build(model, lambda)?;
    let h = model.cutoff_hamiltonian(lambda)?.into_entries();
    let dim = h.nrows();
    let g = ops.g.entries();
    let one_minus_g = linalg::identity(dim) - g;
    let rhs = one_minus_g.adjoint() * &ops.shifted_free * &one_minus_g + ops.t.entries();
    let diff = &h + linalg::identity(dim).scale(ops.shift) - rhs;
    let safe = window_indices(model, model.basis.max_bosons().saturating_sub(1));
    let h_norm = linalg::spectral_norm(&h);
    let safe_absolute = linalg::spectral_norm(&restrict(&diff, &safe));
    Ok(FactorizationResidual {
        lambda,
        shift: ops.shift,
        absolute: linalg::spectral_norm(&diff),
        safe_absolute,
        h_norm,
        relative: safe_absolute / h_norm,
    })
}

/// Largest eigenvalue gap between `H_ibc` and `H_Λ + E_Λ`.
pub fn spectral_equivalence(model: &FreeModel, lambda: f64) -> Result<f64, NelsonError> {
    let ops = build(model, lambda)?;
    let mut h = model.cutoff_hamiltonian(lambda)?.into_entries();
    let f = model.basis.dim();
    for i in 0..h.nrows() {
        h[(i, i)] += c(ops.vacuum[i / f]);
    }
    let a = linalg::eigenvalues_hermitian(ops.h_ibc.entries());
    let b = linalg::eigenvalues_hermitian(&h);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// `‖G‖` restricted to sector `n−1 → n`, for `n = 1 … N_max`.
pub fn sector_norms(model: &FreeModel, lambda: f64) -> Result<Vec<f64>, NelsonError> {
    let v = form_factor_modes(model, lambda)?;
    let shift = free_shift(model);
    (1..=model.basis.max_bosons()).map(|n| weighted_sector_norm(model, &v, 0.0, shift, n)).collect()
}

/// `‖(H₀+s)^p G‖` from sector `n−1` into sector `n`, from the Gram matrix
/// `A (H₀+s)^{2p−2} A*` on sector `n−1` in the `K` eigenbasis.
pub fn weighted_sector_norm(model: &FreeModel, v: &[Vec<Complex64>], p: f64, shift: f64, n: usize) -> Result<f64, NelsonError> {
    assert!(n >= 1 && n <= model.basis.max_bosons(), "sector {n} outside 1..=N_max");
    let basis = &model.basis;
    let sites = model.sites();
    let uk = &model.particle_eigen.vectors;
    let kappa = &model.particle_eigen.values;
    let modes = basis.modes();
    // C_j[γ, α] = Σ_X conj(U[X,γ]) v_{X,j} U[X,α].
    let coupling: Vec<CMat> = (0..modes)
        .map(|j| {
            let dv = CMat::from_diagonal(&nalgebra::DVector::from_iterator(sites, v.iter().map(|row| row[j])));
            uk.adjoint() * dv * uk
        })
        .collect();
    let inputs = basis.sector(n - 1);
    let outputs = basis.sector(n);
    let width = inputs.len();
    let mut gram = CMat::zeros(sites * width, sites * width);
    let mut hops: Vec<(usize, usize, f64)> = Vec::new();
    for out in outputs.clone() {
        hops.clear();
        let occ = basis.state(out).to_vec();
        for j in 0..modes {
            if occ[j] > 0 {
                let mut lower = occ.clone();
                lower[j] -= 1;
                let input = basis.lookup(&lower).expect("lowered state in basis") - inputs.start;
                hops.push((j, input, (occ[j] as f64).sqrt()));
            }
        }
        for gamma in 0..sites {
            let energy = kappa[gamma] + model.fock_energies[out] + shift;
            if energy <= 0.0 {
                return Err(NelsonError::Spectral { what: "H₀ + s on sectors >= 1", min_eigenvalue: energy });
            }
            let weight = energy.powf(2.0 * p - 2.0);
            for &(j, a_in, amp) in &hops {
                for &(k, b_in, bmp) in &hops {
                    let scale = weight * amp * bmp;
                    for alpha in 0..sites {
                        let left = coupling[j][(gamma, alpha)].conj() * scale;
                        if left == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        for beta in 0..sites {
                            gram[(alpha * width + a_in, beta * width + b_in)] += left * coupling[k][(gamma, beta)];
                        }
                    }
                }
            }
        }
    }
    let top = linalg::eigenvalues_hermitian(&linalg::hermitian_part(&gram)).last().copied().unwrap_or(0.0);
    Ok(top.max(0.0).sqrt())
}

/// One refinement level of the domain-regularity sweep.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityRow {
    pub points: usize,
    pub lambda: f64,
    pub p: f64,
    /// `max_n ‖(H₀+s)^p G‖_{n−1→n}`.
    pub norm: f64,
    pub sector_norms: Vec<f64>,
}

/// `‖(H₀+s)^p G_Λ‖` over a list of refined models and exponents.
pub fn domain_regularity_experiment(levels: &[(FreeModel, f64)], ps: &[f64]) -> Result<Vec<RegularityRow>, NelsonError> {
    let mut rows = Vec::new();
    for (model, lambda) in levels {
        let v = form_factor_modes(model, *lambda)?;
        let shift = free_shift(model);
        for &p in ps {
            let sector_norms: Vec<f64> = (1..=model.basis.max_bosons())
                .map(|n| weighted_sector_norm(model, &v, p, shift, n))
                .collect::<Result<_, _>>()?;
            rows.push(RegularityRow {
                points: model.grid().points(),
                lambda: *lambda,
                p,
                norm: sector_norms.iter().cloned().fold(0.0, f64::max),
                sector_norms,
            });
        }
    }
    Ok(rows)
}

/// Growth factors of `norm` between consecutive levels, per exponent.
pub fn growth_factors(rows: &[RegularityRow], p: f64) -> Vec<f64> {
    let series: Vec<f64> = rows.iter().filter(|r| r.p == p).map(|r| r.norm).collect();
    series.windows(2).map(|w| w[1] / w[0]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::nelson::{assemble_free, ModelSpec};
    use std::f64::consts::PI;

    fn model(n_max: usize) -> FreeModel {
        let mut spec = ModelSpec::new(Grid::new(1, 4, 2.0 * PI).unwrap()).with_scalar_metric(|x| 1.0 + 0.3 * x[0].sin());
        spec.modes = 4;
        spec.max_bosons = n_max;
        assemble_free(&spec).unwrap()
    }

    #[test]
    fn zero_form_factor_gives_zero_g() {
        let m = model(2);
        let v = vec![vec![Complex64::new(0.0, 0.0); 4]; 4];
        let ops = build_with_form_factor(&m, 2.0, &v).unwrap();
        assert_eq!(linalg::max_abs(ops.g.entries()), 0.0);
        assert_eq!(ops.one_minus_g_inverse.terms, 1);
    }

    #[test]
    fn neumann_series_is_exact() {
        let m = model(3);
        let ops = build(&m, 1.0).unwrap();
        let dim = m.tensor_dim();
        let prod = (linalg::identity(dim) - ops.g.entries()) * &ops.one_minus_g_inverse.matrix;
        assert!(linalg::max_abs(&(prod - linalg::identity(dim))) < 1e-12);
        assert!(ops.one_minus_g_inverse.terms <= 4);
        assert_eq!(ops.one_minus_g_inverse.tail, 0.0);
    }

    #[test]
    fn gram_norm_matches_dense_block() {
        let m = model(2);
        let ops = build(&m, 1.0).unwrap();
        let f = m.basis.dim();
        let dense = sector_norms(&m, 1.0).unwrap();
        for n in 1..=2 {
            let rows: Vec<usize> = (0..m.tensor_dim()).filter(|i| m.basis.total(i % f) == n).collect();
            let cols: Vec<usize> = (0..m.tensor_dim()).filter(|i| m.basis.total(i % f) == n - 1).collect();
            let block = CMat::from_fn(rows.len(), cols.len(), |i, j| ops.g.entries()[(rows[i], cols[j])]);
            let want = linalg::spectral_norm(&block);
            assert!((dense[n - 1] - want).abs() < 1e-10 * want.max(1.0), "{} vs {want}", dense[n - 1]);
        }
    }
}
