//! The variable-coefficient Nelson model on particle lattice ⊗ truncated Fock space.
//!
//! `K₀ = −∂·g∂` is built from spectral derivatives. The Nyquist slot of a spectral derivative
//! has no canonical sign, so `K₀` averages `D^s g D^s` over both choices; with `g ≡ 1` this
//! reproduces the symbol `ξ²` on every lattice momentum, Nyquist included. Boson modes are
//! the lowest eigenvectors of `h = K₀ + μ²`, in which `dΓ(ω)` is diagonal.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fock::{FockBasis, FockError, Hermiticity, ModeMap, OperatorMatrix, Space};
use crate::grid::{self, cutoff_function, fourier_multiplier, Grid, GridError, LatticeFunction, NyquistGuard, Profile};
use crate::linalg::{self, c, CMat, HermitianEigen};
use crate::psido::bump;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NelsonError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("metric eigenvalues [{min}, {max}] at lattice point {site} leave the ellipticity band [{lower}, {upper}]")]
    Ellipticity { site: usize, min: f64, max: f64, lower: f64, upper: f64 },
    #[error("invalid model: {0}")]
    Spec(String),
    #[error("{what} is not positive definite (smallest eigenvalue {min_eigenvalue})")]
    Spectral { what: &'static str, min_eigenvalue: f64 },
    #[error("tensor dimension {dim} exceeds the limit {limit}")]
    Size { dim: usize, limit: usize },
}

/// Largest particle ⊗ Fock dimension assembled densely.
pub const MAX_TENSOR_DIM: usize = 4096;

/// Coefficients and truncation parameters of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub grid: Grid,
    /// Symmetric `d × d` matrix `g(x)` per lattice point (upper-left block used).
    pub metric: Vec<[[f64; 3]; 3]>,
    /// `μ(x)`.
    pub mass: Vec<f64>,
    /// `W(X)`.
    pub potential: Vec<f64>,
    /// Floor `m > 0` with `μ ≥ m`.
    pub mass_floor: f64,
    /// Ellipticity band `[C₀, C₁]` for the eigenvalues of `g`.
    pub ellipticity: (f64, f64),
    pub profile: Profile,
    pub cutoff: f64,
    pub infrared: f64,
    pub modes: usize,
    pub max_bosons: usize,
    /// Overall factor on the field term.
    pub coupling: f64,
    pub guard: NyquistGuard,
}

impl ModelSpec {
    /// Constant coefficients `g = 1`, `μ = m = 1`, `W = 0`.
    pub fn new(grid: Grid) -> Self {
        let n = grid.len();
        let mut id = [[0.0; 3]; 3];
        for (a, row) in id.iter_mut().enumerate() {
            row[a] = 1.0;
        }
        Self {
            grid,
            metric: vec![id; n],
            mass: vec![1.0; n],
            potential: vec![0.0; n],
            mass_floor: 1.0,
            ellipticity: (0.1, 10.0),
            profile: Profile::Gaussian,
            cutoff: 2.0,
            infrared: 0.0,
            modes: n.min(8),
            max_bosons: 2,
            coupling: 1.0,
            guard: NyquistGuard::default(),
        }
    }

    /// `g(x) = f(x)·1`.
    pub fn with_scalar_metric(mut self, f: impl Fn([f64; 3]) -> f64) -> Self {
        let d = self.grid.dim();
        self.metric = (0..self.grid.len())
            .map(|k| {
                let v = f(self.grid.position(k));
                let mut m = [[0.0; 3]; 3];
                for (a, row) in m.iter_mut().enumerate().take(d) {
                    row[a] = v;
                }
                m
            })
            .collect();
        self
    }

    pub fn with_metric(mut self, f: impl Fn([f64; 3]) -> [[f64; 3]; 3]) -> Self {
        self.metric = (0..self.grid.len()).map(|k| f(self.grid.position(k))).collect();
        self
    }

    pub fn with_mass(mut self, floor: f64, f: impl Fn([f64; 3]) -> f64) -> Self {
        self.mass_floor = floor;
        self.mass = (0..self.grid.len()).map(|k| f(self.grid.position(k))).collect();
        self
    }

    pub fn with_potential(mut self, f: impl Fn([f64; 3]) -> f64) -> Self {
        self.potential = (0..self.grid.len()).map(|k| f(self.grid.position(k))).collect();
        self
    }

    pub fn validate(&self) -> Result<(), NelsonError> {
        let n = self.grid.len();
        let d = self.grid.dim();
        if self.metric.len() != n || self.mass.len() != n || self.potential.len() != n {
            return Err(NelsonError::Spec("coefficient tables must have one entry per lattice point".into()));
        }
        if !(self.mass_floor > 0.0) {
            return Err(NelsonError::Spec(format!("mass floor must be positive, got {}", self.mass_floor)));
        }
        let (lower, upper) = self.ellipticity;
        for (site, g) in self.metric.iter().enumerate() {
            let m = linalg::RMat::from_fn(d, d, |i, j| g[i][j]);
            if (0..d).any(|i| (0..d).any(|j| (g[i][j] - g[j][i]).abs() > 1e-12)) {
                return Err(NelsonError::Spec(format!("metric at lattice point {site} is not symmetric")));
            }
            let eig = linalg::symmetric_eigen(&m);
            let (min, max) = (eig.values[0], eig.values[d - 1]);
            if min < lower || max > upper {
                return Err(NelsonError::Ellipticity { site, min, max, lower, upper });
            }
        }
        if let Some(site) = self.mass.iter().position(|&mu| mu < self.mass_floor - 1e-14) {
            return Err(NelsonError::Spec(format!(
                "mass {} at lattice point {site} is below the floor {}",
                self.mass[site], self.mass_floor
            )));
        }
        if self.modes == 0 || self.modes > n {
            return Err(NelsonError::Spec(format!("mode count {} must lie in 1..={n}", self.modes)));
        }
        if self.infrared < 0.0 {
            return Err(NelsonError::Spec(format!("infrared scale must be >= 0, got {}", self.infrared)));
        }
        self.grid.check_cutoff(self.cutoff, self.guard)?;
        Ok(())
    }
}

/// Spectral derivative along `axis` whose Nyquist symbol is `sign·π/h`.
pub fn derivative_matrix(grid: &Grid, axis: usize, sign: f64) -> CMat {
    let l = grid.points();
    grid::multiplier_matrix(grid, |k| {
        let idx = grid.split(k);
        if idx[axis] == l / 2 {
            c(sign * grid.nyquist())
        } else {
            c(grid.momentum(k)[axis])
        }
    })
}

/// Every sign vector in `{+1, −1}^d`.
fn sign_vectors(d: usize) -> Vec<Vec<f64>> {
    (0..(1usize << d)).map(|bits| (0..d).map(|a| if bits >> a & 1 == 0 { 1.0 } else { -1.0 }).collect()).collect()
}

/// `K₀ = −∂·g∂`, averaged over the Nyquist signs.
pub fn kinetic_matrix(grid: &Grid, metric: &[[[f64; 3]; 3]]) -> CMat {
    let d = grid.dim();
    let n = grid.len();
    let signs = sign_vectors(d);
    let mut out = CMat::zeros(n, n);
    for s in &signs {
        let ds: Vec<CMat> = (0..d).map(|a| derivative_matrix(grid, a, s[a])).collect();
        for j in 0..d {
            for k in 0..d {
                let gjk = CMat::from_diagonal(&nalgebra::DVector::from_iterator(n, metric.iter().map(|g| c(g[j][k]))));
                out += &ds[j] * gjk * &ds[k];
            }
        }
    }
    linalg::hermitian_part(&out.unscale(signs.len() as f64))
}

/// Free part of the model: one-particle operators, boson modes and the Fock basis.
#[derive(Debug, Clone)]
pub struct FreeModel {
    pub spec: ModelSpec,
    pub kinetic: CMat,
    pub particle: CMat,
    pub particle_eigen: HermitianEigen,
    pub one_particle: CMat,
    pub one_particle_eigen: HermitianEigen,
    pub omega: CMat,
    pub modes: ModeMap,
    /// `ω` on the modes (diagonal).
    pub mode_energies: Vec<f64>,
    pub basis: FockBasis,
    /// `dΓ(ω)` on the basis states.
    pub fock_energies: Vec<f64>,
}

/// Build `K`, `h`, `ω` and the Fock basis of a validated spec.
pub fn assemble_free(spec: &ModelSpec) -> Result<FreeModel, NelsonError> {
    spec.validate()?;
    let grid = spec.grid;
    let n = grid.len();
    let kinetic = kinetic_matrix(&grid, &spec.metric);
    let potential = CMat::from_diagonal(&nalgebra::DVector::from_iterator(n, spec.potential.iter().map(|&w| c(w))));
    let particle = &kinetic + potential;
    let mass_sq = CMat::from_diagonal(&nalgebra::DVector::from_iterator(n, spec.mass.iter().map(|&m| c(m * m))));
    let one_particle = &kinetic + mass_sq;
    let h_eig = linalg::hermitian_eigen(&one_particle);
    if h_eig.values[0] <= 0.0 {
        return Err(NelsonError::Spectral { what: "h", min_eigenvalue: h_eig.values[0] });
    }
    let omega = h_eig.apply_fn(|v| c(v.sqrt()));
    let (modes, energies) = ModeMap::eigenmodes(grid, &one_particle, spec.modes)?;
    let mode_energies: Vec<f64> = energies.iter().map(|v| v.sqrt()).collect();
    let basis = FockBasis::new(spec.modes, spec.max_bosons)?;
    let fock_energies = basis.second_quantize_diagonal(&mode_energies);
    let particle_eigen = linalg::hermitian_eigen(&particle);
    Ok(FreeModel {
        spec: spec.clone(),
        kinetic,
        particle,
        particle_eigen,
        one_particle,
        one_particle_eigen: h_eig,
        omega,
        modes,
        mode_energies,
        basis,
        fock_energies,
    })
}

impl FreeModel {
    pub fn grid(&self) -> &Grid {
        &self.spec.grid
    }

    pub fn sites(&self) -> usize {
        self.spec.grid.len()
    }

    pub fn tensor_dim(&self) -> usize {
        self.sites() * self.basis.dim()
    }

    pub fn space(&self) -> Space {
        Space::ParticleFock { sites: self.sites(), modes: self.basis.modes(), max_bosons: self.basis.max_bosons() }
    }

    fn check_size(&self) -> Result<(), NelsonError> {
        let dim = self.tensor_dim();
        if dim > MAX_TENSOR_DIM {
            return Err(NelsonError::Size { dim, limit: MAX_TENSOR_DIM });
        }
        Ok(())
    }

    /// `ω^p = h^{p/2}` on the lattice.
    pub fn omega_power(&self, p: f64) -> CMat {
        self.one_particle_eigen.apply_fn(|v| c(v.powf(0.5 * p)))
    }

    /// `H₀ = K ⊗ 1 + 1 ⊗ dΓ(ω)`.
    pub fn free_hamiltonian(&self) -> Result<OperatorMatrix, NelsonError> {
        self.check_size()?;
        let f = self.basis.dim();
        let n = self.sites();
        let mut h0 = linalg::kron(&self.particle, &linalg::identity(f));
        for x in 0..n {
            for i in 0..f {
                h0[(x * f + i, x * f + i)] += c(self.fock_energies[i]);
            }
        }
        Ok(OperatorMatrix::square(self.space(), h0, Hermiticity::Hermitian)?)
    }

    /// `ρ_{Λ,X}` at lattice point `site`, with the infrared cut applied when `sigma > 0`.
    pub fn cutoff_profile(&self, lambda: f64, sigma: f64, site: usize) -> Result<LatticeFunction, NelsonError> {
        let g = self.grid();
        let rho = cutoff_function(g, self.spec.profile, lambda, &g.position(site), self.spec.guard)?;
        if sigma > 0.0 {
            Ok(fourier_multiplier(&rho, |k| infrared_factor(norm3(k), sigma)))
        } else {
            Ok(rho)
        }
    }

    /// Lattice coefficients of `coupling · ω^{−1/2} ρ^σ_{Λ,X}`.
    pub fn field_source(&self, lambda: f64, sigma: f64, site: usize, omega_inv_sqrt: &CMat) -> Result<Vec<Complex64>, NelsonError> {
        let rho = self.cutoff_profile(lambda, sigma, site)?;
        let v = omega_inv_sqrt * nalgebra::DVector::from_vec(rho.coefficients());
        Ok(v.iter().map(|z| z * self.spec.coupling).collect())
    }

    /// Mode coefficients of `coupling · ω^{−1/2} ρ_{Λ,X}` for every `X`, with the largest
    /// truncation residual against the modes.
    pub fn form_factors(&self, lambda: f64) -> Result<(Vec<Vec<Complex64>>, f64), NelsonError> {
        let w = self.omega_power(-0.5);
        let mut worst: f64 = 0.0;
        let mut out = Vec::with_capacity(self.sites());
        for site in 0..self.sites() {
            let u = self.field_source(lambda, 0.0, site, &w)?;
            let f = LatticeFunction::from_coefficients(*self.grid(), &u)?;
            let p = self.modes.project(&f)?;
            worst = worst.max(p.residual);
            out.push(p.coefficients);
        }
        Ok((out, worst))
    }

    /// Block-diagonal field term `⊕_X Φ(u_X)`.
    pub fn field_term(&self, lambda: f64) -> Result<CMat, NelsonError> {
        self.check_size()?;
        let (factors, _) = self.form_factors(lambda)?;
        let f = self.basis.dim();
        let mut out = CMat::zeros(self.tensor_dim(), self.tensor_dim());
        for (x, u) in factors.iter().enumerate() {
            out.view_mut((x * f, x * f), (f, f)).copy_from(&self.basis.field(u)?);
        }
        Ok(out)
    }

    /// `H_Λ = H₀ + ⊕_X Φ(ω^{−1/2}ρ_{Λ,X})`.
    pub fn cutoff_hamiltonian(&self, lambda: f64) -> Result<OperatorMatrix, NelsonError> {
        let h0 = self.free_hamiltonian()?;
        let field = self.field_term(lambda)?;
        Ok(OperatorMatrix::square(self.space(), h0.entries() + field, Hermiticity::Hermitian)?)
    }

    fn resolvent_sum(&self) -> Result<HermitianEigen, NelsonError> {
        let sum = &self.particle + &self.omega;
        let eig = linalg::hermitian_eigen(&sum);
        if eig.values[0] <= 0.0 {
            return Err(NelsonError::Spectral { what: "K + ω", min_eigenvalue: eig.values[0] });
        }
        Ok(eig)
    }

    /// `E_Λ(X) = ½⟨u, (K+ω)^{−1}u⟩`, `u = ω^{−1/2}ρ_{Λ,X}`, with `K + ω` acting on the boson
    /// coordinate.
    pub fn vacuum_energies(&self, lambda: f64) -> Result<Vec<f64>, NelsonError> {
        let inv = self.resolvent_sum()?.apply_fn(|v| c(1.0 / v));
        let w = self.omega_power(-0.5);
        (0..self.sites())
            .map(|site| {
                let u = nalgebra::DVector::from_vec(self.field_source(lambda, 0.0, site, &w)?);
                Ok(0.5 * u.dotc(&(&inv * &u)).re)
            })
            .collect()
    }

    pub fn vacuum_energy(&self, lambda: f64, site: usize) -> Result<f64, NelsonError> {
        Ok(self.vacuum_energies(lambda)?[site])
    }

    /// `E_Λ(X)` as a diagonal-in-`X` operator on the tensor space.
    pub fn vacuum_energy_operator(&self, lambda: f64) -> Result<CMat, NelsonError> {
        let e = self.vacuum_energies(lambda)?;
        let f = self.basis.dim();
        Ok(CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.tensor_dim(),
            (0..self.tensor_dim()).map(|i| c(e[i / f])),
        )))
    }

    /// `B^σ_{Λ}(X, x) = −(K⊗1 + 1⊗ω)^{−1} ω^{−1/2} ρ^σ_{Λ,X}(x)` for all `X`, rows indexed
    /// by `X` and columns by lattice coefficients in `x`.
    pub fn gross_b(&self, lambda: f64, sigma: f64) -> Result<GrossB, NelsonError> {
        let n = self.sites();
        let w = self.omega_power(-0.5);
        let mut source = CMat::zeros(n, n);
        for site in 0..n {
            let u = self.field_source(lambda, sigma, site, &w)?;
            for (j, v) in u.into_iter().enumerate() {
                source[(site, j)] = v;
            }
        }
        let ku = &self.particle_eigen;
        let hu = &self.one_particle_eigen;
        let mut t = ku.vectors.adjoint() * source * hu.vectors.map(|z| z.conj());
        for a in 0..n {
            for b in 0..n {
                let denom = ku.values[a] + hu.values[b].sqrt();
                if denom <= 0.0 {
                    return Err(NelsonError::Spectral { what: "K ⊗ 1 + 1 ⊗ ω", min_eigenvalue: denom });
                }
                t[(a, b)] /= -denom;
            }
        }
        let values = &ku.vectors * t * hu.vectors.transpose();
        let imaginary = values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        Ok(GrossB { grid: *self.grid(), values, imaginary })
    }

    /// Split `v_X = ω^{−1/2}ρ_{Λ,X}/√2` into the frozen-symbol part `u_X` and the rest.
    pub fn form_factor_split(&self, lambda: f64, site: usize) -> Result<FormFactorSplit, NelsonError> {
        let g = self.grid();
        let rho = self.cutoff_profile(lambda, 0.0, site)?;
        let w = self.omega_power(-0.5);
        let scale = self.spec.coupling * FRAC_1_SQRT_2;
        let full: Vec<Complex64> =
            (w * nalgebra::DVector::from_vec(rho.coefficients())).iter().map(|z| z * scale).collect();
        let metric = self.spec.metric[site];
        let mu = self.spec.mass[site];
        let d = g.dim();
        let leading = fourier_multiplier(&rho, |k| {
            let mut q = mu * mu;
            for a in 0..d {
                for b in 0..d {
                    q += k[a] * metric[a][b] * k[b];
                }
            }
            q.powf(-0.25)
        });
        let leading: Vec<Complex64> = leading.coefficients().into_iter().map(|z| z * scale).collect();
        let remainder: Vec<Complex64> = full.iter().zip(&leading).map(|(a, b)| a - b).collect();
        Ok(FormFactorSplit { full, leading, remainder })
    }
}

fn norm3(k: [f64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

/// Infrared factor `χ_σ(ξ)`: 0 for `|ξ| ≤ σ`, 1 for `|ξ| ≥ 2σ`; identically 1 at `σ = 0`.
pub fn infrared_factor(xi: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        1.0
    } else {
        1.0 - bump(xi / sigma)
    }
}

#[derive(Debug, Clone)]
pub struct GrossB {
    pub grid: Grid,
    /// Row `X`, column lattice coefficient in `x`.
    pub values: CMat,
    /// Largest imaginary part, a round-off witness.
    pub imaginary: f64,
}

impl GrossB {
    pub fn at(&self, site: usize) -> LatticeFunction {
        let row: Vec<Complex64> = self.values.row(site).iter().cloned().collect();
        LatticeFunction::from_coefficients(self.grid, &row).expect("lattice length")
    }
}

#[derive(Debug, Clone)]
pub struct FormFactorSplit {
    pub full: Vec<Complex64>,
    pub leading: Vec<Complex64>,
    pub remainder: Vec<Complex64>,
}

/// Which vacuum-energy integrand the symbol evaluator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VacuumForm {
    /// `(h₀+1)^{−1/2}/(K₀+1)`.
    LeadingOrder,
    /// `ω^{−1}/(K₀+ω)`, the constant-coefficient form of the matrix evaluator.
    FullDenominator,
}

/// Constant coefficients for the momentum-space evaluator: `g = metric·1`, `μ = mass`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantCoefficients {
    pub dim: usize,
    pub metric: f64,
    pub mass: f64,
}

/// `E_Λ = ½(2π)^{−d} ∫ w(ξ) |ρ̂(ξ/Λ)|² dξ` by adaptive quadrature in the radial variable.
pub fn vacuum_energy_symbol(
    coeffs: ConstantCoefficients,
    profile: Profile,
    lambda: f64,
    form: VacuumForm,
    tol: f64,
) -> f64 {
    let d = coeffs.dim;
    let sphere = match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI,
    };
    let prefactor = 0.5 * sphere / (2.0 * std::f64::consts::PI).powi(d as i32);
    let integrand = |r: f64| {
        let k0 = coeffs.metric * r * r;
        let weight = match form {
            VacuumForm::LeadingOrder => (k0 + 1.0).powf(-0.5) / (k0 + 1.0),
            VacuumForm::FullDenominator => {
                let w = (k0 + coeffs.mass * coeffs.mass).sqrt();
                1.0 / (w * (k0 + w))
            }
        };
        let hat = profile.hat(r * r / (lambda * lambda));
        r.powi(d as i32 - 1) * weight * hat * hat
    };
    // |ρ̂|² = e^{−r²/Λ²} is below 1e-35 beyond 9Λ.
    let top = 9.0 * lambda;
    let mut total = 0.0;
    let mut lo = 0.0;
    // Split at 1 and then dyadically so the 1/r tail is resolved on every scale.
    let mut hi = 1.0f64.min(top);
    while lo < top {
        total += quadrature::double_exponential::integrate(integrand, lo, hi, tol).integral;
        lo = hi;
        hi = (hi * 2.0).min(top);
    }
    prefactor * total
}

/// One step of a renormalization sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RenormRow {
    pub lambda: f64,
    pub lambda_next: f64,
    /// `‖(H_Λ + E_Λ + i)^{−1} − (H_Λ' + E_Λ' + i)^{−1}‖`.
    pub subtracted: f64,
    /// The same without `E`.
    pub unsubtracted: f64,
    pub ground_next: f64,
    pub ground_next_subtracted: f64,
}

struct SweepPoint {
    resolvent_sub: CMat,
    resolvent_plain: CMat,
    ground: f64,
    ground_sub: f64,
}

fn sweep_point(model: &FreeModel, lambda: f64) -> Result<SweepPoint, NelsonError> {
    let h = model.cutoff_hamiltonian(lambda)?.into_entries();
    let e = model.vacuum_energy_operator(lambda)?;
    let shift = linalg::identity(h.nrows()).map(|z| z * linalg::I);
    let he = &h + &e;
    let inv = |m: CMat| m.try_inverse().ok_or(NelsonError::Spectral { what: "H + i", min_eigenvalue: 0.0 });
    Ok(SweepPoint {
        resolvent_sub: inv(&he + &shift)?,
        resolvent_plain: inv(&h + &shift)?,
        ground: linalg::eigenvalues_hermitian(&h)[0],
        ground_sub: linalg::eigenvalues_hermitian(&he)[0],
    })
}

/// Resolvent differences between consecutive cutoffs, with and without `E_Λ`.
pub fn renorm_convergence_experiment(model: &FreeModel, lambdas: &[f64]) -> Result<Vec<RenormRow>, NelsonError> {
    let points: Vec<SweepPoint> =
        lambdas.par_iter().map(|&l| sweep_point(model, l)).collect::<Result<_, _>>()?;
    Ok(lambdas
        .windows(2)
        .zip(points.windows(2))
        .map(|(l, p)| RenormRow {
            lambda: l[0],
            lambda_next: l[1],
            subtracted: linalg::spectral_norm(&(&p[0].resolvent_sub - &p[1].resolvent_sub)),
            unsubtracted: linalg::spectral_norm(&(&p[0].resolvent_plain - &p[1].resolvent_plain)),
            ground_next: p[1].ground,
            ground_next_subtracted: p[1].ground_sub,
        })
        .collect())
}

/// Result of the relative-bound sampling.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RelativeBound {
    pub samples: usize,
    /// `sup_X ‖ω^{−1/2}ρ_{Λ,X}‖`.
    pub form_factor_norm: f64,
    /// Samples violating `‖ΦΨ‖ ≤ √2 s ‖(N+1)^{1/2}Ψ‖`.
    pub violations: usize,
    /// Samples violating the same bound without the `√2`.
    pub violations_without_sqrt2: usize,
    /// Samples violating `‖ΦΨ‖ ≤ √2 s (ε‖H₀Ψ‖ + C_ε‖Ψ‖)` at the given `ε`.
    pub epsilon_violations: usize,
    pub epsilon: f64,
}

/// Sample random `Ψ` and test the field-operator bound behind self-adjointness of `H_Λ`.
pub fn relative_bound_check(model: &FreeModel, lambda: f64, samples: usize, epsilon: f64, seed: u64) -> Result<RelativeBound, NelsonError> {
    use rand::{RngExt, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h0 = model.free_hamiltonian()?.into_entries();
    let field = model.field_term(lambda)?;
    let w = model.omega_power(-0.5);
    let mut s: f64 = 0.0;
    for site in 0..model.sites() {
        s = s.max(linalg::norm(&model.field_source(lambda, 0.0, site, &w)?));
    }
    let f = model.basis.dim();
    let dim = model.tensor_dim();
    let number: Vec<f64> = (0..dim).map(|i| model.basis.total(i % f) as f64 + 1.0).collect();
    // H₀ ≥ m N + min K; shift so that N ≤ H₀'/m holds for H₀' = H₀ − min(K, 0).
    let kmin = model.particle_eigen.values[0].min(0.0);
    let m = model.spec.mass_floor;
    let c_eps = (1.0 + 1.0 / (4.0 * epsilon * epsilon * m * m)).sqrt();
    let mut report = RelativeBound {
        samples,
        form_factor_norm: s,
        violations: 0,
        violations_without_sqrt2: 0,
        epsilon_violations: 0,
        epsilon,
    };
    for _ in 0..samples {
        let psi = nalgebra::DVector::from_fn(dim, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let lhs = (&field * &psi).norm();
        let n_half = psi.iter().zip(&number).map(|(z, n)| z.norm_sqr() * n).sum::<f64>().sqrt();
        let h_psi = (&h0 * &psi - psi.map(|z| z * kmin)).norm();
        let tol = 1e-12 * lhs.max(1.0);
        if lhs > std::f64::consts::SQRT_2 * s * n_half + tol {
            report.violations += 1;
        }
        if lhs > s * n_half + tol {
            report.violations_without_sqrt2 += 1;
        }
        if lhs > std::f64::consts::SQRT_2 * s * (epsilon * h_psi + c_eps * psi.norm()) + tol {
            report.epsilon_violations += 1;
        }
    }
    Ok(report)
}

/// Options of the Gross-transformation check.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedOptions {
    /// Boson modes kept (lowest eigenmodes of `h`).
    pub fock_modes: usize,
    /// Internal boson truncation used while applying `U`.
    pub internal_bosons: usize,
    /// Lowest eigenvectors of `K` used as particle inputs.
    pub particle_states: usize,
    /// Fock sectors of the inputs.
    pub input_sectors: usize,
    /// Fock sectors on which the outputs are compared.
    pub output_sectors: usize,
    /// Replace `B` by zero or by an `X`-independent mode vector.
    pub b_override: Option<Vec<Complex64>>,
}

impl Default for TransformedOptions {
    fn default() -> Self {
        Self {
            fock_modes: 4,
            internal_bosons: 8,
            particle_states: 3,
            input_sectors: 1,
            output_sectors: 3,
            b_override: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransformedReport {
    pub points: usize,
    pub lambda: f64,
    pub sigma: f64,
    /// `‖P(U H U* − (H₀ + R + V))Q‖`.
    pub residual: f64,
    /// The residual divided by `‖P H Q‖`.
    pub relative: f64,
    /// Worst Weyl-conjugation residual of `dΓ(ω)` and `Φ` on the same vectors.
    pub fock_identity: f64,
    /// Truncation tolerance for the Fock identities.
    pub tolerance: f64,
}

/// Rows of a tensor vector stored as `sites × fock` matrix.
fn row_vec(m: &CMat, x: usize) -> Vec<Complex64> {
    m.row(x).iter().cloned().collect()
}

fn set_row(m: &mut CMat, x: usize, v: &[Complex64]) {
    for (j, z) in v.iter().enumerate() {
        m[(x, j)] = *z;
    }
}

/// Compare `U_Λ H_Λ U_Λ*` with the normal-ordered transformed Hamiltonian on a set of low-energy
/// vectors (d = 1). Both sides use the same spectral derivatives, so the residual measures the
/// lattice failure of the product rule behind `U∂U* = ∂ − iΠ(∂B)`.
pub fn transformed_hamiltonian_check(
    spec: &ModelSpec,
    lambda: f64,
    sigma: f64,
    opts: &TransformedOptions,
) -> Result<TransformedReport, NelsonError> {
    if spec.grid.dim() != 1 {
        return Err(NelsonError::Spec("the transformed-Hamiltonian check runs in d = 1".into()));
    }
    let mut spec = spec.clone();
    spec.modes = opts.fock_modes;
    spec.max_bosons = opts.internal_bosons;
    spec.cutoff = lambda;
    let model = assemble_free(&spec)?;
    let n = model.sites();
    let basis = &model.basis;
    let fdim = basis.dim();
    let modes = model.modes.vectors();
    let w = &model.mode_energies;
    let metric: Vec<f64> = spec.metric.iter().map(|g| g[0][0]).collect();

    // Mode coefficients u_X and b(X).
    let (u, _) = model.form_factors(lambda)?;
    let b: Vec<Vec<Complex64>> = match &opts.b_override {
        Some(v) => vec![v.clone(); n],
        None => {
            let gb = model.gross_b(lambda, sigma)?;
            let proj = gb.values.clone() * modes.map(|z| z.conj());
            (0..n).map(|x| proj.row(x).iter().cloned().collect()).collect()
        }
    };
    let bmat = CMat::from_fn(n, opts.fock_modes, |x, j| b[x][j]);
    // Φ form factor u_X + (K₀⊗1 + 1⊗ω) b.
    let kb = &model.kinetic * &bmat;
    let field_source: Vec<Vec<Complex64>> =
        (0..n).map(|x| (0..opts.fock_modes).map(|j| u[x][j] + kb[(x, j)] + bmat[(x, j)] * w[j]).collect()).collect();
    let derivs: Vec<CMat> = [1.0, -1.0].iter().map(|&s| derivative_matrix(&spec.grid, 0, s).map(|z| z * linalg::I)).collect();
    let db: Vec<CMat> = derivs.iter().map(|d| d * &bmat).collect();

    let mut scalar = vec![0.0; n];
    for x in 0..n {
        let bx = &b[x];
        scalar[x] = 0.5 * bx.iter().zip(w).map(|(z, e)| z.norm_sqr() * e).sum::<f64>() + linalg::inner(bx, &u[x]).re;
        for d in &db {
            let row = row_vec(d, x);
            scalar[x] += 0.25 * metric[x] * linalg::norm(&row).powi(2);
        }
    }

    let tol = 1e-15;
    let apply_h = |v: &CMat| -> CMat {
        let mut out = &model.particle * v;
        for x in 0..n {
            let row = row_vec(v, x);
            let up = basis.apply_creation(&u[x], &row);
            let down = basis.apply_annihilation(&u[x], &row);
            for i in 0..fdim {
                out[(x, i)] += c(model.fock_energies[i]) * row[i] + (up[i] + down[i]) * FRAC_1_SQRT_2;
            }
        }
        out
    };
    let conj_u = |v: &CMat, sign: f64| -> CMat {
        let mut out = v.clone();
        for (x, bx) in b.iter().enumerate() {
            let f: Vec<Complex64> = bx.iter().map(|z| z * sign).collect();
            set_row(&mut out, x, &basis.weyl_apply(&f, &row_vec(v, x), tol));
        }
        out
    };
    let rhs = |v: &CMat| -> CMat {
        let mut out = &model.particle * v;
        for x in 0..n {
            let row = row_vec(v, x);
            let up = basis.apply_creation(&field_source[x], &row);
            let down = basis.apply_annihilation(&field_source[x], &row);
            for i in 0..fdim {
                out[(x, i)] +=
                    c(model.fock_energies[i] + scalar[x]) * row[i] + (up[i] + down[i]) * FRAC_1_SQRT_2;
            }
        }
        for (d, dbs) in derivs.iter().zip(&db) {
            let mut acc = CMat::zeros(n, fdim);
            // −√2 a*(∂B)·g∂
            let dv = d * v;
            for x in 0..n {
                let f = row_vec(dbs, x);
                let g_dv: Vec<Complex64> = row_vec(&dv, x).iter().map(|z| z * metric[x]).collect();
                let t = basis.apply_creation(&f, &g_dv);
                for i in 0..fdim {
                    acc[(x, i)] -= t[i] * std::f64::consts::SQRT_2;
                }
            }
            // +√2 ∂·g a(∂B)
            let mut inner = CMat::zeros(n, fdim);
            for x in 0..n {
                let f = row_vec(dbs, x);
                let t = basis.apply_annihilation(&f, &row_vec(v, x));
                for i in 0..fdim {
                    inner[(x, i)] = t[i] * metric[x];
                }
            }
            acc += (d * inner).scale(std::f64::consts::SQRT_2);
            // −½ a*ga* − ½ aga + a*ga
            for x in 0..n {
                let f = row_vec(dbs, x);
                let row = row_vec(v, x);
                let cc = basis.apply_creation(&f, &basis.apply_creation(&f, &row));
                let aa = basis.apply_annihilation(&f, &basis.apply_annihilation(&f, &row));
                let ca = basis.apply_creation(&f, &basis.apply_annihilation(&f, &row));
                for i in 0..fdim {
                    acc[(x, i)] += (cc[i] * -0.5 + aa[i] * -0.5 + ca[i]) * metric[x];
                }
            }
            out += acc.scale(0.5);
        }
        out
    };

    let kin = &model.particle_eigen;
    let input_window = basis.window(opts.input_sectors);
    let output_window = basis.window(opts.output_sectors);
    let mut residual_cols = Vec::new();
    let mut reference_cols = Vec::new();
    let mut fock_worst: f64 = 0.0;
    for p in 0..opts.particle_states {
        for s in 0..input_window {
            let mut v = CMat::zeros(n, fdim);
            for x in 0..n {
                v[(x, s)] = kin.vectors[(x, p)];
            }
            let lhs = conj_u(&apply_h(&conj_u(&v, -1.0)), 1.0);
            let r = rhs(&v);
            let diff = &lhs - &r;
            residual_cols.push(diff.columns(0, output_window).transpose().iter().cloned().collect::<Vec<_>>());
            reference_cols.push(r.columns(0, output_window).transpose().iter().cloned().collect::<Vec<_>>());

            // Fock-only identities: U dΓ(ω) U* and U Φ(u) U*.
            let mut d_lhs = v.clone();
            let mut phi_lhs = v.clone();
            for x in 0..n {
                let mb: Vec<Complex64> = b[x].iter().map(|z| -z).collect();
                let pre = basis.weyl_apply(&mb, &row_vec(&v, x), tol);
                let dg: Vec<Complex64> = pre.iter().enumerate().map(|(i, z)| z * model.fock_energies[i]).collect();
                set_row(&mut d_lhs, x, &basis.weyl_apply(&b[x], &dg, tol));
                let up = basis.apply_creation(&u[x], &pre);
                let down = basis.apply_annihilation(&u[x], &pre);
                let ph: Vec<Complex64> = up.iter().zip(&down).map(|(a, d)| (a + d) * FRAC_1_SQRT_2).collect();
                set_row(&mut phi_lhs, x, &basis.weyl_apply(&b[x], &ph, tol));
            }
            for x in 0..n {
                let row = row_vec(&v, x);
                let wb: Vec<Complex64> = b[x].iter().zip(w).map(|(z, e)| z * e).collect();
                let up = basis.apply_creation(&wb, &row);
                let down = basis.apply_annihilation(&wb, &row);
                let half = 0.5 * b[x].iter().zip(w).map(|(z, e)| z.norm_sqr() * e).sum::<f64>();
                let re = linalg::inner(&u[x], &b[x]).re;
                let up_u = basis.apply_creation(&u[x], &row);
                let down_u = basis.apply_annihilation(&u[x], &row);
                let mut e1: f64 = 0.0;
                let mut e2: f64 = 0.0;
                for i in 0..output_window {
                    let want1 = row[i] * (model.fock_energies[i] + half) + (up[i] + down[i]) * FRAC_1_SQRT_2;
                    let want2 = row[i] * re + (up_u[i] + down_u[i]) * FRAC_1_SQRT_2;
                    e1 += (d_lhs[(x, i)] - want1).norm_sqr();
                    e2 += (phi_lhs[(x, i)] - want2).norm_sqr();
                }
                fock_worst = fock_worst.max(e1.sqrt()).max(e2.sqrt());
            }
        }
    }
    let to_mat = |cols: &[Vec<Complex64>]| CMat::from_fn(cols[0].len(), cols.len(), |i, j| cols[j][i]);
    let residual = linalg::spectral_norm(&to_mat(&residual_cols));
    let reference = linalg::spectral_norm(&to_mat(&reference_cols));
    let bmax = b.iter().map(|v| linalg::norm(v)).fold(0.0, f64::max);
    let tolerance = crate::fock::truncation_tolerance(bmax, opts.internal_bosons, opts.output_sectors)
        * (1.0 + w.iter().cloned().fold(0.0, f64::max) * opts.internal_bosons as f64)
        + 1e-10;
    Ok(TransformedReport {
        points: spec.grid.points(),
        lambda,
        sigma,
        residual,
        relative: residual / reference.max(f64::MIN_POSITIVE),
        fock_identity: fock_worst,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(l: usize) -> ModelSpec {
        ModelSpec::new(Grid::new(1, l, 2.0 * PI).unwrap())
    }

    #[test]
    fn constant_metric_spectrum_is_exact() {
        let s = spec(8);
        let m = assemble_free(&s).unwrap();
        let mut want: Vec<f64> = (0..8).map(|k| s.grid.momentum_sq(k) + 1.0).collect();
        want.sort_by(f64::total_cmp);
        want[7] = s.grid.nyquist().powi(2) + 1.0;
        want.sort_by(f64::total_cmp);
        let got = linalg::eigenvalues_hermitian(&m.one_particle);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn ellipticity_violation_names_the_site() {
        let s = spec(8).with_scalar_metric(|x| if x[0] > 3.0 && x[0] < 3.5 { 20.0 } else { 1.0 });
        match s.validate() {
            Err(NelsonError::Ellipticity { site, .. }) => assert_eq!(site, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn omega_squares_to_h() {
        let s = spec(8).with_scalar_metric(|x| 1.0 + 0.3 * x[0].sin());
        let m = assemble_free(&s).unwrap();
        assert!(linalg::max_abs(&(&m.omega * &m.omega - &m.one_particle)) < 1e-10);
        let half = m.omega_power(0.5);
        assert!(linalg::max_abs(&(&half * &half - &m.omega)) < 1e-10);
    }

    #[test]
    fn infrared_factor_profile() {
        assert_eq!(infrared_factor(0.5, 0.0), 1.0);
        assert_eq!(infrared_factor(0.5, 1.0), 0.0);
        assert_eq!(infrared_factor(2.5, 1.0), 1.0);
    }

    #[test]
    fn symbol_evaluator_vanishes_without_profile_mass() {
        let coeffs = ConstantCoefficients { dim: 3, metric: 1.0, mass: 1.0 };
        let a = vacuum_energy_symbol(coeffs, Profile::Gaussian, 4.0, VacuumForm::FullDenominator, 1e-10);
        let b = vacuum_energy_symbol(coeffs, Profile::Gaussian, 8.0, VacuumForm::FullDenominator, 1e-10);
        assert!(a > 0.0 && b > a);
    }
}
