//! Periodic lattice, unitary DFT, Sobolev norms and cutoff profiles.
//!
//! Positions are `x_k = k ℓ / L` per axis, momenta `(2π/ℓ)·{-L/2, …, L/2-1}` stored in FFT
//! order. Flat indices run with axis 0 fastest.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("spatial dimension {0} is not supported (expected 1, 2 or 3)")]
    Dimension(usize),
    #[error("points per axis must be a power of two >= 2, got {0}")]
    Points(usize),
    #[error("box side must be positive and finite, got {0}")]
    Side(f64),
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error(
        "cutoff scale {lambda} exceeds the resolution guard {guard} (guard factor {factor} x Nyquist momentum {nyquist} at L = {points}, side {side})"
    )]
    Resolution { lambda: f64, guard: f64, factor: f64, nyquist: f64, points: usize, side: f64 },
    #[error("cutoff scale must be finite and >= 0, got {0}")]
    Cutoff(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    dim: usize,
    points: usize,
    side: f64,
}

impl Grid {
    pub fn new(dim: usize, points: usize, side: f64) -> Result<Self, GridError> {
        if !(1..=3).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if points < 2 || !points.is_power_of_two() {
            return Err(GridError::Points(points));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(GridError::Side(side));
        }
        Ok(Self { dim, points, side })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Total number of lattice points `L^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Weight of one momentum cell in `(2π)^{-d} ∫ dξ`.
    pub fn dual_weight(&self) -> f64 {
        self.side.powi(-(self.dim as i32))
    }

    pub fn momentum_step(&self) -> f64 {
        2.0 * PI / self.side
    }

    pub fn nyquist(&self) -> f64 {
        PI * self.points as f64 / self.side
    }

    /// Signed wave number of the FFT slot `j` on one axis.
    pub fn wave_number(&self, j: usize) -> i64 {
        let l = self.points as i64;
        let j = j as i64;
        if j < l / 2 {
            j
        } else {
            j - l
        }
    }

    pub fn split(&self, flat: usize) -> [usize; 3] {
        let l = self.points;
        let mut out = [0usize; 3];
        let mut rest = flat;
        for a in out.iter_mut().take(self.dim) {
            *a = rest % l;
            rest /= l;
        }
        out
    }

    pub fn join(&self, idx: [usize; 3]) -> usize {
        let l = self.points;
        (0..self.dim).rev().fold(0, |acc, a| acc * l + idx[a] % l)
    }

    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.split(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = idx[a] as f64 * h;
        }
        x
    }

    pub fn momentum(&self, flat: usize) -> [f64; 3] {
        let idx = self.split(flat);
        let step = self.momentum_step();
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            k[a] = self.wave_number(idx[a]) as f64 * step;
        }
        k
    }

    pub fn momentum_sq(&self, flat: usize) -> f64 {
        self.momentum(flat).iter().map(|v| v * v).sum()
    }

    /// Nearest lattice point to `x`, periodically; ties round down.
    pub fn snap(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let l = self.points as i64;
        let mut idx = [0usize; 3];
        for (a, slot) in idx.iter_mut().enumerate().take(self.dim) {
            let v = x.get(a).copied().unwrap_or(0.0) / h;
            let r = (v - 0.5).ceil() as i64;
            *slot = r.rem_euclid(l) as usize;
        }
        self.join(idx)
    }

    /// Flat index of `from` shifted by the lattice vector `by` (periodic).
    pub fn shift(&self, from: usize, by: [i64; 3]) -> usize {
        let idx = self.split(from);
        let l = self.points as i64;
        let mut out = [0usize; 3];
        for a in 0..self.dim {
            out[a] = (idx[a] as i64 + by[a]).rem_euclid(l) as usize;
        }
        self.join(out)
    }

    /// Largest admissible cutoff for a guard factor.
    pub fn cutoff_guard(&self, guard: NyquistGuard) -> f64 {
        guard.0 * self.nyquist()
    }

    pub fn check_cutoff(&self, lambda: f64, guard: NyquistGuard) -> Result<(), GridError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(GridError::Cutoff(lambda));
        }
        let limit = self.cutoff_guard(guard);
        if lambda > limit * (1.0 + 1e-12) {
            return Err(GridError::Resolution {
                lambda,
                guard: limit,
                factor: guard.0,
                nyquist: self.nyquist(),
                points: self.points,
                side: self.side,
            });
        }
        Ok(())
    }
}

/// Fraction of the Nyquist momentum a cutoff may reach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NyquistGuard(pub f64);

impl Default for NyquistGuard {
    fn default() -> Self {
        Self(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl LatticeFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.position(k))).collect();
        Self { grid, values }
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self, GridError> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// ⟨u, v⟩ = Σ ū v · (ℓ/L)^d.
    pub fn inner(&self, other: &Self) -> Result<Complex64, GridError> {
        if other.grid != self.grid {
            return Err(GridError::Length { expected: self.values.len(), got: other.values.len() });
        }
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// Coefficients in the orthonormal basis of normalized lattice indicators.
    pub fn coefficients(&self) -> Vec<Complex64> {
        let s = self.grid.cell_volume().sqrt();
        self.values.iter().map(|z| z * s).collect()
    }

    pub fn from_coefficients(grid: Grid, coeffs: &[Complex64]) -> Result<Self, GridError> {
        let s = grid.cell_volume().sqrt();
        Self::new(grid, coeffs.iter().map(|z| z / s).collect())
    }

    /// Translate by a lattice vector: `(T u)(x) = u(x - shift)`.
    pub fn translate(&self, by: [i64; 3]) -> Self {
        let g = self.grid;
        let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
        for (k, v) in self.values.iter().enumerate() {
            out[g.shift(k, by)] = *v;
        }
        Self { grid: g, values: out }
    }

    pub fn sub(&self, other: &Self) -> Result<Self, GridError> {
        if other.grid != self.grid {
            return Err(GridError::Length { expected: self.values.len(), got: other.values.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid, values })
    }
}

/// In-place multi-axis FFT with unitary normalization.
pub fn fft_in_place(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let l = grid.points();
    let mut planner = FftPlanner::<f64>::new();
    let fft: std::sync::Arc<dyn Fft<f64>> =
        if inverse { planner.plan_fft_inverse(l) } else { planner.plan_fft_forward(l) };
    let mut line = vec![Complex64::new(0.0, 0.0); l];
    let n = grid.len();
    for axis in 0..grid.dim() {
        let stride = l.pow(axis as u32);
        for start in 0..n {
            if !(start / stride).is_multiple_of(l) {
                continue;
            }
            for j in 0..l {
                line[j] = data[start + j * stride];
            }
            fft.process(&mut line);
            for j in 0..l {
                data[start + j * stride] = line[j];
            }
        }
    }
    let scale = 1.0 / (n as f64).sqrt();
    for z in data.iter_mut() {
        *z *= scale;
    }
}

/// Unitary DFT; the output is indexed by momentum slots in FFT order.
pub fn dft(u: &LatticeFunction) -> LatticeFunction {
    let mut v = u.values.clone();
    fft_in_place(&u.grid, &mut v, false);
    LatticeFunction { grid: u.grid, values: v }
}

pub fn idft(u: &LatticeFunction) -> LatticeFunction {
    let mut v = u.values.clone();
    fft_in_place(&u.grid, &mut v, true);
    LatticeFunction { grid: u.grid, values: v }
}

/// `û(ξ) = Σ_x u(x) e^{-iξ·x} (ℓ/L)^d`, the Riemann sum of the continuum transform.
pub fn fourier_transform(u: &LatticeFunction) -> Vec<Complex64> {
    let g = u.grid;
    let scale = g.cell_volume() * (g.len() as f64).sqrt();
    dft(u).values.into_iter().map(|z| z * scale).collect()
}

/// `⟨ξ⟩ = (1 + |ξ|²)^{1/2}`.
pub fn japanese(xi_sq: f64) -> f64 {
    (1.0 + xi_sq).sqrt()
}

/// `(Σ_ξ ⟨ξ⟩^{2s} |û(ξ)|² ℓ^{-d})^{1/2}`.
pub fn sobolev_norm(u: &LatticeFunction, s: f64) -> f64 {
    let g = u.grid;
    let w = g.dual_weight();
    fourier_transform(u)
        .iter()
        .enumerate()
        .map(|(k, z)| (1.0 + g.momentum_sq(k)).powf(s) * z.norm_sqr() * w)
        .sum::<f64>()
        .sqrt()
}

/// Normalized symmetric cutoff profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum Profile {
    /// `ρ(x) = (2π)^{-d/2} e^{-|x|²/2}`, `ρ̂(ξ) = e^{-|ξ|²/2}`.
    #[default]
    Gaussian,
}

impl Profile {
    /// One-dimensional factor of the profile at scale `lambda`.
    fn factor(&self, lambda: f64, x: f64) -> f64 {
        match self {
            Profile::Gaussian => {
                let y = lambda * x;
                lambda * (-0.5 * y * y).exp() / (2.0 * PI).sqrt()
            }
        }
    }

    /// `ρ̂(ξ)` for `|ξ|² = xi_sq`.
    pub fn hat(&self, xi_sq: f64) -> f64 {
        match self {
            Profile::Gaussian => (-0.5 * xi_sq).exp(),
        }
    }

    /// Periodized one-dimensional factor on a circle of length `side`.
    fn periodized_factor(&self, lambda: f64, side: f64, x: f64) -> f64 {
        let spread = lambda * side;
        if spread >= 2.0 * PI {
            let images = (9.0 / spread + 1.0).ceil() as i64;
            (-images..=images).map(|n| self.factor(lambda, x + n as f64 * side)).sum()
        } else {
            // Poisson-summed form converges faster for wide profiles.
            let step = 2.0 * PI / side;
            let modes = (9.0 * lambda / step + 1.0).ceil() as i64;
            (-modes..=modes)
                .map(|n| {
                    let xi = n as f64 * step;
                    self.hat(xi * xi / (lambda * lambda)) * (xi * x).cos()
                })
                .sum::<f64>()
                / side
        }
    }
}

/// `ρ_{Λ,X}` sampled from the periodized profile and normalized to unit discrete mass.
/// `lambda = 0` is the "no smearing" sentinel and returns the lattice delta.
pub fn cutoff_function(
    grid: &Grid,
    profile: Profile,
    lambda: f64,
    center: &[f64],
    guard: NyquistGuard,
) -> Result<LatticeFunction, GridError> {
    grid.check_cutoff(lambda, guard)?;
    if lambda == 0.0 {
        return Ok(delta_function(grid, center));
    }
    let c = grid.snap(center);
    let cidx = grid.split(c);
    let l = grid.points();
    let h = grid.spacing();
    // Per-axis table over lattice offsets.
    let table: Vec<f64> = (0..l)
        .map(|j| profile.periodized_factor(lambda, grid.side(), j as f64 * h))
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let idx = grid.split(k);
        let mut v = 1.0;
        for a in 0..grid.dim() {
            let off = (idx[a] + l - cidx[a]) % l;
            v *= table[off];
        }
        values.push(v);
    }
    let mass: f64 = values.iter().sum::<f64>() * grid.cell_volume();
    Ok(LatticeFunction {
        grid: *grid,
        values: values.into_iter().map(|v| Complex64::new(v / mass, 0.0)).collect(),
    })
}

/// Lattice surrogate of `δ_X`: indicator at the snapped point divided by the cell volume.
pub fn delta_function(grid: &Grid, center: &[f64]) -> LatticeFunction {
    let c = grid.snap(center);
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    values[c] = Complex64::new(1.0 / grid.cell_volume(), 0.0);
    LatticeFunction { grid: *grid, values }
}

/// Apply a Fourier multiplier `m(ξ)` to `u`.
pub fn fourier_multiplier(u: &LatticeFunction, m: impl Fn([f64; 3]) -> f64) -> LatticeFunction {
    let g = u.grid;
    let mut v = u.values.clone();
    fft_in_place(&g, &mut v, false);
    for (k, z) in v.iter_mut().enumerate() {
        *z *= m(g.momentum(k));
    }
    fft_in_place(&g, &mut v, true);
    LatticeFunction { grid: g, values: v }
}

/// Unitary DFT as a dense matrix: column `j` is the transform of the `j`-th unit vector.
pub fn dft_matrix(grid: &Grid) -> nalgebra::DMatrix<Complex64> {
    let n = grid.len();
    let mut m = nalgebra::DMatrix::zeros(n, n);
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        col.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        col[j] = Complex64::new(1.0, 0.0);
        fft_in_place(grid, &mut col, false);
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Dense matrix of the Fourier multiplier `m(ξ)` on lattice coefficients.
pub fn multiplier_matrix(grid: &Grid, m: impl Fn(usize) -> Complex64) -> nalgebra::DMatrix<Complex64> {
    let f = dft_matrix(grid);
    let n = grid.len();
    let mut scaled = f.clone();
    for k in 0..n {
        let w = m(k);
        for v in scaled.row_mut(k).iter_mut() {
            *v *= w;
        }
    }
    f.adjoint() * scaled
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(l: usize) -> Grid {
        Grid::new(1, l, 2.0 * PI).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(Grid::new(4, 8, 1.0), Err(GridError::Dimension(4)));
        assert_eq!(Grid::new(1, 6, 1.0), Err(GridError::Points(6)));
        assert!(matches!(Grid::new(1, 8, -1.0), Err(GridError::Side(_))));
    }

    #[test]
    fn constant_maps_to_zero_mode() {
        let g = Grid::new(2, 8, 3.0).unwrap();
        let u = LatticeFunction::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let v = dft(&u);
        assert!((v.values()[0] - Complex64::new(8.0, 0.0)).norm() < 1e-12);
        assert!(v.values()[1..].iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn plane_wave_is_a_delta() {
        let g = g1(16);
        let target = 13; // wave number -3
        let k = g.momentum(target)[0];
        let u = LatticeFunction::from_fn(g, |x| Complex64::from_polar(1.0, k * x[0]));
        let v = dft(&u);
        for (j, z) in v.values().iter().enumerate() {
            let want = if j == target { 4.0 } else { 0.0 };
            assert!((z.norm() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn snap_and_shift() {
        let g = g1(8);
        let h = g.spacing();
        assert_eq!(g.snap(&[2.4 * h]), 2);
        assert_eq!(g.snap(&[2.5 * h]), 2);
        assert_eq!(g.snap(&[-0.6 * h]), 7);
        assert_eq!(g.shift(7, [3, 0, 0]), 2);
    }

    #[test]
    fn cutoff_mass_and_fourier_side() {
        let g = g1(64);
        let rho = cutoff_function(&g, Profile::Gaussian, 2.0, &[0.0], NyquistGuard::default()).unwrap();
        let mass: f64 = rho.values().iter().map(|z| z.re).sum::<f64>() * g.cell_volume();
        assert!((mass - 1.0).abs() < 1e-8);
        assert!(rho.values().iter().all(|z| z.re >= 0.0 && z.im == 0.0));
        let hat = fourier_transform(&rho);
        assert!((hat[0].re - 1.0).abs() < 1e-12);
        for (k, z) in hat.iter().enumerate() {
            let want = Profile::Gaussian.hat(g.momentum_sq(k) / 4.0);
            assert!((z - want).norm() < 1e-10, "mode {k}");
        }
    }

    #[test]
    fn cutoff_guard_trips() {
        let g = g1(8);
        assert!(matches!(
            cutoff_function(&g, Profile::Gaussian, 4.5, &[0.0], NyquistGuard::default()),
            Err(GridError::Resolution { .. })
        ));
        assert!(cutoff_function(&g, Profile::Gaussian, 4.0, &[0.0], NyquistGuard::default()).is_ok());
    }

    #[test]
    fn delta_reproduces_values() {
        let g = Grid::new(2, 8, 1.5).unwrap();
        let u = LatticeFunction::from_fn(g, |x| Complex64::new(x[0].sin(), x[1]));
        let x = g.position(19);
        let d = delta_function(&g, &x);
        assert!((d.inner(&u).unwrap() - u.values()[19]).norm() < 1e-12);
        let hat = dft(&d);
        let m0 = hat.values()[0].norm();
        assert!(hat.values().iter().all(|z| (z.norm() - m0).abs() < 1e-12));
    }

    #[test]
    fn cutoff_moves_with_center() {
        let g = g1(32);
        let x = g.position(5);
        let a = cutoff_function(&g, Profile::Gaussian, 3.0, &[0.0], NyquistGuard::default()).unwrap();
        let b = cutoff_function(&g, Profile::Gaussian, 3.0, &[x[0] + 0.3 * g.spacing()], NyquistGuard::default())
            .unwrap();
        let moved = a.translate([5, 0, 0]);
        assert!(moved.sub(&b).unwrap().norm() < 1e-14);
    }
}
