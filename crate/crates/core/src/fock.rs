//! Truncated bosonic Fock space in the occupation-number representation.
//!
//! States are occupation vectors over `M` one-particle modes with total number at most
//! `N_max`, ordered by sector (vacuum first). Creation operators drop whatever would land
//! above `N_max`, so the canonical relations hold exactly only on sectors below the top.

use std::collections::HashMap;
use std::ops::Range;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{Grid, LatticeFunction};
use crate::linalg::{self, CMat, I};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("space mismatch: {left} vs {right}")]
    Space { left: String, right: String },
    #[error("matrix declared hermitian but deviates by {defect:e}")]
    NotHermitian { defect: f64 },
    #[error("operator is not positive definite (smallest eigenvalue {min_eigenvalue})")]
    Spectral { min_eigenvalue: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("mode vectors are not orthonormal (defect {0:e})")]
    NotOrthonormal(f64),
}

/// Row or column space of an [`OperatorMatrix`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Space {
    /// Position lattice with the given number of sites.
    Lattice(usize),
    /// One-particle mode space.
    Modes(usize),
    Fock { modes: usize, max_bosons: usize },
    /// Particle lattice tensored with a Fock space, particle index outermost.
    ParticleFock { sites: usize, modes: usize, max_bosons: usize },
    /// Any other space, described by a label and its dimension.
    Other { label: String, dim: usize },
}

impl Space {
    pub fn dim(&self) -> usize {
        match self {
            Space::Lattice(n) | Space::Modes(n) => *n,
            Space::Fock { modes, max_bosons } => fock_dimension(*modes, *max_bosons),
            Space::ParticleFock { sites, modes, max_bosons } => sites * fock_dimension(*modes, *max_bosons),
            Space::Other { dim, .. } => *dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Hermiticity {
    Hermitian,
    NonHermitian,
    Unknown,
}

/// Hermiticity tolerance for a declared-hermitian matrix, relative to its largest entry.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    rows: Space,
    cols: Space,
    entries: CMat,
    hermitian: Hermiticity,
}

impl OperatorMatrix {
    pub fn new(rows: Space, cols: Space, entries: CMat, hermitian: Hermiticity) -> Result<Self, FockError> {
        if entries.nrows() != rows.dim() {
            return Err(FockError::Dimension { expected: rows.dim(), got: entries.nrows() });
        }
        if entries.ncols() != cols.dim() {
            return Err(FockError::Dimension { expected: cols.dim(), got: entries.ncols() });
        }
        if hermitian == Hermiticity::Hermitian {
            if rows != cols {
                return Err(FockError::Space { left: format!("{rows:?}"), right: format!("{cols:?}") });
            }
            let defect = linalg::hermiticity_defect(&entries);
            let scale = linalg::max_abs(&entries).max(1.0);
            if defect > HERMITIAN_TOL * scale {
                return Err(FockError::NotHermitian { defect });
            }
        }
        Ok(Self { rows, cols, entries, hermitian })
    }

    pub fn square(space: Space, entries: CMat, hermitian: Hermiticity) -> Result<Self, FockError> {
        Self::new(space.clone(), space, entries, hermitian)
    }

    pub fn rows(&self) -> &Space {
        &self.rows
    }

    pub fn cols(&self) -> &Space {
        &self.cols
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }

    pub fn hermitian(&self) -> Hermiticity {
        self.hermitian
    }

    pub fn adjoint(&self) -> Self {
        Self {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            entries: self.entries.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, FockError> {
        self.same_shape(other)?;
        let hermitian = match (self.hermitian, other.hermitian) {
            (Hermiticity::Hermitian, Hermiticity::Hermitian) => Hermiticity::Hermitian,
            _ => Hermiticity::Unknown,
        };
        Ok(Self { rows: self.rows.clone(), cols: self.cols.clone(), entries: &self.entries + &other.entries, hermitian })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FockError> {
        self.same_shape(other)?;
        let hermitian = match (self.hermitian, other.hermitian) {
            (Hermiticity::Hermitian, Hermiticity::Hermitian) => Hermiticity::Hermitian,
            _ => Hermiticity::Unknown,
        };
        Ok(Self { rows: self.rows.clone(), cols: self.cols.clone(), entries: &self.entries - &other.entries, hermitian })
    }

    pub fn mul(&self, other: &Self) -> Result<Self, FockError> {
        if self.cols != other.rows {
            return Err(FockError::Space { left: format!("{:?}", self.cols), right: format!("{:?}", other.rows) });
        }
        Ok(Self {
            rows: self.rows.clone(),
            cols: other.cols.clone(),
            entries: &self.entries * &other.entries,
            hermitian: Hermiticity::Unknown,
        })
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        let hermitian = if factor.im == 0.0 { self.hermitian } else { Hermiticity::Unknown };
        Self { rows: self.rows.clone(), cols: self.cols.clone(), entries: self.entries.map(|z| z * factor), hermitian }
    }

    /// Re-check hermiticity and store the verdict.
    pub fn classify(mut self) -> Self {
        let scale = linalg::max_abs(&self.entries).max(1.0);
        self.hermitian = if self.rows == self.cols && linalg::hermiticity_defect(&self.entries) <= HERMITIAN_TOL * scale {
            Hermiticity::Hermitian
        } else {
            Hermiticity::NonHermitian
        };
        self
    }

    fn same_shape(&self, other: &Self) -> Result<(), FockError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(FockError::Space {
                left: format!("{:?} x {:?}", self.rows, self.cols),
                right: format!("{:?} x {:?}", other.rows, other.cols),
            });
        }
        Ok(())
    }
}

/// `Σ_{n ≤ N} C(M+n−1, n) = C(M+N, N)`.
pub fn fock_dimension(modes: usize, max_bosons: usize) -> usize {
    let mut acc: u128 = 1;
    for k in 1..=max_bosons as u128 {
        acc = acc * (modes as u128 + k) / k;
    }
    acc as usize
}

/// One nonzero of a sparse ladder: `target ← factor · source`.
#[derive(Debug, Clone, Copy)]
struct Hop {
    source: usize,
    target: usize,
    factor: f64,
}

#[derive(Debug, Clone)]
pub struct FockBasis {
    modes: usize,
    max_bosons: usize,
    states: Vec<Vec<u16>>,
    lookup: HashMap<Vec<u16>, usize>,
    sector_offsets: Vec<usize>,
    /// Per mode, the nonzeros of the annihilator `a_j`.
    lowering: Vec<Vec<Hop>>,
}

impl FockBasis {
    pub fn new(modes: usize, max_bosons: usize) -> Result<Self, FockError> {
        if modes == 0 {
            return Err(FockError::Precondition("at least one mode is required".into()));
        }
        let dim = fock_dimension(modes, max_bosons);
        let mut states = Vec::with_capacity(dim);
        let mut sector_offsets = vec![0];
        for n in 0..=max_bosons {
            let mut current = vec![0u16; modes];
            compositions(n, 0, &mut current, &mut states);
            sector_offsets.push(states.len());
        }
        let lookup: HashMap<Vec<u16>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let mut lowering = vec![Vec::new(); modes];
        for (source, s) in states.iter().enumerate() {
            for (j, hops) in lowering.iter_mut().enumerate() {
                if s[j] > 0 {
                    let mut t = s.clone();
                    t[j] -= 1;
                    hops.push(Hop { source, target: lookup[&t], factor: (s[j] as f64).sqrt() });
                }
            }
        }
        Ok(Self { modes, max_bosons, states, lookup, sector_offsets, lowering })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn max_bosons(&self) -> usize {
        self.max_bosons
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn space(&self) -> Space {
        Space::Fock { modes: self.modes, max_bosons: self.max_bosons }
    }

    pub fn states(&self) -> &[Vec<u16>] {
        &self.states
    }

    pub fn state(&self, index: usize) -> &[u16] {
        &self.states[index]
    }

    pub fn lookup(&self, occupation: &[u16]) -> Option<usize> {
        self.lookup.get(occupation).copied()
    }

    pub fn total(&self, index: usize) -> usize {
        self.states[index].iter().map(|&n| n as usize).sum()
    }

    /// Index range of sector `n`.
    pub fn sector(&self, n: usize) -> Range<usize> {
        self.sector_offsets[n]..self.sector_offsets[n + 1]
    }

    /// Number of states in sectors `0..=n`.
    pub fn window(&self, n: usize) -> usize {
        self.sector_offsets[n.min(self.max_bosons) + 1]
    }

    /// Safe sectors for a relation that moves `depth` sectors up: `0..=N_max−depth`.
    pub fn safe_window(&self, depth: usize) -> usize {
        if depth > self.max_bosons {
            0
        } else {
            self.window(self.max_bosons - depth)
        }
    }

    pub fn vacuum(&self) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.dim()];
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    fn check_modes(&self, f: &[Complex64]) -> Result<(), FockError> {
        if f.len() != self.modes {
            return Err(FockError::Dimension { expected: self.modes, got: f.len() });
        }
        Ok(())
    }

    /// `a(f) = Σ_j conj(f_j) a_j`, antilinear in `f`.
    pub fn annihilation(&self, f: &[Complex64]) -> Result<CMat, FockError> {
        self.check_modes(f)?;
        let mut m = CMat::zeros(self.dim(), self.dim());
        for (j, hops) in self.lowering.iter().enumerate() {
            let w = f[j].conj();
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            for hop in hops {
                m[(hop.target, hop.source)] += w * hop.factor;
            }
        }
        Ok(m)
    }

    /// `a*(f)`, the exact conjugate transpose of [`Self::annihilation`].
    pub fn creation(&self, f: &[Complex64]) -> Result<CMat, FockError> {
        Ok(self.annihilation(f)?.adjoint())
    }

    pub fn apply_annihilation(&self, f: &[Complex64], psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (j, hops) in self.lowering.iter().enumerate() {
            let w = f[j].conj();
            for hop in hops {
                out[hop.target] += w * hop.factor * psi[hop.source];
            }
        }
        out
    }

    pub fn apply_creation(&self, f: &[Complex64], psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (j, hops) in self.lowering.iter().enumerate() {
            let w = f[j];
            for hop in hops {
                out[hop.source] += w * hop.factor * psi[hop.target];
            }
        }
        out
    }

    /// `Φ(f) = (a*(f) + a(f))/√2`.
    pub fn field(&self, f: &[Complex64]) -> Result<CMat, FockError> {
        let a = self.annihilation(f)?;
        Ok((a.adjoint() + a).scale(std::f64::consts::FRAC_1_SQRT_2))
    }

    /// `Π(f) = i(a*(f) − a(f))/√2`.
    pub fn momentum(&self, f: &[Complex64]) -> Result<CMat, FockError> {
        let a = self.annihilation(f)?;
        Ok((a.adjoint() - a).map(|z| z * I * std::f64::consts::FRAC_1_SQRT_2))
    }

    pub fn apply_momentum(&self, f: &[Complex64], psi: &[Complex64]) -> Vec<Complex64> {
        let up = self.apply_creation(f, psi);
        let down = self.apply_annihilation(f, psi);
        let s = I * std::f64::consts::FRAC_1_SQRT_2;
        up.iter().zip(&down).map(|(u, d)| (u - d) * s).collect()
    }

    /// `dΓ(h) = Σ_{jk} h_{jk} a_j* a_k`; block diagonal over sectors.
    pub fn second_quantize(&self, h: &CMat) -> Result<CMat, FockError> {
        if h.nrows() != self.modes || h.ncols() != self.modes {
            return Err(FockError::Dimension { expected: self.modes, got: h.nrows() });
        }
        let mut out = CMat::zeros(self.dim(), self.dim());
        let mut scratch = vec![0u16; self.modes];
        for (source, s) in self.states.iter().enumerate() {
            for k in 0..self.modes {
                if s[k] == 0 {
                    continue;
                }
                let down = (s[k] as f64).sqrt();
                scratch.copy_from_slice(s);
                scratch[k] -= 1;
                for j in 0..self.modes {
                    let w = h[(j, k)];
                    if w == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let up = (scratch[j] as f64 + 1.0).sqrt();
                    scratch[j] += 1;
                    let target = self.lookup[&scratch[..]];
                    scratch[j] -= 1;
                    out[(target, source)] += w * down * up;
                }
            }
        }
        Ok(out)
    }

    /// `dΓ(h)` for diagonal `h`, as the list of diagonal entries.
    pub fn second_quantize_diagonal(&self, energies: &[f64]) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| s.iter().zip(energies).map(|(&n, e)| n as f64 * e).sum())
            .collect()
    }

    pub fn number_operator(&self) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| Complex64::new(self.total(i) as f64, 0.0)),
        ))
    }

    /// `V(f) = e^{iΠ(f)}` from the eigendecomposition of `Π(f)`, with its truncation tolerance.
    pub fn weyl(&self, f: &[Complex64]) -> Result<WeylOperator, FockError> {
        let pi = self.momentum(f)?;
        let matrix = linalg::hermitian_fn(&pi, |lam| Complex64::from_polar(1.0, lam));
        Ok(WeylOperator { matrix, norm: linalg::norm(f), max_bosons: self.max_bosons })
    }

    /// `e^{iΠ(f)} ψ` by a Taylor series of sparse products, stopping once terms fall below `tol`.
    pub fn weyl_apply(&self, f: &[Complex64], psi: &[Complex64], tol: f64) -> Vec<Complex64> {
        let mut out = psi.to_vec();
        let mut term = psi.to_vec();
        let scale = linalg::norm(psi).max(f64::MIN_POSITIVE);
        for k in 1..400 {
            let next = self.apply_momentum(f, &term);
            let factor = I / k as f64;
            term = next.into_iter().map(|z| z * factor).collect();
            for (o, t) in out.iter_mut().zip(&term) {
                *o += t;
            }
            if linalg::norm(&term) < tol * scale {
                break;
            }
        }
        out
    }
}

fn compositions(remaining: usize, slot: usize, current: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
    let last = current.len() - 1;
    if slot == last {
        current[slot] = remaining as u16;
        out.push(current.clone());
        current[slot] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[slot] = k as u16;
        compositions(remaining - k, slot + 1, current, out);
    }
    current[slot] = 0;
}

/// A Weyl operator on a truncated space.
#[derive(Debug, Clone)]
pub struct WeylOperator {
    pub matrix: CMat,
    norm: f64,
    max_bosons: usize,
}

impl WeylOperator {
    /// Truncation tolerance for identities read off on sectors `0..=window`.
    pub fn tolerance(&self, window: usize) -> f64 {
        truncation_tolerance(self.norm, self.max_bosons, window)
    }
}

/// Norm of the part of `V(f)|s⟩` pushed above `N_max`, maximized over single-mode states
/// `s ≤ from_sector`. `V(f)` acts as a displacement along `f/‖f‖`, so one mode suffices.
pub fn truncation_tolerance(norm_f: f64, max_bosons: usize, from_sector: usize) -> f64 {
    if norm_f == 0.0 {
        return 0.0;
    }
    let big = max_bosons + 40 + (2.0 * norm_f * norm_f).ceil() as usize;
    let basis = FockBasis::new(1, big).expect("single-mode basis");
    let v = basis
        .weyl_matrix_exact(&[Complex64::new(norm_f, 0.0)])
        .expect("single-mode momentum");
    (0..=from_sector.min(max_bosons))
        .map(|s| ((max_bosons + 1)..=big).map(|n| v[(n, s)].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

impl FockBasis {
    fn weyl_matrix_exact(&self, f: &[Complex64]) -> Result<CMat, FockError> {
        let pi = self.momentum(f)?;
        Ok(linalg::hermitian_fn(&pi, |lam| Complex64::from_polar(1.0, lam)))
    }
}

/// Restrict a Fock-space matrix to the states of sectors `0..=sector`.
pub fn restrict(basis: &FockBasis, m: &CMat, sector: usize) -> CMat {
    let w = basis.window(sector);
    m.view((0, 0), (w, w)).into_owned()
}

/// Orthonormal one-particle modes, stored as columns in lattice coefficient space.
#[derive(Debug, Clone)]
pub struct ModeMap {
    grid: Grid,
    vectors: CMat,
}

/// Mode coefficients of a lattice function and the norm of what the modes miss.
#[derive(Debug, Clone)]
pub struct ModeProjection {
    pub coefficients: Vec<Complex64>,
    pub residual: f64,
}

impl ModeMap {
    pub fn from_columns(grid: Grid, vectors: CMat) -> Result<Self, FockError> {
        if vectors.nrows() != grid.len() {
            return Err(FockError::Dimension { expected: grid.len(), got: vectors.nrows() });
        }
        let gram = vectors.adjoint() * &vectors;
        let defect = linalg::max_abs(&(gram - linalg::identity(vectors.ncols())));
        if defect > 1e-12 {
            return Err(FockError::NotOrthonormal(defect));
        }
        Ok(Self { grid, vectors })
    }

    /// The `count` plane waves of smallest momentum (ties broken by FFT order).
    pub fn fourier(grid: Grid, count: usize) -> Result<Self, FockError> {
        let n = grid.len();
        if count == 0 || count > n {
            return Err(FockError::Dimension { expected: n, got: count });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| grid.momentum_sq(a).total_cmp(&grid.momentum_sq(b)).then(a.cmp(&b)));
        let norm = 1.0 / (n as f64).sqrt();
        let mut vectors = CMat::zeros(n, count);
        for (col, &k) in order.iter().take(count).enumerate() {
            let xi = grid.momentum(k);
            for site in 0..n {
                let x = grid.position(site);
                let phase: f64 = (0..grid.dim()).map(|a| xi[a] * x[a]).sum();
                vectors[(site, col)] = Complex64::from_polar(norm, phase);
            }
        }
        Self::from_columns(grid, vectors)
    }

    /// The `count` lowest eigenvectors of a hermitian one-particle matrix.
    pub fn eigenmodes(grid: Grid, h: &CMat, count: usize) -> Result<(Self, Vec<f64>), FockError> {
        let n = grid.len();
        if h.nrows() != n || count == 0 || count > n {
            return Err(FockError::Dimension { expected: n, got: h.nrows().min(count) });
        }
        let eig = linalg::hermitian_eigen(h);
        let vectors = eig.vectors.columns(0, count).into_owned();
        Ok((Self::from_columns(grid, vectors)?, eig.values[..count].to_vec()))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn count(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &CMat {
        &self.vectors
    }

    pub fn project(&self, f: &LatticeFunction) -> Result<ModeProjection, FockError> {
        if f.grid() != &self.grid {
            return Err(FockError::Dimension { expected: self.grid.len(), got: f.grid().len() });
        }
        let c = nalgebra::DVector::from_vec(f.coefficients());
        let coeffs = self.vectors.adjoint() * &c;
        let back = &self.vectors * &coeffs;
        let residual = (c - back).norm();
        Ok(ModeProjection { coefficients: coeffs.iter().cloned().collect(), residual })
    }

    pub fn lift(&self, coefficients: &[Complex64]) -> LatticeFunction {
        let c = &self.vectors * nalgebra::DVector::from_column_slice(coefficients);
        LatticeFunction::from_coefficients(self.grid, c.as_slice()).expect("lattice length")
    }

    /// `V* h V`, the compression of a lattice-coefficient operator to the modes.
    pub fn compress(&self, h: &CMat) -> CMat {
        self.vectors.adjoint() * h * &self.vectors
    }
}

/// A Fock space over explicit lattice modes: the [`LatticeFunction`] facing API.
#[derive(Debug, Clone)]
pub struct FockSpace {
    pub basis: FockBasis,
    pub modes: ModeMap,
}

impl FockSpace {
    pub fn new(modes: ModeMap, max_bosons: usize) -> Result<Self, FockError> {
        Ok(Self { basis: FockBasis::new(modes.count(), max_bosons)?, modes })
    }

    fn wrap(&self, m: CMat, hermitian: Hermiticity) -> OperatorMatrix {
        OperatorMatrix { rows: self.basis.space(), cols: self.basis.space(), entries: m, hermitian }
    }

    /// `a(f)` and the truncation residual of `f` against the modes.
    pub fn annihilate(&self, f: &LatticeFunction) -> Result<(OperatorMatrix, f64), FockError> {
        let p = self.modes.project(f)?;
        Ok((self.wrap(self.basis.annihilation(&p.coefficients)?, Hermiticity::NonHermitian), p.residual))
    }

    pub fn create(&self, f: &LatticeFunction) -> Result<(OperatorMatrix, f64), FockError> {
        let (a, r) = self.annihilate(f)?;
        Ok((a.adjoint(), r))
    }

    pub fn field(&self, f: &LatticeFunction) -> Result<(OperatorMatrix, f64), FockError> {
        let p = self.modes.project(f)?;
        Ok((self.wrap(self.basis.field(&p.coefficients)?, Hermiticity::Hermitian), p.residual))
    }

    pub fn momentum(&self, f: &LatticeFunction) -> Result<(OperatorMatrix, f64), FockError> {
        let p = self.modes.project(f)?;
        Ok((self.wrap(self.basis.momentum(&p.coefficients)?, Hermiticity::Hermitian), p.residual))
    }

    /// `dΓ(h)` for `h` given on the modes.
    pub fn second_quantize(&self, h: &OperatorMatrix) -> Result<OperatorMatrix, FockError> {
        let m = self.basis.second_quantize(h.entries())?;
        let flag = if h.hermitian() == Hermiticity::Hermitian { Hermiticity::Hermitian } else { Hermiticity::Unknown };
        Ok(self.wrap(m, flag))
    }
}

/// Weyl-conjugation residual on sectors `0..=window`.
fn windowed_norm(basis: &FockBasis, m: &CMat, window: usize) -> f64 {
    linalg::spectral_norm(&restrict(basis, m, window))
}

/// `‖V(f)(dΓ(ω)+Φ(ω^{−1/2}ρ))V(f)* − dΓ(ω) + ½‖ω^{−1}ρ‖²‖` with `f = −ω^{−3/2}ρ`, on sectors
/// `0..=window`. `ω` is given on the modes and `ρ` as mode coefficients.
pub fn gross_residual(basis: &FockBasis, omega: &CMat, rho: &[Complex64], window: usize) -> Result<f64, FockError> {
    if omega.nrows() != basis.modes() {
        return Err(FockError::Dimension { expected: basis.modes(), got: omega.nrows() });
    }
    let eig = linalg::hermitian_eigen(omega);
    let min = eig.values[0];
    if min <= 0.0 {
        return Err(FockError::Spectral { min_eigenvalue: min });
    }
    let rho_v = nalgebra::DVector::from_column_slice(rho);
    let f = -(eig.apply_fn(|w| linalg::c(w.powf(-1.5))) * &rho_v);
    let v_half = eig.apply_fn(|w| linalg::c(w.powf(-0.5))) * &rho_v;
    let inv_rho = eig.apply_fn(|w| linalg::c(1.0 / w)) * &rho_v;
    let d_omega = basis.second_quantize(omega)?;
    let h = &d_omega + basis.field(v_half.as_slice())?;
    let v = basis.weyl(f.as_slice())?.matrix;
    let shift = 0.5 * inv_rho.norm_squared();
    let residual = &v * h * v.adjoint() - d_omega + linalg::identity(basis.dim()).scale(shift);
    Ok(windowed_norm(basis, &residual, window))
}

/// The static Gross residual on sectors `0..=N_max−10`.
pub fn gross_check_static(basis: &FockBasis, omega: &CMat, rho: &[Complex64]) -> Result<f64, FockError> {
    if basis.max_bosons() < 10 {
        return Err(FockError::Precondition(format!(
            "the static check needs N_max >= 10, got {}",
            basis.max_bosons()
        )));
    }
    gross_residual(basis, omega, rho, basis.max_bosons() - 10)
}

/// Residuals of the Weyl conjugation identities on sectors `0..=window`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeylResiduals {
    /// `V(g)Φ(f)V(g)* − Φ(f) − Re⟨f,g⟩`.
    pub field: f64,
    /// `V(g)dΓ(h)V(g)* − dΓ(h) − Φ(hg) − ½⟨hg,g⟩`.
    pub second_quantized: f64,
    /// `V(f)V(g) − e^{−(i/2)Im⟨f,g⟩}V(f+g)`.
    pub composition: f64,
    pub tolerance: f64,
}

pub fn weyl_residuals(
    basis: &FockBasis,
    f: &[Complex64],
    g: &[Complex64],
    h: &CMat,
    window: usize,
) -> Result<WeylResiduals, FockError> {
    let dim = basis.dim();
    let id = linalg::identity(dim);
    let vg = basis.weyl(g)?;
    let phi_f = basis.field(f)?;
    let re_fg = linalg::inner(f, g).re;
    let field = &vg.matrix * &phi_f * vg.matrix.adjoint() - &phi_f - id.scale(re_fg);

    let dgh = basis.second_quantize(h)?;
    let hg = h * nalgebra::DVector::from_column_slice(g);
    let shift = 0.5 * linalg::inner(hg.as_slice(), g).re;
    let sq = &vg.matrix * &dgh * vg.matrix.adjoint() - &dgh - basis.field(hg.as_slice())? - id.scale(shift);

    let vf = basis.weyl(f)?;
    let sum: Vec<Complex64> = f.iter().zip(g).map(|(a, b)| a + b).collect();
    let vfg = basis.weyl(&sum)?;
    let phase = Complex64::from_polar(1.0, -0.5 * linalg::inner(f, g).im);
    let comp = &vf.matrix * &vg.matrix - vfg.matrix.map(|z| z * phase);

    Ok(WeylResiduals {
        field: windowed_norm(basis, &field, window),
        second_quantized: windowed_norm(basis, &sq, window),
        composition: windowed_norm(basis, &comp, window),
        tolerance: vg.tolerance(window).max(vf.tolerance(window)).max(vfg.tolerance(window)),
    })
}

/// Both sides of the three annihilation/creation norm estimates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AcEstimates {
    pub annihilation: (f64, f64),
    pub creation: (f64, f64),
    pub pair: (f64, f64),
    pub violated: bool,
}

/// `‖a(f)Ψ‖ ≤ ‖h^{−α}f‖‖dΓ(h)^αΨ‖`, `‖a*(f)Ψ‖ ≤ ‖h^{−α}f‖‖dΓ(h)^αΨ‖ + ‖f‖‖Ψ‖` and
/// `‖(N+1)^{−1/2}a(f)a(g)Ψ‖ ≤ ‖h^{−α/2}f‖‖h^{−α/2}g‖‖dΓ(h)^αΨ‖`.
pub fn verify_ac_norm_estimates(
    basis: &FockBasis,
    h: &CMat,
    f: &[Complex64],
    g: &[Complex64],
    alpha: f64,
    psi: &[Complex64],
) -> Result<AcEstimates, FockError> {
    if alpha < 0.5 {
        return Err(FockError::Precondition(format!("alpha must be >= 1/2, got {alpha}")));
    }
    let eig = linalg::hermitian_eigen(h);
    if eig.values[0] < 1.0 - 1e-12 {
        return Err(FockError::Precondition(format!(
            "h must satisfy h >= 1, smallest eigenvalue {}",
            eig.values[0]
        )));
    }
    let fv = nalgebra::DVector::from_column_slice(f);
    let gv = nalgebra::DVector::from_column_slice(g);
    let hf = (eig.apply_fn(|w| linalg::c(w.powf(-alpha))) * &fv).norm();
    let hf2 = (eig.apply_fn(|w| linalg::c(w.powf(-alpha / 2.0))) * &fv).norm();
    let hg2 = (eig.apply_fn(|w| linalg::c(w.powf(-alpha / 2.0))) * &gv).norm();
    let dg = basis.second_quantize(h)?;
    let dg_alpha = linalg::hermitian_fn(&dg, |w| linalg::c(w.max(0.0).powf(alpha)));
    let psi_v = nalgebra::DVector::from_column_slice(psi);
    let energy = (&dg_alpha * &psi_v).norm();

    let a_psi = basis.apply_annihilation(f, psi);
    let c_psi = basis.apply_creation(f, psi);
    let ag_psi = basis.apply_annihilation(g, psi);
    let mut pair = basis.apply_annihilation(f, &ag_psi);
    for (i, z) in pair.iter_mut().enumerate() {
        *z /= (basis.total(i) as f64 + 1.0).sqrt();
    }
    let annihilation = (linalg::norm(&a_psi), hf * energy);
    let creation = (linalg::norm(&c_psi), hf * energy + fv.norm() * psi_v.norm());
    let pair = (linalg::norm(&pair), hf2 * hg2 * energy);
    let tol = 1e-10;
    let violated = [annihilation, creation, pair].iter().any(|(l, r)| *l > r + tol * r.max(1.0));
    Ok(AcEstimates { annihilation, creation, pair, violated })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cplx(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    #[test]
    fn dimension_and_order() {
        let b = FockBasis::new(3, 2).unwrap();
        assert_eq!(b.dim(), 1 + 3 + 6);
        assert_eq!(b.dim(), fock_dimension(3, 2));
        assert_eq!(b.state(0), &[0, 0, 0]);
        for i in 0..b.dim() {
            assert_eq!(b.lookup(b.state(i)), Some(i));
        }
        assert_eq!(b.sector(2), 4..10);
    }

    #[test]
    fn single_mode_ladder() {
        let b = FockBasis::new(1, 6).unwrap();
        let a = b.annihilation(&cplx(&[1.0])).unwrap();
        for n in 1..=6 {
            assert!((a[(n - 1, n)].re - (n as f64).sqrt()).abs() < 1e-15);
        }
        let vac = nalgebra::DVector::from_vec(b.vacuum());
        assert_eq!((&a * vac).norm(), 0.0);
    }

    #[test]
    fn number_operator_from_identity() {
        let b = FockBasis::new(2, 3).unwrap();
        let n = b.second_quantize(&linalg::identity(2)).unwrap();
        assert!(linalg::max_abs(&(n - b.number_operator())) < 1e-14);
    }

    #[test]
    fn weyl_of_zero_is_identity() {
        let b = FockBasis::new(2, 4).unwrap();
        let v = b.weyl(&cplx(&[0.0, 0.0])).unwrap();
        assert!(linalg::max_abs(&(&v.matrix - linalg::identity(b.dim()))) < 1e-14);
        assert_eq!(v.tolerance(2), 0.0);
    }

    #[test]
    fn gross_zero_coupling_is_exact() {
        let b = FockBasis::new(1, 12).unwrap();
        let omega = CMat::from_element(1, 1, linalg::c(1.3));
        assert_eq!(gross_check_static(&b, &omega, &cplx(&[0.0])).unwrap(), 0.0);
    }

    #[test]
    fn tolerance_grows_with_coupling() {
        let small = truncation_tolerance(0.3, 20, 10);
        let large = truncation_tolerance(3.0, 20, 10);
        assert!(small < large);
        assert!(truncation_tolerance(0.3, 40, 10) < small);
    }
}
