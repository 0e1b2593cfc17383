//! Phase-space symbols on the lattice and their quantizations.
//!
//! A symbol is tabulated on `(z, ξ)` with `z` a lattice point and `ξ` a lattice momentum.
//! Everything runs through the amplitude `A(θ, r)`: the Fourier coefficients of the symbol in
//! `z` (frequency `θ`) and in `ξ` (lattice offset `r`). In these variables the quantization
//! `Op_t` evaluates the symbol at the Fourier-interpolated midpoint `y + t r`, so changing
//! quantization is a diagonal multiplier and all composition rules are exact finite sums.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{dft_matrix, fft_in_place, Grid};
use crate::linalg::{self, CMat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsidoError {
    #[error("quantization parameter t = {0} outside [0, 1]")]
    Domain(f64),
    #[error("symbols live on different grids")]
    GridMismatch,
    #[error("symbol table has {got} entries, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("symbol is not elliptic: min |a|/M = {min_ratio:e}")]
    NotElliptic { min_ratio: f64 },
    #[error("orders must strictly decrease, got {previous} then {next}")]
    Orders { previous: f64, next: f64 },
    #[error("Weyl quantization is not hermitian (defect {0:e}); the symbol must be real")]
    NotReal(f64),
    #[error("{terms} terms but {cutoffs} cutoff scales")]
    Schedule { terms: usize, cutoffs: usize },
}

/// Weight controlling the growth of a symbol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum OrderFunction {
    /// `⟨ξ⟩^m`.
    Japanese(f64),
    /// `⟨ξ⟩² + (|ξ|² + m²)^{1/2}`, kinetic plus field energy.
    KineticField { mass: f64 },
    /// Explicit positive table over phase space.
    Tabulated(Vec<f64>),
}

impl OrderFunction {
    fn value(&self, grid: &Grid, z: usize, xi: usize) -> f64 {
        let k2 = grid.momentum_sq(xi);
        match self {
            OrderFunction::Japanese(m) => (1.0 + k2).powf(0.5 * m),
            OrderFunction::KineticField { mass } => 1.0 + k2 + (k2 + mass * mass).sqrt(),
            OrderFunction::Tabulated(t) => t[z * grid.len() + xi],
        }
    }

    /// The order `m` of `⟨ξ⟩^m`-type weights, if there is one.
    pub fn order(&self) -> Option<f64> {
        match self {
            OrderFunction::Japanese(m) => Some(*m),
            OrderFunction::KineticField { .. } => Some(2.0),
            OrderFunction::Tabulated(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    grid: Grid,
    /// `values[z * N + ξ]`.
    values: Vec<Complex64>,
    order: OrderFunction,
}

impl Symbol {
    pub fn new(grid: Grid, values: Vec<Complex64>, order: OrderFunction) -> Result<Self, PsidoError> {
        let n = grid.len();
        if values.len() != n * n {
            return Err(PsidoError::Length { expected: n * n, got: values.len() });
        }
        if let OrderFunction::Tabulated(t) = &order {
            if t.len() != n * n {
                return Err(PsidoError::Length { expected: n * n, got: t.len() });
            }
        }
        Ok(Self { grid, values, order })
    }

    /// Tabulate `f(z, ξ)` over phase space.
    pub fn from_fn(grid: Grid, order: OrderFunction, f: impl Fn([f64; 3], [f64; 3]) -> Complex64) -> Self {
        let n = grid.len();
        let mut values = Vec::with_capacity(n * n);
        for z in 0..n {
            let x = grid.position(z);
            for xi in 0..n {
                values.push(f(x, grid.momentum(xi)));
            }
        }
        Self { grid, values, order }
    }

    pub fn constant(grid: Grid, value: Complex64) -> Self {
        Self { grid, values: vec![value; grid.len() * grid.len()], order: OrderFunction::Japanese(0.0) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn order(&self) -> &OrderFunction {
        &self.order
    }

    pub fn with_order(mut self, order: OrderFunction) -> Self {
        self.order = order;
        self
    }

    pub fn at(&self, z: usize, xi: usize) -> Complex64 {
        self.values[z * self.grid.len() + xi]
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), order: self.order.clone() }
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn add(&self, other: &Self) -> Result<Self, PsidoError> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PsidoError> {
        self.zip(other, |a, b| a - b)
    }

    /// Pointwise product (not the Moyal product).
    pub fn pointwise(&self, other: &Self) -> Result<Self, PsidoError> {
        self.zip(other, |a, b| a * b)
    }

    fn zip(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self, PsidoError> {
        if self.grid != other.grid {
            return Err(PsidoError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            order: self.order.clone(),
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `sup |a|/M`.
    pub fn weighted_sup(&self, weight: &OrderFunction) -> f64 {
        let n = self.grid.len();
        let mut best: f64 = 0.0;
        for z in 0..n {
            for xi in 0..n {
                best = best.max(self.at(z, xi).norm() / weight.value(&self.grid, z, xi));
            }
        }
        best
    }

    /// `min |a|/M`; positive exactly when the symbol is elliptic.
    pub fn ellipticity(&self) -> f64 {
        let n = self.grid.len();
        let mut worst = f64::INFINITY;
        for z in 0..n {
            for xi in 0..n {
                worst = worst.min(self.at(z, xi).norm() / self.order.value(&self.grid, z, xi));
            }
        }
        worst
    }

    pub fn is_elliptic(&self) -> bool {
        self.ellipticity() > 1e-12
    }

    /// `sup |∂_z^α ∂_ξ^β a| / M` for every multi-index with `|α|+|β| ≤ max_order`, by spectral
    /// differentiation. Returned as `(α, β, value)` with one entry per axis in each multi-index.
    pub fn seminorms(&self, max_order: usize) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
        let d = self.grid.dim();
        let amp = amplitude(self);
        let mut out = Vec::new();
        for (alpha, beta) in multi_indices(2 * d, max_order).into_iter().map(|m| {
            let (a, b) = m.split_at(d);
            (a.to_vec(), b.to_vec())
        }) {
            let deriv = derivative(&self.grid, &amp, &alpha, &beta);
            let s = Symbol { grid: self.grid, values: from_amplitude(&self.grid, &deriv), order: self.order.clone() };
            out.push((alpha, beta, s.weighted_sup(&self.order)));
        }
        out
    }
}

fn multi_indices(slots: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..slots {
        let mut next = Vec::new();
        for m in &out {
            let used: usize = m.iter().sum();
            for k in 0..=(max_order - used) {
                let mut v = m.clone();
                v.push(k);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Representative offset of slot `j` on one axis, in `{−L/2, …, L/2−1}`.
fn signed(grid: &Grid, j: usize) -> i64 {
    grid.wave_number(j)
}

fn derivative(grid: &Grid, amp: &[Complex64], alpha: &[usize], beta: &[usize]) -> Vec<Complex64> {
    let n = grid.len();
    let step = grid.momentum_step();
    let h = grid.spacing();
    let l = grid.points();
    let mut out = amp.to_vec();
    for r in 0..n {
        let ridx = grid.split(r);
        for th in 0..n {
            let tidx = grid.split(th);
            let mut factor = Complex64::new(1.0, 0.0);
            for a in 0..grid.dim() {
                // Nyquist slots have no consistent sign; their odd derivatives vanish.
                let theta = if tidx[a] == l / 2 { 0.0 } else { signed(grid, tidx[a]) as f64 * step };
                let offset = if ridx[a] == l / 2 { 0.0 } else { signed(grid, ridx[a]) as f64 * h };
                factor *= (linalg::I * theta).powi(alpha[a] as i32) * (linalg::I * offset).powi(beta[a] as i32);
            }
            out[r * n + th] *= factor;
        }
    }
    out
}

/// `A[r * N + θ]` with `a(z, ξ) = Σ_{θ,r} A(θ, r) e^{iθz} e^{−i r h ξ}`.
fn amplitude(a: &Symbol) -> Vec<Complex64> {
    let g = a.grid;
    let n = g.len();
    let scale = 1.0 / (n as f64).sqrt();
    // ã(z, r) = (1/N) Σ_ξ e^{i r h ξ} a(z, ξ)
    let mut tilde = a.values.clone();
    for row in tilde.chunks_mut(n) {
        fft_in_place(&g, row, true);
        row.iter_mut().for_each(|v| *v *= scale);
    }
    // A(θ, r) = (1/N) Σ_z e^{−iθz} ã(z, r), stored r-major.
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for r in 0..n {
        for z in 0..n {
            line[z] = tilde[z * n + r];
        }
        fft_in_place(&g, &mut line, false);
        for th in 0..n {
            out[r * n + th] = line[th] * scale;
        }
    }
    out
}

fn from_amplitude(g: &Grid, amp: &[Complex64]) -> Vec<Complex64> {
    let n = g.len();
    let scale = (n as f64).sqrt();
    let mut tilde = vec![Complex64::new(0.0, 0.0); n * n];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for r in 0..n {
        line.copy_from_slice(&amp[r * n..(r + 1) * n]);
        fft_in_place(g, &mut line, true);
        for z in 0..n {
            tilde[z * n + r] = line[z] * scale;
        }
    }
    for row in tilde.chunks_mut(n) {
        fft_in_place(g, row, false);
        row.iter_mut().for_each(|v| *v *= scale);
    }
    tilde
}

/// Midpoint phase `φ_t(θ, r)`: the average of `e^{iθ' t r' h}` over the representatives of
/// `θ` and `r`, which differ only on Nyquist slots.
fn midpoint_phase(g: &Grid, t: f64, theta: usize, r: usize) -> Complex64 {
    let l = g.points();
    let lf = l as f64;
    let tidx = g.split(theta);
    let ridx = g.split(r);
    let mut out = Complex64::new(1.0, 0.0);
    for a in 0..g.dim() {
        let ks: &[f64] = if tidx[a] == l / 2 { &[-lf / 2.0, lf / 2.0] } else { &[0.0] };
        let rs: &[f64] = if ridx[a] == l / 2 { &[-lf / 2.0, lf / 2.0] } else { &[0.0] };
        let k0 = signed(g, tidx[a]) as f64;
        let r0 = signed(g, ridx[a]) as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut count = 0.0;
        for &kk in ks {
            let k = if tidx[a] == l / 2 { kk } else { k0 };
            for &rr in rs {
                let rv = if ridx[a] == l / 2 { rr } else { r0 };
                acc += Complex64::from_polar(1.0, 2.0 * PI * k * rv * t / lf);
                count += 1.0;
            }
        }
        out *= acc / count;
    }
    out
}

fn check_t(t: f64) -> Result<(), PsidoError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(PsidoError::Domain(t));
    }
    Ok(())
}

/// `Op_t(a)` as an `N × N` matrix acting on lattice coefficients.
pub fn quantize(a: &Symbol, t: f64) -> Result<CMat, PsidoError> {
    check_t(t)?;
    let g = a.grid;
    let n = g.len();
    let amp = amplitude(a);
    let scale = (n as f64).sqrt();
    let mut out = CMat::zeros(n, n);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for r in 0..n {
        for th in 0..n {
            line[th] = amp[r * n + th] * midpoint_phase(&g, t, th, r);
        }
        fft_in_place(&g, &mut line, true);
        let rvec = g.split(r);
        let shift = [rvec[0] as i64, rvec[1] as i64, rvec[2] as i64];
        for y in 0..n {
            out[(g.shift(y, shift), y)] = line[y] * scale;
        }
    }
    Ok(out)
}

/// Lattice kernel `K(x, y)`; the operator matrix is `K · (ℓ/L)^d`.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub grid: Grid,
    pub entries: CMat,
}

impl KernelMatrix {
    pub fn from_operator(grid: Grid, op: &CMat) -> Self {
        Self { grid, entries: op.map(|z| z / grid.cell_volume()) }
    }

    pub fn of_symbol(a: &Symbol, t: f64) -> Result<Self, PsidoError> {
        Ok(Self::from_operator(a.grid, &quantize(a, t)?))
    }

    pub fn operator(&self) -> CMat {
        self.entries.map(|z| z * self.grid.cell_volume())
    }
}

/// Symbol `b` with `Op_s(b) = Op_t(a)`. Components whose target phase vanishes are dropped.
pub fn change_quantization(a: &Symbol, from: f64, to: f64) -> Result<Symbol, PsidoError> {
    check_t(from)?;
    check_t(to)?;
    if from == to {
        return Ok(a.clone());
    }
    let g = a.grid;
    let n = g.len();
    let mut amp = amplitude(a);
    for r in 0..n {
        for th in 0..n {
            let target = midpoint_phase(&g, to, th, r);
            let v = &mut amp[r * n + th];
            *v = if target.norm() < 1e-14 { Complex64::new(0.0, 0.0) } else { *v * midpoint_phase(&g, from, th, r) / target };
        }
    }
    Ok(Symbol { grid: g, values: from_amplitude(&g, &amp), order: a.order.clone() })
}

/// Standard-quantization composition `c(x,ξ) = (1/N) Σ_{y,η} e^{−i(x−y)(ξ−η)} a(x,η) b(y,ξ)`.
fn moyal_standard(a: &Symbol, b: &Symbol) -> Symbol {
    let g = a.grid;
    let n = g.len();
    let scale = 1.0 / (n as f64).sqrt();
    // B̂(θ, ξ) = (1/N) Σ_y e^{iyθ} b(y, ξ), stored ξ-major.
    let mut bhat = vec![Complex64::new(0.0, 0.0); n * n];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for xi in 0..n {
        for (y, slot) in line.iter_mut().enumerate() {
            *slot = b.values[y * n + xi];
        }
        fft_in_place(&g, &mut line, true);
        for th in 0..n {
            bhat[xi * n + th] = line[th] * scale;
        }
    }
    let l = g.points() as i64;
    let mut values = vec![Complex64::new(0.0, 0.0); n * n];
    for x in 0..n {
        let xidx = g.split(x);
        for xi in 0..n {
            let kxi = g.split(xi);
            let mut acc = Complex64::new(0.0, 0.0);
            for eta in 0..n {
                let keta = g.split(eta);
                let mut diff = [0usize; 3];
                let mut phase = 0i64;
                for ax in 0..g.dim() {
                    let dk = (kxi[ax] as i64 - keta[ax] as i64).rem_euclid(l);
                    diff[ax] = dk as usize;
                    phase += dk * xidx[ax] as i64;
                }
                let th = g.join(diff);
                let e = Complex64::from_polar(1.0, -2.0 * PI * (phase.rem_euclid(l)) as f64 / l as f64);
                acc += a.values[x * n + eta] * e * bhat[xi * n + th];
            }
            values[x * n + xi] = acc;
        }
    }
    Symbol { grid: g, values, order: product_order(&a.order, &b.order) }
}

fn product_order(a: &OrderFunction, b: &OrderFunction) -> OrderFunction {
    match (a, b) {
        (OrderFunction::Japanese(m1), OrderFunction::Japanese(m2)) => OrderFunction::Japanese(m1 + m2),
        _ => OrderFunction::Japanese(a.order().unwrap_or(0.0) + b.order().unwrap_or(0.0)),
    }
}

/// `a #_t b`, with `Op_t(a #_t b) = Op_t(a) Op_t(b)`.
pub fn moyal(a: &Symbol, b: &Symbol, t: f64) -> Result<Symbol, PsidoError> {
    if a.grid != b.grid {
        return Err(PsidoError::GridMismatch);
    }
    check_t(t)?;
    let a1 = change_quantization(a, t, 1.0)?;
    let b1 = change_quantization(b, t, 1.0)?;
    change_quantization(&moyal_standard(&a1, &b1), 1.0, t)
}

/// `a*` with `Op_t(a*) = Op_t(a)*`.
pub fn adjoint_symbol(a: &Symbol, t: f64) -> Result<Symbol, PsidoError> {
    check_t(t)?;
    change_quantization(&a.conj(), 1.0 - t, t)
}

/// Poisson bracket `{a, b} = ∇_x a · ∇_ξ b − ∇_ξ a · ∇_x b` by spectral differentiation.
/// The `ξ`-derivative uses the lattice-offset representation and suits band-limited symbols.
pub fn poisson_bracket(a: &Symbol, b: &Symbol) -> Result<Symbol, PsidoError> {
    if a.grid != b.grid {
        return Err(PsidoError::GridMismatch);
    }
    let g = a.grid;
    let d = g.dim();
    let da = amplitude(a);
    let db = amplitude(b);
    let mut out = vec![Complex64::new(0.0, 0.0); g.len() * g.len()];
    for ax in 0..d {
        let mut ex = vec![0; d];
        ex[ax] = 1;
        let zero = vec![0; d];
        let a_x = from_amplitude(&g, &derivative(&g, &da, &ex, &zero));
        let a_xi = from_amplitude(&g, &derivative(&g, &da, &zero, &ex));
        let b_x = from_amplitude(&g, &derivative(&g, &db, &ex, &zero));
        let b_xi = from_amplitude(&g, &derivative(&g, &db, &zero, &ex));
        for i in 0..out.len() {
            // e^{−i r h ξ} carries the sign of the ξ-derivative.
            out[i] += a_xi[i] * b_x[i] - a_x[i] * b_xi[i];
        }
    }
    Ok(Symbol { grid: g, values: out, order: product_order(&a.order, &b.order) })
}

/// Result of a parametrix iteration.
#[derive(Debug, Clone)]
pub struct Parametrix {
    pub symbol: Symbol,
    /// `‖Op_t(a # b_k − 1)‖`.
    pub residual: f64,
    /// `‖Op_t(b_k) − Op_t(a)^{−1}‖`, when the quantized operator is invertible.
    pub inverse_error: Option<f64>,
}

/// `b_k = a^{−1} # (1 + r + r#r + … + r^{#k})` with `r = 1 − a # a^{−1}`.
pub fn parametrix(a: &Symbol, t: f64, iterations: usize) -> Result<Parametrix, PsidoError> {
    check_t(t)?;
    let min_ratio = a.ellipticity();
    if !(min_ratio > 1e-12) {
        return Err(PsidoError::NotElliptic { min_ratio });
    }
    let g = a.grid;
    let one = Symbol::constant(g, Complex64::new(1.0, 0.0));
    let inv = a.map(|v| 1.0 / v).with_order(match a.order.order() {
        Some(m) => OrderFunction::Japanese(-m),
        None => OrderFunction::Japanese(0.0),
    });
    let r = one.sub(&moyal(a, &inv, t)?)?;
    let mut series = one.clone();
    let mut power = one.clone();
    for _ in 0..iterations {
        power = moyal(&power, &r, t)?;
        series = series.add(&power)?;
    }
    let b = moyal(&inv, &series, t)?;
    let residual = linalg::spectral_norm(&quantize(&moyal(a, &b, t)?.sub(&one)?, t)?);
    let qa = quantize(a, t)?;
    let qb = quantize(&b, t)?;
    let inverse_error = qa.try_inverse().map(|ai| linalg::spectral_norm(&(qb - ai)));
    Ok(Parametrix { symbol: b, residual, inverse_error })
}

/// Cosine-ramp bump: 1 for `|s| ≤ 1`, 0 for `|s| ≥ 2`.
pub fn bump(s: f64) -> f64 {
    let s = s.abs();
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * (s - 1.0)).cos())
    }
}

/// `Σ_j (1 − χ(ε_j ξ)) a_j` for terms of strictly decreasing order.
pub fn asymptotic_resum(grid: Grid, terms: &[(Symbol, f64)], cutoffs: &[f64]) -> Result<Symbol, PsidoError> {
    if terms.len() != cutoffs.len() {
        return Err(PsidoError::Schedule { terms: terms.len(), cutoffs: cutoffs.len() });
    }
    for w in terms.windows(2) {
        if !(w[1].1 < w[0].1) {
            return Err(PsidoError::Orders { previous: w[0].1, next: w[1].1 });
        }
    }
    let n = grid.len();
    let order = terms.first().map(|t| OrderFunction::Japanese(t.1)).unwrap_or(OrderFunction::Japanese(0.0));
    let mut values = vec![Complex64::new(0.0, 0.0); n * n];
    for ((sym, _), &eps) in terms.iter().zip(cutoffs) {
        if sym.grid != grid {
            return Err(PsidoError::GridMismatch);
        }
        for z in 0..n {
            for xi in 0..n {
                let weight = 1.0 - bump(eps * grid.momentum_sq(xi).sqrt());
                values[z * n + xi] += sym.at(z, xi) * weight;
            }
        }
    }
    Ok(Symbol { grid, values, order })
}

/// Growth exponent of `sup_{z} |a(z, ξ)|` over dyadic momentum shells `|ξ| ≥ min_radius`.
pub fn shell_order(a: &Symbol, min_radius: f64) -> Option<linalg::LinearFit> {
    let g = a.grid;
    let n = g.len();
    let top = g.nyquist();
    let mut radii = Vec::new();
    let mut sups = Vec::new();
    let mut lo = min_radius.max(g.momentum_step());
    while lo * 2.0 <= top * (1.0 + 1e-12) {
        let hi = lo * 2.0;
        let mut best: f64 = 0.0;
        for xi in 0..n {
            let k = g.momentum_sq(xi).sqrt();
            if k >= lo && k < hi {
                for z in 0..n {
                    best = best.max(a.at(z, xi).norm());
                }
            }
        }
        if best > 0.0 {
            radii.push((1.0 + lo * hi).sqrt());
            sups.push(best);
        }
        lo = hi;
    }
    if radii.len() < 2 {
        return None;
    }
    Some(linalg::loglog_fit(&radii, &sups))
}

/// Norms of `f(a^w) − f(a)^w` from `H^s` to `H^{s−(mp−1)}`.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionalCalculusReport {
    pub points: usize,
    /// `(s, norm)` pairs.
    pub norms: Vec<(f64, f64)>,
}

pub fn functional_calculus_check(
    a: &Symbol,
    f: impl Fn(f64) -> f64,
    power: f64,
) -> Result<FunctionalCalculusReport, PsidoError> {
    let g = a.grid;
    let w = quantize(a, 0.5)?;
    let defect = linalg::hermiticity_defect(&w);
    if defect > 1e-10 * linalg::max_abs(&w).max(1.0) {
        return Err(PsidoError::NotReal(defect));
    }
    let lhs = linalg::hermitian_fn(&w, |v| linalg::c(f(v)));
    let fa = a.map(|v| linalg::c(f(v.re)));
    let diff = lhs - quantize(&fa, 0.5)?;
    let m = a.order.order().unwrap_or(0.0);
    let shift = m * power - 1.0;
    let dft = dft_matrix(&g);
    let norms = [-1.0, 0.0, 1.0]
        .iter()
        .map(|&s| {
            let left = japanese_diag(&g, s - shift);
            let right = japanese_diag(&g, -s);
            let op = &dft.adjoint() * left * &dft * &diff * dft.adjoint() * right * &dft;
            (s, linalg::spectral_norm(&op))
        })
        .collect();
    Ok(FunctionalCalculusReport { points: g.points(), norms })
}

fn japanese_diag(g: &Grid, s: f64) -> CMat {
    let n = g.len();
    CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        (0..n).map(|k| linalg::c((1.0 + g.momentum_sq(k)).powf(0.5 * s))),
    ))
}

/// `max(sup_x Σ_y |K|, sup_y Σ_x |K|)` with the lattice weight.
pub fn schur_bound(k: &KernelMatrix) -> f64 {
    let w = k.grid.cell_volume();
    let n = k.entries.nrows();
    let rows = (0..n).map(|i| k.entries.row(i).iter().map(|z| z.norm()).sum::<f64>() * w).fold(0.0, f64::max);
    let cols = (0..k.entries.ncols())
        .map(|j| k.entries.column(j).iter().map(|z| z.norm()).sum::<f64>() * w)
        .fold(0.0, f64::max);
    rows.max(cols)
}

/// `max(sup_i Σ_j ‖T_i* T_j‖^{1/2}, sup_i Σ_j ‖T_i T_j*‖^{1/2})`.
pub fn cotlar_stein_bound(blocks: &[CMat]) -> f64 {
    let mut a: f64 = 0.0;
    let mut b: f64 = 0.0;
    for ti in blocks {
        let sa: f64 = blocks.iter().map(|tj| linalg::spectral_norm(&(ti.adjoint() * tj)).sqrt()).sum();
        let sb: f64 = blocks.iter().map(|tj| linalg::spectral_norm(&(ti * tj.adjoint())).sqrt()).sum();
        a = a.max(sa);
        b = b.max(sb);
    }
    a.max(b)
}

/// Random symbol whose amplitude lives on `|θ|, |r| < L/4` per axis.
pub fn random_band_limited(grid: Grid, seed: u64, real: bool) -> Symbol {
    use rand::RngExt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.len();
    let l = grid.points() as i64;
    let inner = |j: usize| {
        let idx = grid.split(j);
        (0..grid.dim()).all(|a| grid.wave_number(idx[a]).abs() < l / 4)
    };
    let mut amp = vec![Complex64::new(0.0, 0.0); n * n];
    for r in 0..n {
        if !inner(r) {
            continue;
        }
        for th in 0..n {
            if inner(th) {
                amp[r * n + th] =
                    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) / (n as f64).sqrt();
            }
        }
    }
    let s = Symbol { grid, values: from_amplitude(&grid, &amp), order: OrderFunction::Japanese(0.0) };
    if real {
        s.map(|v| Complex64::new(v.re, 0.0))
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(l: usize) -> Grid {
        Grid::new(1, l, 2.0 * PI).unwrap()
    }

    #[test]
    fn amplitude_round_trip() {
        let g = Grid::new(2, 4, 3.0).unwrap();
        let a = random_band_limited(g, 3, false);
        let back = from_amplitude(&g, &amplitude(&a));
        for (x, y) in back.iter().zip(a.values()) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn one_quantizes_to_identity() {
        let g = grid(16);
        let one = Symbol::constant(g, Complex64::new(1.0, 0.0));
        for t in [0.0, 0.3, 0.5, 1.0] {
            let q = quantize(&one, t).unwrap();
            assert!(linalg::max_abs(&(q - linalg::identity(16))) < 1e-13);
        }
    }

    #[test]
    fn rejects_t_outside_unit_interval() {
        let g = grid(8);
        let one = Symbol::constant(g, Complex64::new(1.0, 0.0));
        assert_eq!(quantize(&one, 1.5), Err(PsidoError::Domain(1.5)));
    }

    #[test]
    fn momentum_symbol_acts_on_plane_waves() {
        let g = grid(16);
        let a = Symbol::from_fn(g, OrderFunction::Japanese(1.0), |_, k| linalg::c(k[0]));
        let q = quantize(&a, 0.5).unwrap();
        for slot in [1usize, 3, 13] {
            let k = g.momentum(slot)[0];
            let wave = nalgebra::DVector::from_iterator(16, (0..16).map(|s| Complex64::from_polar(1.0, k * g.position(s)[0])));
            assert!((&q * &wave - wave.map(|z| z * k)).norm() < 1e-12);
        }
    }

    #[test]
    fn bump_profile() {
        assert_eq!(bump(0.5), 1.0);
        assert_eq!(bump(-2.5), 0.0);
        assert!((bump(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cotlar_stein_of_disjoint_unitaries() {
        let mut blocks = Vec::new();
        for i in 0..3 {
            let mut m = CMat::zeros(6, 6);
            m[(2 * i, 2 * i + 1)] = linalg::c(1.0);
            m[(2 * i + 1, 2 * i)] = linalg::I;
            blocks.push(m);
        }
        assert!((cotlar_stein_bound(&blocks) - 1.0).abs() < 1e-12);
    }
}
