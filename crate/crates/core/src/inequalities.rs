//! Rearrangement inequalities and the weighted singular-integral estimates used for the IBC
//! operators, plus the diagonal-divergence demonstration.

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{Grid, LatticeFunction, Profile};
use crate::linalg::{linear_fit, loglog_fit, LinearFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InequalityError {
    #[error("negative value {value} at cell {cell}")]
    Negative { cell: usize, value: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("profile must have dimension 1..=3, strictly increasing radii and matching values")]
    Profile,
}

fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => PI,
        _ => 4.0 * PI / 3.0,
    }
}

/// Nonnegative radial function stored shell by shell: `values[k]` on `radii[k−1] < |x| ≤ radii[k]`
/// (with `radii[−1] = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub dim: usize,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialProfile {
    pub fn new(dim: usize, radii: Vec<f64>, values: Vec<f64>) -> Result<Self, InequalityError> {
        if radii.len() != values.len() || radii.is_empty() || !(1..=3).contains(&dim) {
            return Err(InequalityError::Profile);
        }
        if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(InequalityError::Profile);
        }
        if let Some(cell) = values.iter().position(|&v| v < 0.0 || v.is_nan()) {
            return Err(InequalityError::Negative { cell, value: values[cell] });
        }
        Ok(Self { dim, radii, values })
    }

    /// Samples `f(r)` at shell midpoints of the given outer radii.
    pub fn sample(dim: usize, radii: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self, InequalityError> {
        let values = radii
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let inner = if k == 0 { 0.0 } else { radii[k - 1] };
                f(0.5 * (inner + r))
            })
            .collect();
        Self::new(dim, radii, values)
    }

    pub fn inner_radius(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.radii[k - 1]
        }
    }

    pub fn shell_volume(&self, k: usize) -> f64 {
        let d = self.dim as i32;
        unit_ball_volume(self.dim) * (self.radii[k].powi(d) - self.inner_radius(k).powi(d))
    }

    /// Value at radius `r` (0 beyond the last shell).
    pub fn at(&self, r: f64) -> f64 {
        let k = self.radii.partition_point(|&x| x < r);
        self.values.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_non_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Sort `(value, volume)` cells descending and stack them into balls.
fn rearrange_cells(dim: usize, mut cells: Vec<(f64, f64)>) -> RadialProfile {
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let ball = unit_ball_volume(dim);
    let mut volume = 0.0;
    let mut radii = Vec::with_capacity(cells.len());
    let mut values = Vec::with_capacity(cells.len());
    for (v, vol) in cells {
        volume += vol;
        radii.push((volume / ball).powf(1.0 / dim as f64));
        values.push(v);
    }
    RadialProfile { dim, radii, values }
}

/// Symmetric decreasing rearrangement of a nonnegative lattice function (real parts).
pub fn rearrange(f: &LatticeFunction) -> Result<RadialProfile, InequalityError> {
    let g = f.grid();
    let cells = real_cells(f)?.into_iter().map(|v| (v, g.cell_volume())).collect();
    Ok(rearrange_cells(g.dim(), cells))
}

fn real_cells(f: &LatticeFunction) -> Result<Vec<f64>, InequalityError> {
    f.values()
        .iter()
        .enumerate()
        .map(|(cell, z)| if z.re < 0.0 { Err(InequalityError::Negative { cell, value: z.re }) } else { Ok(z.re) })
        .collect()
}

pub fn rearrange_profile(f: &RadialProfile) -> RadialProfile {
    let cells = (0..f.values.len()).map(|k| (f.values[k], f.shell_volume(k))).collect();
    let mut out = rearrange_cells(f.dim, cells);
    // Stacking the same volumes reproduces the original radii up to rounding; keep them exact.
    if out.radii.len() == f.radii.len() {
        for (r, &orig) in out.radii.iter_mut().zip(&f.radii) {
            if (*r - orig).abs() <= 1e-12 * orig {
                *r = orig;
            }
        }
    }
    out
}

/// Worst deviation of a rearranged profile from a closed form, relative to the variation
/// of the closed form across each shell.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClosedFormComparison {
    pub shells: usize,
    /// Largest `|f*(shell) − F(r)|` over the shell's radial interval, minimized over `r`.
    pub max_error: f64,
    /// `max_error / shell variation` at the worst shell.
    pub worst_ratio: f64,
}

/// Compare positive shells of `rearranged` with `closed(r)`; the admissible error per shell is
/// the variation of `closed` across the shell plus the sampling error of the input.
pub fn compare_closed_form(
    rearranged: &RadialProfile,
    closed: impl Fn(f64) -> f64,
    max_radius: f64,
) -> ClosedFormComparison {
    let mut worst_ratio: f64 = 0.0;
    let mut max_error: f64 = 0.0;
    let mut shells = 0;
    for k in 0..rearranged.values.len() {
        let (lo, hi) = (rearranged.inner_radius(k), rearranged.radii[k]);
        if rearranged.values[k] <= 0.0 || hi > max_radius {
            continue;
        }
        shells += 1;
        let (top, bottom) = (closed(lo), closed(hi));
        let v = rearranged.values[k];
        let err = if v > top {
            v - top
        } else if v < bottom {
            bottom - v
        } else {
            0.0
        };
        let variation = (top - bottom).abs().max(f64::MIN_POSITIVE);
        max_error = max_error.max(err);
        worst_ratio = worst_ratio.max(err / variation);
    }
    ClosedFormComparison { shells, max_error, worst_ratio }
}

/// `(∫fg, ∫f*g*)` for nonnegative lattice functions on the same grid.
pub fn hardy_littlewood_check(f: &LatticeFunction, g: &LatticeFunction) -> Result<(f64, f64), InequalityError> {
    if f.grid() != g.grid() {
        return Err(InequalityError::Precondition("functions live on different grids".into()));
    }
    let mut a = real_cells(f)?;
    let mut b = real_cells(g)?;
    let vol = f.grid().cell_volume();
    let lhs = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() * vol;
    a.sort_by(|x, y| y.total_cmp(x));
    b.sort_by(|x, y| y.total_cmp(x));
    let rhs = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() * vol;
    Ok((lhs, rhs))
}

/// Random nonnegative pairs on a `d = 1` grid; counts `lhs > rhs + 1e−12`.
pub fn hardy_littlewood_campaign(points: usize, pairs: usize, seed: u64) -> Result<usize, InequalityError> {
    let grid = Grid::new(1, points, points as f64).map_err(|e| InequalityError::Precondition(e.to_string()))?;
    let violations = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                // Mix of dense noise and sparse spikes so ties and zeros occur.
                (0..points).map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>().powi(3) }).collect()
            };
            let f = LatticeFunction::from_real(grid, &draw(&mut rng)).expect("grid length");
            let g = LatticeFunction::from_real(grid, &draw(&mut rng)).expect("grid length");
            let (lhs, rhs) = hardy_littlewood_check(&f, &g).expect("nonnegative draws");
            usize::from(lhs > rhs + 1e-12)
        })
        .sum();
    Ok(violations)
}

fn japanese3(x: &[f64; 3]) -> f64 {
    (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Peetre's inequality `⟨x⟩^t ≤ 2^{|t|}⟨y⟩^t⟨x−y⟩^{|t|}` on random samples in `d = 3`,
/// `t ∈ [−4, 4]`; returns the violation count.
pub fn peetre_check(samples: usize, seed: u64) -> usize {
    const CHUNK: usize = 4096;
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let n = CHUNK.min(samples - c * CHUNK);
            let mut bad = 0;
            for _ in 0..n {
                // Log-uniform scales reach both tiny and huge vectors.
                let scale_x = 10f64.powf(rng.random::<f64>() * 8.0 - 4.0);
                let scale_y = 10f64.powf(rng.random::<f64>() * 8.0 - 4.0);
                let x: [f64; 3] = std::array::from_fn(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale_x);
                let y: [f64; 3] = std::array::from_fn(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale_y);
                let t = rng.random::<f64>() * 8.0 - 4.0;
                if !peetre_holds(&x, &y, t) {
                    bad += 1;
                }
            }
            bad
        })
        .sum()
}

/// One instance of Peetre's inequality, compared in logarithms with a relative slack of 1e−12.
pub fn peetre_holds(x: &[f64; 3], y: &[f64; 3], t: f64) -> bool {
    let diff = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
    let lhs = t * japanese3(x).ln();
    let rhs = t.abs() * 2f64.ln() + t * japanese3(y).ln() + t.abs() * japanese3(&diff).ln();
    lhs <= rhs + 1e-12 * (1.0 + lhs.abs())
}

/// Parameters of the weighted singular integral
/// `∫ |ξ|^{−ν}|Ξ−ξ|^{−σ} w_Λ(ξ) / (|Ξ−ξ|^γ + |ξ| + Ω)^α dξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralParams {
    pub nu: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub dim: usize,
    pub lambda: f64,
    pub omega: f64,
    /// `|Ξ|`; only the length matters.
    pub xi: f64,
    pub epsilon: f64,
}

/// Ultraviolet weight in the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Suppression {
    /// `1 − χ_Λ`, the indicator of `|ξ| > Λ`.
    Sharp,
    /// `ζ_Λ = 1 − ρ̂(ξ/Λ)`.
    Smooth(Profile),
}

impl Suppression {
    fn weight(&self, r: f64, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 1.0;
        }
        match self {
            Suppression::Sharp => f64::from(u8::from(r > lambda)),
            Suppression::Smooth(p) => 1.0 - p.hat(r * r / (lambda * lambda)),
        }
    }
}

fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    quadrature::double_exponential::integrate(f, a, b, tol).integral
}

/// `∫_0^∞ f` split at the given break points and then dyadically out to `far`, where the
/// remainder is below the tolerance for the integrands used here.
fn radial(f: impl Fn(f64) -> f64 + Copy, breaks: &[f64], far: f64, tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().cloned().filter(|&b| b > 0.0 && b < far).collect();
    pts.push(0.0);
    let mut r = 1.0;
    while r < far {
        pts.push(r);
        r *= 2.0;
    }
    pts.push(far);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| quad(f, w[0], w[1], tol)).sum()
}

/// Exponent of `Ω` in the bound.
pub fn predicted_exponent(p: &IntegralParams) -> f64 {
    let eps = if p.lambda > 0.0 { p.epsilon } else { 0.0 };
    -p.alpha + (p.dim as f64 - p.nu - p.sigma) / p.gamma + eps
}

/// The weighted integral by radial-angular quadrature (`d = 3`, axis along `Ξ`) or by direct
/// quadrature split at `0` and `±Ξ` (`d = 1`).
pub fn weighted_integral(p: &IntegralParams, weight: Suppression, tol: f64) -> Result<f64, InequalityError> {
    let d = p.dim as f64;
    if !(d > p.nu + p.sigma && d < p.nu + p.sigma + p.alpha * p.gamma) {
        return Err(InequalityError::Precondition(format!(
            "dimension {} outside ({}, {})",
            p.dim,
            p.nu + p.sigma,
            p.nu + p.sigma + p.alpha * p.gamma
        )));
    }
    if !(p.omega > 0.0) {
        return Err(InequalityError::Precondition("Ω must be positive".into()));
    }
    let integrand = |r: f64, dist: f64| {
        let w = weight.weight(r, p.lambda);
        if w == 0.0 {
            return 0.0;
        }
        r.powf(-p.nu) * dist.powf(-p.sigma) * w / (dist.powf(p.gamma) + r + p.omega).powf(p.alpha)
    };
    // Tail decays like r^{d−1−ν−σ−αγ'} with γ' = min(γ, 1); extend until it is negligible.
    let decay = p.nu + p.sigma + p.alpha * p.gamma.min(1.0) - d;
    let scale = 1.0 + p.xi + p.omega.max(1.0) + p.lambda;
    let far = scale * (1.0 / tol).powf(1.0 / decay.max(0.5)).min(1e8);
    let xi = p.xi;
    match p.dim {
        1 => {
            let pos = |x: f64| integrand(x.abs(), (xi - x).abs());
            let right = radial(pos, &[xi, p.lambda], far, tol);
            let left = radial(|x| pos(-x), &[p.lambda], far, tol);
            Ok(right + left)
        }
        3 => {
            let shell = |r: f64| {
                if r == 0.0 {
                    return 0.0;
                }
                let angular = |u: f64| {
                    let dist = (xi * xi + r * r - 2.0 * xi * r * u).max(0.0).sqrt();
                    integrand(r, dist)
                };
                2.0 * PI * r * r * quad(angular, -1.0, 1.0, tol)
            };
            Ok(radial(shell, &[xi, p.lambda], far, tol))
        }
        _ => Err(InequalityError::Precondition("weighted integrals are evaluated in d = 1 or d = 3".into())),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralEstimate {
    pub params: IntegralParams,
    pub value: f64,
    /// `C Ω^{exponent} Λ^{−ε(Λ)}` with `C` the `Ω = 1`, `Λ = 0` reference integral at `Ξ = 0`.
    pub bound: f64,
    pub exponent: f64,
    /// Fitted `Ω` exponent from the sweep.
    pub fitted_exponent: f64,
    pub omegas: Vec<f64>,
    pub values: Vec<f64>,
}

/// Evaluate the integral over a sweep of `Ω` and compare the fitted exponent with the prediction.
pub fn integral_estimate_check(
    params: IntegralParams,
    weight: Suppression,
    omegas: &[f64],
    tol: f64,
) -> Result<IntegralEstimate, InequalityError> {
    let values: Vec<f64> = omegas
        .iter()
        .map(|&o| weighted_integral(&IntegralParams { omega: o, ..params }, weight, tol))
        .collect::<Result<_, _>>()?;
    let fitted = loglog_fit(omegas, &values).slope;
    let reference_params = IntegralParams { omega: 1.0, lambda: 0.0, xi: 0.0, ..params };
    let eps = if params.lambda > 0.0 { params.epsilon } else { 0.0 };
    let reference = weighted_integral(
        &IntegralParams { alpha: params.alpha - eps, nu: params.nu + eps, ..reference_params },
        Suppression::Sharp,
        tol,
    )?;
    let exponent = predicted_exponent(&params);
    let lambda_factor = if params.lambda > 0.0 { params.lambda.powf(-eps) } else { 1.0 };
    let value = weighted_integral(&params, weight, tol)?;
    Ok(IntegralEstimate {
        params,
        value,
        bound: reference * params.omega.powf(exponent) * lambda_factor,
        exponent,
        fitted_exponent: fitted,
        omegas: omegas.to_vec(),
        values,
    })
}

/// `∫_{ℝ³} |ζ_Λ(ξ)||ξ|^{−ν}/(|Ξ−ξ|²+1) dξ`, with the angular integral done in closed form.
pub fn lemma_integral(nu: f64, xi: f64, lambda: f64, weight: Suppression, tol: f64) -> Result<f64, InequalityError> {
    if !(nu > 1.0 && nu < 3.0) {
        return Err(InequalityError::Precondition(format!("ν = {nu} outside (1, 3)")));
    }
    let f = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        let w = weight.weight(r, lambda);
        let angular = if xi * r < 1e-8 {
            2.0 / (xi * xi + r * r + 1.0)
        } else {
            (((xi + r).powi(2) + 1.0) / ((xi - r).powi(2) + 1.0)).ln() / (2.0 * xi * r)
        };
        2.0 * PI * r.powf(2.0 - nu) * w * angular
    };
    // Tail ~ r^{−ν}; the cutoff leaves a remainder below tol.
    let far = (1.0 + xi + lambda) * (1.0 / tol).powf(1.0 / (nu - 1.0)).min(1e10);
    Ok(radial(f, &[xi, lambda], far, tol))
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaTable {
    pub nu: f64,
    pub lambda: f64,
    pub xis: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: LinearFit,
    /// `max_Ξ value·|Ξ|^{ν−1−ε}`, the fitted prefactor.
    pub prefactor: f64,
}

pub fn lemma_estimate_check(
    nu: f64,
    xis: &[f64],
    lambda: f64,
    epsilon: f64,
    weight: Suppression,
    tol: f64,
) -> Result<LemmaTable, InequalityError> {
    let values: Vec<f64> = xis.iter().map(|&x| lemma_integral(nu, x, lambda, weight, tol)).collect::<Result<_, _>>()?;
    let fit = loglog_fit(xis, &values);
    let prefactor = xis.iter().zip(&values).map(|(x, v)| v * x.powf(nu - 1.0 - epsilon)).fold(0.0, f64::max);
    Ok(LemmaTable { nu, lambda, xis: xis.to_vec(), values, fit, prefactor })
}

/// Constant-coefficient data of the diagonal-divergence integrals (`d = 3`, `g = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagonalParams {
    pub mass: f64,
    /// `|Ξ|`.
    pub xi: f64,
    /// Energy of the spectator bosons.
    pub omega: f64,
    pub profile: Profile,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiagonalRow {
    pub lambda: f64,
    /// `½∫ ω^{−1}|ρ̂|² / (|Ξ−ξ|² + ω(ξ) + Ω)`.
    pub unsubtracted: f64,
    /// The same minus `½∫ ω^{−1}|ρ̂|² / (|ξ|² + ω(ξ))`.
    pub subtracted: f64,
}

/// `∫_{−1}^{1} du / (a − b u)`.
fn angular_resolvent(a: f64, b: f64) -> f64 {
    if b.abs() < 1e-9 * a {
        2.0 / a
    } else {
        ((a + b) / (a - b)).ln() / b
    }
}

pub fn diagonal_integrals(params: DiagonalParams, lambda: f64, tol: f64) -> DiagonalRow {
    let m2 = params.mass * params.mass;
    let xi = params.xi;
    let common = |r: f64| {
        let w = (r * r + m2).sqrt();
        let hat = params.profile.hat(r * r / (lambda * lambda));
        (0.5 * 2.0 * PI / (2.0 * PI).powi(3)) * r * r * hat * hat / w
    };
    let unsub = |r: f64| {
        let w = (r * r + m2).sqrt();
        common(r) * angular_resolvent(xi * xi + r * r + w + params.omega, 2.0 * xi * r)
    };
    let sub = |r: f64| {
        let w = (r * r + m2).sqrt();
        // Combined integrand keeps the cancellation exact at large r.
        let a = xi * xi + r * r + w + params.omega;
        let diff = angular_resolvent(a, 2.0 * xi * r) - 2.0 / (r * r + w);
        common(r) * diff
    };
    let far = 9.0 * lambda;
    let breaks = [xi];
    DiagonalRow {
        lambda,
        unsubtracted: radial(unsub, &breaks, far, tol),
        subtracted: radial(sub, &breaks, far, tol),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagonalDemo {
    pub rows: Vec<DiagonalRow>,
    /// Fit of the unsubtracted column against `ln Λ`.
    pub fit: LinearFit,
    /// `(max − min)/max |·|` of the subtracted column.
    pub subtracted_variation: f64,
}

pub fn diagonal_divergence_demo(params: DiagonalParams, lambdas: &[f64], tol: f64) -> DiagonalDemo {
    let rows: Vec<DiagonalRow> = lambdas.iter().map(|&l| diagonal_integrals(params, l, tol)).collect();
    let logs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let un: Vec<f64> = rows.iter().map(|r| r.unsubtracted).collect();
    let fit = linear_fit(&logs, &un);
    let sub: Vec<f64> = rows.iter().map(|r| r.subtracted).collect();
    let max = sub.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = sub.iter().cloned().fold(f64::INFINITY, f64::min);
    let size = sub.iter().map(|v| v.abs()).fold(0.0, f64::max);
    DiagonalDemo { rows, fit, subtracted_variation: (max - min) / size }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_non_increasing_profile_is_fixed() {
        let p = RadialProfile::sample(3, (1..50).map(|k| k as f64 * 0.1).collect(), |r| (-r).exp()).unwrap();
        let q = rearrange_profile(&p);
        assert_eq!(p, q);
    }

    #[test]
    fn negative_input_is_rejected() {
        let g = Grid::new(1, 4, 4.0).unwrap();
        let f = LatticeFunction::from_real(g, &[1.0, -0.5, 0.0, 2.0]).unwrap();
        assert_eq!(rearrange(&f).unwrap_err(), InequalityError::Negative { cell: 1, value: -0.5 });
    }

    #[test]
    fn peetre_at_equal_points_and_zero_exponent() {
        assert!(peetre_holds(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 2.5));
        assert!(peetre_holds(&[5.0, 0.0, 0.0], &[-3.0, 1.0, 0.0], 0.0));
    }

    #[test]
    fn exponent_window_is_enforced() {
        let p = IntegralParams { nu: 2.0, sigma: 1.5, alpha: 1.0, gamma: 1.0, dim: 3, lambda: 0.0, omega: 1.0, xi: 0.0, epsilon: 0.0 };
        assert!(weighted_integral(&p, Suppression::Sharp, 1e-8).is_err());
    }

    #[test]
    fn angular_resolvent_limit() {
        let a = 3.0;
        assert!((angular_resolvent(a, 1e-12) - angular_resolvent(a, 1e-6)).abs() < 1e-9);
    }
}
