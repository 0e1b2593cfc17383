//! Experiment configuration: flat `key = value` text with `[model]`, `[sweep]` and
//! `[tolerances]` sections. Lists are comma separated; `#` starts a comment.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{Grid, GridError, NyquistGuard};
use crate::nelson::{ModelSpec, NelsonError, MAX_TENSOR_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    WeylIdentities,
    PsidoCalculus,
    RenormConvergence,
    GrossTransform,
    IbcIdentity,
    DomainRegularity,
    AppendixInequalities,
    VacuumEnergy,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::WeylIdentities,
        Experiment::PsidoCalculus,
        Experiment::RenormConvergence,
        Experiment::GrossTransform,
        Experiment::IbcIdentity,
        Experiment::DomainRegularity,
        Experiment::AppendixInequalities,
        Experiment::VacuumEnergy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::WeylIdentities => "weyl-identities",
            Experiment::PsidoCalculus => "psido-calculus",
            Experiment::RenormConvergence => "renorm-convergence",
            Experiment::GrossTransform => "gross-transform",
            Experiment::IbcIdentity => "ibc-identity",
            Experiment::DomainRegularity => "domain-regularity",
            Experiment::AppendixInequalities => "appendix-inequalities",
            Experiment::VacuumEnergy => "vacuum-energy",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}' (try --list)"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key '{key}' in section [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: field '{key}': {message}")]
    Value { line: usize, key: String, message: String },
    #[error("field '{key}': {message}")]
    Invalid { key: String, message: String },
    #[error("guard violation: {0}")]
    Guard(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl ConfigError {
    /// 3 for guard trips, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Guard(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub points: usize,
    pub side: f64,
    /// `g(x) = 1 + a sin(x₁)`.
    pub metric_modulation: f64,
    pub mass: f64,
    /// `W(X) = b cos(X₁)`.
    pub potential: f64,
    pub cutoff: f64,
    pub infrared: f64,
    pub modes: usize,
    pub max_bosons: usize,
    pub coupling: f64,
    pub guard: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            points: 8,
            side: 2.0 * PI,
            metric_modulation: 0.3,
            mass: 1.0,
            potential: 0.0,
            cutoff: 2.0,
            infrared: 0.0,
            modes: 8,
            max_bosons: 2,
            coupling: 1.0,
            guard: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn spec_with(&self, points: usize, modes: usize, max_bosons: usize) -> Result<ModelSpec, ConfigError> {
        let grid = Grid::new(self.dim, points, self.side).map_err(grid_error)?;
        let a = self.metric_modulation;
        let b = self.potential;
        let mut spec = ModelSpec::new(grid)
            .with_scalar_metric(|x| 1.0 + a * x[0].sin())
            .with_mass(self.mass, |_| self.mass)
            .with_potential(|x| b * x[0].cos());
        spec.ellipticity = ((1.0 - a.abs()).max(1e-6) * 0.999, (1.0 + a.abs()) * 1.001);
        spec.cutoff = self.cutoff;
        spec.infrared = self.infrared;
        spec.modes = modes;
        spec.max_bosons = max_bosons;
        spec.coupling = self.coupling;
        spec.guard = NyquistGuard(self.guard);
        Ok(spec)
    }

    pub fn spec(&self) -> Result<ModelSpec, ConfigError> {
        self.spec_with(self.points, self.modes, self.max_bosons)
    }
}

fn grid_error(e: GridError) -> ConfigError {
    match e {
        GridError::Resolution { .. } => ConfigError::Guard(e.to_string()),
        other => ConfigError::Invalid { key: "model".into(), message: other.to_string() },
    }
}

pub fn model_error(e: NelsonError) -> ConfigError {
    match e {
        NelsonError::Grid(g) => grid_error(g),
        NelsonError::Size { .. } => ConfigError::Guard(e.to_string()),
        other => ConfigError::Invalid { key: "model".into(), message: other.to_string() },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    /// Cutoffs for the renormalization and IBC sweeps.
    pub lambdas: Vec<f64>,
    /// Refinement levels `L` of the domain-regularity sweep (with `Λ = L/2`, `M = L`).
    pub points: Vec<usize>,
    pub exponents: Vec<f64>,
    /// Truncations for the Weyl/Gross identities (single mode).
    pub fock_truncations: Vec<usize>,
    /// Sectors on which the Weyl/Gross identities are read off.
    pub fock_window: usize,
    pub weyl_coupling: f64,
    pub draws: usize,
    pub symbol_points: usize,
    pub symbols: usize,
    pub parametrix_points: usize,
    pub parametrix_iterations: usize,
    pub estimator_instances: usize,
    pub vacuum_lambdas: Vec<f64>,
    /// `|Ξ|` and `Ω` of the diagonal demo.
    pub diagonal_xi: f64,
    pub diagonal_omega: f64,
    pub hl_pairs: usize,
    pub hl_points: usize,
    pub peetre_samples: usize,
    pub omegas: Vec<f64>,
    pub lemma_xis: Vec<f64>,
    pub transformed_points: Vec<usize>,
    pub relative_samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![1.0, 2.0, 4.0],
            points: vec![8, 16, 32],
            exponents: vec![0.0, 0.2, 0.4, 0.5],
            fock_truncations: vec![10, 20, 40],
            fock_window: 8,
            weyl_coupling: 0.3,
            draws: 20,
            symbol_points: 32,
            symbols: 20,
            parametrix_points: 64,
            parametrix_iterations: 3,
            estimator_instances: 100,
            vacuum_lambdas: vec![4.0, 8.0, 16.0, 32.0, 64.0],
            diagonal_xi: 1.0,
            diagonal_omega: 0.0,
            hl_pairs: 1000,
            hl_points: 128,
            peetre_samples: 100_000,
            omegas: vec![1.0, 2.0, 4.0, 8.0],
            lemma_xis: vec![4.0, 8.0, 16.0, 32.0, 64.0],
            transformed_points: vec![8, 16],
            relative_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub ibc_identity: f64,
    pub spectral: f64,
    pub algebra: f64,
    pub weyl: f64,
    pub symbol: f64,
    pub parametrix_gain: f64,
    pub r_squared: f64,
    pub diagonal_variation: f64,
    pub regularity_ratio: f64,
    pub rearrangement_factor: f64,
    pub scaling: f64,
    pub transformed_decay: f64,
    pub split_ratio: f64,
    pub lemma_slack: f64,
    pub lemma_epsilon: f64,
    pub b_stability: f64,
    pub sector_exponent: f64,
    pub neumann: f64,
    pub quadrature: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ibc_identity: 1e-10,
            spectral: 1e-9,
            algebra: 1e-12,
            weyl: 1e-7,
            symbol: 1e-10,
            parametrix_gain: 10.0,
            r_squared: 0.99,
            diagonal_variation: 0.10,
            regularity_ratio: 2.0,
            rearrangement_factor: 2.0,
            scaling: 0.15,
            transformed_decay: 1.5,
            split_ratio: 0.3,
            lemma_slack: 0.1,
            lemma_epsilon: 0.05,
            b_stability: 2.0,
            sector_exponent: 0.15,
            neumann: 1e-12,
            quadrature: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub output: PathBuf,
    pub model: ModelConfig,
    pub sweep: SweepConfig,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 1,
            output: PathBuf::from("out"),
            model: ModelConfig::default(),
            sweep: SweepConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

fn parse_scalar<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Value { line, key: key.into(), message: format!("'{value}': {e}") })
}

fn parse_list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    let items: Vec<&str> = value.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::Value { line, key: key.into(), message: "empty list entry".into() });
    }
    items.into_iter().map(|s| parse_scalar(line, key, s)).collect()
}

/// Parse a real number, accepting `pi` and `k*pi` for the side length.
fn parse_real(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    let v = value.replace(' ', "");
    if let Some(prefix) = v.strip_suffix("pi") {
        let factor = prefix.strip_suffix('*').unwrap_or(prefix);
        let f = if factor.is_empty() { 1.0 } else { parse_scalar::<f64>(line, key, factor)? };
        return Ok(f * PI);
    }
    parse_scalar(line, key, &v)
}

macro_rules! assign {
    ($line:expr, $key:expr, $value:expr, $( $name:literal => $target:expr, $kind:ident );* $(;)?) => {
        match $key {
            $( $name => { $target = assign!(@parse $kind, $line, $key, $value); true } )*
            _ => false,
        }
    };
    (@parse real, $line:expr, $key:expr, $value:expr) => { parse_real($line, $key, $value)? };
    (@parse int, $line:expr, $key:expr, $value:expr) => { parse_scalar($line, $key, $value)? };
    (@parse reals, $line:expr, $key:expr, $value:expr) => { parse_list($line, $key, $value)? };
    (@parse ints, $line:expr, $key:expr, $value:expr) => { parse_list($line, $key, $value)? };
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line, message: format!("unterminated section header '{content}'") })?
                    .trim();
                if !matches!(name, "model" | "sweep" | "tolerances") {
                    return Err(ConfigError::UnknownSection { line, section: name.into() });
                }
                section = name.into();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, message: format!("expected 'key = value', got '{content}'") })?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(ConfigError::Value { line, key: key.into(), message: "missing value".into() });
            }
            let known = match section.as_str() {
                "" => match key {
                    "experiment" => {
                        cfg.experiment = Some(value.parse().map_err(|m| ConfigError::Value { line, key: key.into(), message: m })?);
                        true
                    }
                    "output" => {
                        cfg.output = PathBuf::from(value);
                        true
                    }
                    _ => assign!(line, key, value, "seed" => cfg.seed, int),
                },
                "model" => {
                    let m = &mut cfg.model;
                    assign!(line, key, value,
                        "dim" => m.dim, int;
                        "points" => m.points, int;
                        "side" => m.side, real;
                        "metric_modulation" => m.metric_modulation, real;
                        "mass" => m.mass, real;
                        "potential" => m.potential, real;
                        "cutoff" => m.cutoff, real;
                        "infrared" => m.infrared, real;
                        "modes" => m.modes, int;
                        "max_bosons" => m.max_bosons, int;
                        "coupling" => m.coupling, real;
                        "guard" => m.guard, real;
                    )
                }
                "sweep" => {
                    let s = &mut cfg.sweep;
                    assign!(line, key, value,
                        "lambdas" => s.lambdas, reals;
                        "points" => s.points, ints;
                        "exponents" => s.exponents, reals;
                        "fock_truncations" => s.fock_truncations, ints;
                        "fock_window" => s.fock_window, int;
                        "weyl_coupling" => s.weyl_coupling, real;
                        "draws" => s.draws, int;
                        "symbol_points" => s.symbol_points, int;
                        "symbols" => s.symbols, int;
                        "parametrix_points" => s.parametrix_points, int;
                        "parametrix_iterations" => s.parametrix_iterations, int;
                        "estimator_instances" => s.estimator_instances, int;
                        "vacuum_lambdas" => s.vacuum_lambdas, reals;
                        "diagonal_xi" => s.diagonal_xi, real;
                        "diagonal_omega" => s.diagonal_omega, real;
                        "hl_pairs" => s.hl_pairs, int;
                        "hl_points" => s.hl_points, int;
                        "peetre_samples" => s.peetre_samples, int;
                        "omegas" => s.omegas, reals;
                        "lemma_xis" => s.lemma_xis, reals;
                        "transformed_points" => s.transformed_points, ints;
                        "relative_samples" => s.relative_samples, int;
                    )
                }
                _ => {
                    let t = &mut cfg.tolerances;
                    assign!(line, key, value,
                        "ibc_identity" => t.ibc_identity, real;
                        "spectral" => t.spectral, real;
                        "algebra" => t.algebra, real;
                        "weyl" => t.weyl, real;
                        "symbol" => t.symbol, real;
                        "parametrix_gain" => t.parametrix_gain, real;
                        "r_squared" => t.r_squared, real;
                        "diagonal_variation" => t.diagonal_variation, real;
                        "regularity_ratio" => t.regularity_ratio, real;
                        "rearrangement_factor" => t.rearrangement_factor, real;
                        "scaling" => t.scaling, real;
                        "transformed_decay" => t.transformed_decay, real;
                        "split_ratio" => t.split_ratio, real;
                        "lemma_slack" => t.lemma_slack, real;
                        "lemma_epsilon" => t.lemma_epsilon, real;
                        "b_stability" => t.b_stability, real;
                        "sector_exponent" => t.sector_exponent, real;
                        "neumann" => t.neumann, real;
                        "quadrature" => t.quadrature, real;
                    )
                }
            };
            if !known {
                let section = if section.is_empty() { "top level".to_string() } else { section.clone() };
                return Err(ConfigError::UnknownKey { line, section, key: key.into() });
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    /// Structural checks and guards, without running anything.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: String| Err(ConfigError::Invalid { key: key.into(), message });
        let m = &self.model;
        if !(1..=3).contains(&m.dim) {
            return invalid("model.dim", format!("must be 1, 2 or 3, got {}", m.dim));
        }
        if m.metric_modulation.abs() >= 1.0 {
            return invalid("model.metric_modulation", "must satisfy |a| < 1 for ellipticity".into());
        }
        if !(m.mass > 0.0) {
            return invalid("model.mass", "must be positive".into());
        }
        if !(m.guard > 0.0) {
            return invalid("model.guard", "must be positive".into());
        }
        let spec = self.model.spec()?;
        spec.validate().map_err(model_error)?;
        let dim = spec.grid.len() * crate::fock::fock_dimension(m.modes, m.max_bosons);
        if dim > MAX_TENSOR_DIM {
            return Err(ConfigError::Guard(format!("tensor dimension {dim} exceeds the limit {MAX_TENSOR_DIM}")));
        }
        let s = &self.sweep;
        if s.lambdas.len() < 2 || s.lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("sweep.lambdas", "needs at least two strictly increasing cutoffs".into());
        }
        let guard = spec.grid.cutoff_guard(spec.guard);
        if let Some(l) = s.lambdas.iter().find(|&&l| l > guard) {
            return Err(ConfigError::Guard(format!(
                "sweep cutoff {l} exceeds the Nyquist guard {guard} at L = {}",
                m.points
            )));
        }
        if s.points.len() < 2 || s.points.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("sweep.points", "needs at least two strictly increasing lattice sizes".into());
        }
        if s.points.iter().any(|&p| p > 64) {
            return Err(ConfigError::Guard("domain-regularity levels are capped at L = 64".into()));
        }
        if s.fock_truncations.len() < 2 || s.fock_truncations.iter().any(|&n| n <= s.fock_window) {
            return invalid("sweep.fock_truncations", format!("needs two or more truncations above fock_window = {}", s.fock_window));
        }
        if s.fock_truncations.iter().any(|&n| n > 200) {
            return Err(ConfigError::Guard("single-mode truncations are capped at 200".into()));
        }
        if s.symbol_points > 64 || s.parametrix_points > 128 {
            return Err(ConfigError::Guard("symbol grids are capped at L = 64 (calculus) and 128 (parametrix)".into()));
        }
        if s.vacuum_lambdas.len() < 3 || s.vacuum_lambdas.iter().any(|&l| !(l > 0.0)) {
            return invalid("sweep.vacuum_lambdas", "needs three or more positive cutoffs".into());
        }
        if s.transformed_points.len() < 2 || s.transformed_points.iter().any(|&p| p > 16) {
            return Err(ConfigError::Guard("transformed-Hamiltonian sweep needs two levels with L <= 16".into()));
        }
        if s.omegas.len() < 2 || s.omegas.iter().any(|&o| !(o > 0.0)) {
            return invalid("sweep.omegas", "needs two or more positive values".into());
        }
        if s.lemma_xis.len() < 2 || s.lemma_xis.iter().any(|&x| !(x > 0.0)) {
            return invalid("sweep.lemma_xis", "needs two or more positive values".into());
        }
        Ok(())
    }

    /// Canonical text of the resolved configuration (parses back to the same value).
    pub fn render(&self) -> String {
        fn list<T: fmt::Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        let mut out = String::new();
        if let Some(e) = self.experiment {
            let _ = writeln!(out, "experiment = {e}");
        }
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "output = {}", self.output.display());
        let m = &self.model;
        let _ = writeln!(out, "\n[model]");
        for (k, v) in [
            ("dim", m.dim.to_string()),
            ("points", m.points.to_string()),
            ("side", m.side.to_string()),
            ("metric_modulation", m.metric_modulation.to_string()),
            ("mass", m.mass.to_string()),
            ("potential", m.potential.to_string()),
            ("cutoff", m.cutoff.to_string()),
            ("infrared", m.infrared.to_string()),
            ("modes", m.modes.to_string()),
            ("max_bosons", m.max_bosons.to_string()),
            ("coupling", m.coupling.to_string()),
            ("guard", m.guard.to_string()),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        let s = &self.sweep;
        let _ = writeln!(out, "\n[sweep]");
        for (k, v) in [
            ("lambdas", list(&s.lambdas)),
            ("points", list(&s.points)),
            ("exponents", list(&s.exponents)),
            ("fock_truncations", list(&s.fock_truncations)),
            ("fock_window", s.fock_window.to_string()),
            ("weyl_coupling", s.weyl_coupling.to_string()),
            ("draws", s.draws.to_string()),
            ("symbol_points", s.symbol_points.to_string()),
            ("symbols", s.symbols.to_string()),
            ("parametrix_points", s.parametrix_points.to_string()),
            ("parametrix_iterations", s.parametrix_iterations.to_string()),
            ("estimator_instances", s.estimator_instances.to_string()),
            ("vacuum_lambdas", list(&s.vacuum_lambdas)),
            ("diagonal_xi", s.diagonal_xi.to_string()),
            ("diagonal_omega", s.diagonal_omega.to_string()),
            ("hl_pairs", s.hl_pairs.to_string()),
            ("hl_points", s.hl_points.to_string()),
            ("peetre_samples", s.peetre_samples.to_string()),
            ("omegas", list(&s.omegas)),
            ("lemma_xis", list(&s.lemma_xis)),
            ("transformed_points", list(&s.transformed_points)),
            ("relative_samples", s.relative_samples.to_string()),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        let t = &self.tolerances;
        let _ = writeln!(out, "\n[tolerances]");
        for (k, v) in [
            ("ibc_identity", t.ibc_identity),
            ("spectral", t.spectral),
            ("algebra", t.algebra),
            ("weyl", t.weyl),
            ("symbol", t.symbol),
            ("parametrix_gain", t.parametrix_gain),
            ("r_squared", t.r_squared),
            ("diagonal_variation", t.diagonal_variation),
            ("regularity_ratio", t.regularity_ratio),
            ("rearrangement_factor", t.rearrangement_factor),
            ("scaling", t.scaling),
            ("transformed_decay", t.transformed_decay),
            ("split_ratio", t.split_ratio),
            ("lemma_slack", t.lemma_slack),
            ("lemma_epsilon", t.lemma_epsilon),
            ("b_stability", t.b_stability),
            ("sector_exponent", t.sector_exponent),
            ("neumann", t.neumann),
            ("quadrature", t.quadrature),
        ] {
            let _ = writeln!(out, "{k} = {v:e}");
        }
        out
    }

    /// FNV-1a of the canonical rendering, as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.render().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}
