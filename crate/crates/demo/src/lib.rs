//! wasm-bindgen bindings used by `www/index.html`.

use nelsonlab::config::{Experiment, ExperimentConfig};
use nelsonlab::experiments;
use nelsonlab::grid::Profile;
use nelsonlab::nelson::{self, ConstantCoefficients, VacuumForm};
use wasm_bindgen::prelude::*;

/// Experiment names as a JSON array.
#[wasm_bindgen]
pub fn experiment_names() -> String {
    let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
    serde_json::to_string(&names).expect("names serialize")
}

/// Runs one experiment with the default configuration and returns its measurements as JSON.
#[wasm_bindgen]
pub fn run_experiment(name: &str, seed: u32) -> Result<String, JsError> {
    let experiment: Experiment = name.parse().map_err(|e: String| JsError::new(&e))?;
    let cfg = ExperimentConfig { experiment: Some(experiment), seed: u64::from(seed), ..ExperimentConfig::default() };
    cfg.validate().map_err(|e| JsError::new(&e.to_string()))?;
    let rows = experiments::run(experiment, &cfg).map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&rows).map_err(|e| JsError::new(&e.to_string()))
}

/// `[Λ, E_Λ]` pairs from the momentum-space evaluator with flat coefficients in d = 3.
#[wasm_bindgen]
pub fn vacuum_energy_curve(lambdas: &[f64]) -> String {
    let coeffs = ConstantCoefficients { dim: 3, metric: 1.0, mass: 1.0 };
    let rows: Vec<[f64; 2]> = lambdas
        .iter()
        .map(|&l| [l, nelson::vacuum_energy_symbol(coeffs, Profile::Gaussian, l, VacuumForm::FullDenominator, 1e-10)])
        .collect();
    serde_json::to_string(&rows).expect("pairs serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let names: Vec<String> = serde_json::from_str(&experiment_names()).unwrap();
        assert_eq!(names.len(), 8);
        assert!(names.iter().all(|n| n.parse::<Experiment>().is_ok()));
    }

    #[test]
    fn vacuum_curve_grows() {
        let rows: Vec<[f64; 2]> = serde_json::from_str(&vacuum_energy_curve(&[4.0, 8.0, 16.0])).unwrap();
        assert!(rows[0][1] < rows[1][1] && rows[1][1] < rows[2][1]);
    }

    #[test]
    fn light_experiment_runs() {
        let json = run_experiment("weyl-identities", 3).unwrap();
        let rows: Vec<serde_json::Value> = serde_json::from_str(&json).unwrap();
        assert!(rows.iter().all(|r| r["status"] != "FAIL"));
    }
}
