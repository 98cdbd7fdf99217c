//! WebAssembly bindings behind `www/index.html`.
//!
//! Every export returns a JSON string. The `*_json` functions hold the logic
//! and are plain Rust, so they are tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use privlqr::harness::{Experiment, ExperimentConfig, Method, Solved, DEFAULT_CONFIG_JSON};
use privlqr::privacy::{laplace_variance, privacy_budget, PrivacyProfile};

const MAX_POINTS: usize = 2000;

#[derive(Serialize)]
struct PrivacyCurve {
    rho: Vec<f64>,
    epsilon: Vec<f64>,
    variance: Vec<f64>,
    floor: f64,
}

#[derive(Serialize)]
struct AllocationView {
    method: String,
    rho_total: f64,
    expected_regret: f64,
    iterations: usize,
    converged: bool,
    rho_i: Vec<f64>,
    mean_c_i: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

impl From<&Solved> for AllocationView {
    fn from(s: &Solved) -> Self {
        Self {
            method: s.method.to_string(),
            rho_total: s.rho_total,
            expected_regret: s.expected_regret,
            iterations: s.iterations,
            converged: s.converged,
            rho_i: s.allocation.incentives.clone(),
            mean_c_i: s.allocation.mean_coefficients(),
            coeffs: s.allocation.coeffs.iter().map(|c| c.iter().copied().collect()).collect(),
        }
    }
}

#[derive(Serialize)]
struct RegretCurve {
    rho: Vec<f64>,
    acs: Vec<f64>,
    uniform: Vec<f64>,
    /// Mean coefficient per source along the ACS curve, `[source][point]`.
    acs_mean_c: Vec<Vec<f64>>,
    floor: f64,
}

fn grid(rho_max: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(rho_max.is_finite() && rho_max > 0.0) {
        return Err(format!("rho_max must be > 0, got {rho_max}"));
    }
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(format!("points must be in 2..={MAX_POINTS}, got {points}"));
    }
    Ok((0..points).map(|k| rho_max * k as f64 / (points - 1) as f64).collect())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

pub fn privacy_curve_json(
    sen: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    rho_max: f64,
    points: usize,
) -> Result<String, String> {
    let prof = PrivacyProfile::new(sen, alpha, beta, gamma).map_err(|e| e.to_string())?;
    let rho = grid(rho_max, points)?;
    let epsilon = rho.iter().map(|&r| privacy_budget(r, &prof)).collect::<Result<_, _>>();
    let variance = rho.iter().map(|&r| laplace_variance(r, &prof)).collect::<Result<_, _>>();
    to_json(&PrivacyCurve {
        epsilon: epsilon.map_err(|e| e.to_string())?,
        variance: variance.map_err(|e| e.to_string())?,
        floor: prof.variance_floor(),
        rho,
    })
}

/// Budget `ε(ρ)` and noise variance `σ²(ρ)` on `points` incentives in `[0, rho_max]`.
#[wasm_bindgen]
pub fn privacy_curve(sen: f64, alpha: f64, beta: f64, gamma: f64, rho_max: f64, points: usize) -> Result<String, JsError> {
    privacy_curve_json(sen, alpha, beta, gamma, rho_max, points).map_err(|e| JsError::new(&e))
}

/// The bundled experiment config, pretty-printed.
#[wasm_bindgen]
pub fn default_config() -> String {
    DEFAULT_CONFIG_JSON.to_owned()
}

/// A built experiment: series generated, forecasters fitted, controller compiled.
#[wasm_bindgen]
pub struct Demo {
    exp: Experiment,
}

impl Demo {
    pub fn from_json(config: &str) -> Result<Demo, String> {
        let text = if config.trim().is_empty() { DEFAULT_CONFIG_JSON } else { config };
        let cfg = ExperimentConfig::from_json_str(text).map_err(|e| e.to_string())?;
        let exp = Experiment::build(&cfg).map_err(|e| e.to_string())?;
        Ok(Demo { exp })
    }

    pub fn allocate_json(&self, rho_total: f64) -> Result<String, String> {
        let views = Method::ALL
            .iter()
            .map(|&m| self.exp.solve(rho_total, m).map(|s| AllocationView::from(&s)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        to_json(&views)
    }

    pub fn regret_curve_json(&self, rho_max: f64, points: usize) -> Result<String, String> {
        let rho = grid(rho_max, points)?;
        let n = self.exp.sources.len();
        let mut curve = RegretCurve {
            acs: Vec::with_capacity(points),
            uniform: Vec::with_capacity(points),
            acs_mean_c: vec![Vec::with_capacity(points); n],
            floor: self.exp.floor_regret().map_err(|e| e.to_string())?,
            rho: Vec::new(),
        };
        for &r in &rho {
            let acs = self.exp.solve(r, Method::Acs).map_err(|e| e.to_string())?;
            let uniform = self.exp.solve(r, Method::Uniform).map_err(|e| e.to_string())?;
            curve.acs.push(acs.expected_regret);
            curve.uniform.push(uniform.expected_regret);
            for (i, c) in acs.allocation.mean_coefficients().into_iter().enumerate() {
                curve.acs_mean_c[i].push(c);
            }
        }
        curve.rho = rho;
        to_json(&curve)
    }
}

#[wasm_bindgen]
impl Demo {
    /// Builds from a JSON config; an empty string selects the bundled one.
    #[wasm_bindgen(constructor)]
    pub fn new(config: &str) -> Result<Demo, JsError> {
        Demo::from_json(config).map_err(|e| JsError::new(&e))
    }

    /// ACS and Uniform allocations for one total incentive.
    pub fn allocate(&self, rho_total: f64) -> Result<String, JsError> {
        self.allocate_json(rho_total).map_err(|e| JsError::new(&e))
    }

    /// Analytic regret of both methods on `points` totals in `[0, rho_max]`.
    pub fn regret_curve(&self, rho_max: f64, points: usize) -> Result<String, JsError> {
        self.regret_curve_json(rho_max, points).map_err(|e| JsError::new(&e))
    }

    pub fn sources(&self) -> usize {
        self.exp.sources.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn privacy_curve_has_expected_shape() {
        let v: Value = serde_json::from_str(&privacy_curve_json(1.0, 4.0, 1.5, 0.3, 4.0, 5).unwrap()).unwrap();
        assert_eq!(v["rho"].as_array().unwrap().len(), 5);
        let var: Vec<f64> = v["variance"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(var.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(v["floor"].as_f64().unwrap(), 2.0 / 16.0);
        assert!(privacy_curve_json(1.0, 0.0, 1.5, 0.3, 4.0, 5).is_err());
        assert!(privacy_curve_json(1.0, 4.0, 1.5, 0.3, 4.0, 1).is_err());
    }

    #[test]
    fn allocations_are_feasible() {
        let demo = Demo::from_json("").unwrap();
        let v: Value = serde_json::from_str(&demo.allocate_json(1.0).unwrap()).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 2);
        assert_eq!(arr[0]["method"], "ACS");
        for a in arr {
            let total: f64 = a["rho_i"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        assert!(arr[0]["expected_regret"].as_f64() <= arr[1]["expected_regret"].as_f64());
        assert!(demo.allocate_json(-1.0).is_err());
    }

    #[test]
    fn regret_curve_is_dominated() {
        let demo = Demo::from_json("").unwrap();
        let v: Value = serde_json::from_str(&demo.regret_curve_json(4.0, 5).unwrap()).unwrap();
        let acs = v["acs"].as_array().unwrap();
        let uni = v["uniform"].as_array().unwrap();
        for (a, u) in acs.iter().zip(uni) {
            assert!(a.as_f64().unwrap() <= u.as_f64().unwrap());
        }
        assert_eq!(v["acs_mean_c"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn bad_config_is_reported() {
        assert!(Demo::from_json("{").is_err());
    }
}
