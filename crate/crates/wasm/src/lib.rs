//! wasm-bindgen surface for the static demo page in `www/`.

use std::sync::OnceLock;

use wasm_bindgen::prelude::*;

use qcorr::multicopy::{
    bell_from_invariants_lenient, calibrate_wiring, default_validation_states, invariants_from_projections,
    negativity_quartic_lenient, CalibrationOptions,
};
use qcorr::noise::{sample_projection_set, NoiseConfig};
use qcorr::qcore::{horodecki, horodecki_b_oracle, negativity_oracle, werner};
use qcorr::{ConfigName, DensityMatrix, ProjectionSet, WiringAssignment};

fn wiring() -> &'static WiringAssignment {
    static W: OnceLock<WiringAssignment> = OnceLock::new();
    W.get_or_init(|| {
        calibrate_wiring(&default_validation_states(), &CalibrationOptions::default())
            .expect("default calibration succeeds")
    })
}

fn state(family: &str, p: f64) -> Result<DensityMatrix, JsError> {
    match family {
        "werner" => werner(p),
        "horodecki" => horodecki(p),
        other => return Err(JsError::new(&format!("unknown family `{other}`"))),
    }
    .map_err(|e| JsError::new(&e.to_string()))
}

fn estimates(ps: &ProjectionSet) -> (f64, f64) {
    (
        negativity_quartic_lenient(ps),
        bell_from_invariants_lenient(&invariants_from_projections(ps)),
    )
}

#[wasm_bindgen]
pub fn config_names() -> Vec<String> {
    ConfigName::ALL.iter().map(|c| c.to_string()).collect()
}

/// Flattened rows `[p, n_est, b_est, n_true, b_true]` on a uniform grid,
/// estimates from exact projection values.
#[wasm_bindgen]
pub fn sweep_curves(family: &str, points: usize) -> Result<Vec<f64>, JsError> {
    if points < 2 {
        return Err(JsError::new("need at least two grid points"));
    }
    let mut out = Vec::with_capacity(points * 5);
    for i in 0..points {
        let p = i as f64 / (points - 1) as f64;
        let rho = state(family, p)?;
        let (n, b) = estimates(&wiring().projection_set(&rho));
        out.extend([p, n, b, negativity_oracle(&rho), horodecki_b_oracle(&rho)]);
    }
    Ok(out)
}

/// The thirteen projection probabilities, in [`config_names`] order.
#[wasm_bindgen]
pub fn projection_bars(family: &str, p: f64) -> Result<Vec<f64>, JsError> {
    Ok(wiring().projection_set(&state(family, p)?).values.to_vec())
}

/// Flattened `[n̂, b̂]` pairs from `trials` finite-shot experiments.
#[wasm_bindgen]
pub fn shot_noise(family: &str, p: f64, shots: u32, trials: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    if shots == 0 {
        return Err(JsError::new("shots must be positive"));
    }
    let rho = state(family, p)?;
    let noise = NoiseConfig::default();
    let mut out = Vec::with_capacity(2 * trials as usize);
    for t in 0..trials {
        let seed = (u64::from(seed) << 32) | u64::from(t);
        let records = sample_projection_set(&rho, wiring(), u64::from(shots), &noise, 1.0, seed)
            .map_err(|e| JsError::new(&e.to_string()))?;
        let values: [f64; 13] = std::array::from_fn(|k| records[k].rate());
        let (n, b) = estimates(&ProjectionSet { values });
        out.extend([n, b]);
    }
    Ok(out)
}
