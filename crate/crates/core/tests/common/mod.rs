#![allow(dead_code)]

use std::sync::OnceLock;

use qcorr::multicopy::{calibrate_wiring, default_validation_states, CalibrationOptions};
use qcorr::WiringAssignment;

pub fn wiring() -> &'static WiringAssignment {
    static W: OnceLock<WiringAssignment> = OnceLock::new();
    W.get_or_init(|| {
        calibrate_wiring(&default_validation_states(), &CalibrationOptions::default())
            .expect("calibration succeeds")
    })
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
