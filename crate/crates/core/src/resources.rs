//! Measurement-settings and gate accounting for tomography versus the
//! reduced multicopy scheme.

use serde::{Deserialize, Serialize};

pub const QST_SETTINGS: u32 = 15;
pub const QST_DEPTH: u32 = 5;
pub const MCE_SETTINGS: u32 = 5;
pub const MCE_DEPTH: u32 = 12;
pub const SCALING_MAX_QUBITS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCost {
    pub method: String,
    pub settings: u32,
    pub depth_per_setting: u32,
    pub total_gates: u32,
}

impl MethodCost {
    fn new(method: &str, settings: u32, depth: u32) -> Self {
        MethodCost {
            method: method.to_string(),
            settings,
            depth_per_setting: depth,
            total_gates: settings * depth,
        }
    }
}

/// Order-of-growth comparison for an n-qubit register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub qubits: u32,
    pub tomography: u64,
    pub multicopy: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub qst: MethodCost,
    pub mce: MethodCost,
    /// Settings saved, in whole percent.
    pub settings_reduction_percent: u32,
    pub gate_reduction_percent: u32,
    pub scaling: Vec<ScalingRow>,
}

fn percent_saved(before: u32, after: u32) -> u32 {
    (100.0 * f64::from(before - after) / f64::from(before)).round() as u32
}

pub fn scaling_row(qubits: u32) -> ScalingRow {
    ScalingRow { qubits, tomography: 4u64.pow(qubits), multicopy: 2u64.pow(qubits) }
}

pub fn resource_report() -> ResourceReport {
    let qst = MethodCost::new("qst", QST_SETTINGS, QST_DEPTH);
    let mce = MethodCost::new("mce+ann", MCE_SETTINGS, MCE_DEPTH);
    ResourceReport {
        settings_reduction_percent: percent_saved(qst.settings, mce.settings),
        gate_reduction_percent: percent_saved(qst.total_gates, mce.total_gates),
        scaling: (1..=SCALING_MAX_QUBITS).map(scaling_row).collect(),
        qst,
        mce,
    }
}

impl ResourceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}
