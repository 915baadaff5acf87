//! Estimation of two-qubit entanglement (negativity) and Bell-CHSH nonlocality
//! from multicopy singlet-projection data.
//!
//! The crate is organised around the measurement pipeline:
//!
//! * [`qcore`] builds two-qubit states and channels, and hosts the brute-force
//!   density-matrix oracles every estimator is checked against.
//! * [`multicopy`] evaluates the thirteen singlet-projection configurations,
//!   calibrates their qubit wirings and turns projection data into local
//!   unitary invariants, negativity and the Bell measure.
//! * [`noise`] simulates finite-shot sampling and readout errors and provides
//!   the usual mitigation tools.
//! * [`estimators`] contains the tomography baseline and maximum-likelihood
//!   reconstruction for both tomography and multicopy counts.
//! * [`ml`] generates datasets, trains the small ReLU regressor and computes
//!   exact Shapley attributions used to pick a reduced measurement set.
//! * [`resources`] does the settings/gate accounting.

pub mod estimators;
pub mod ml;
pub mod multicopy;
pub mod noise;
pub mod qcore;
pub mod resources;

pub use multicopy::{ConfigName, ProjectionSet, WiringAssignment};
pub use qcore::DensityMatrix;
