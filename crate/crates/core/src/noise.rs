//! Finite-shot sampling, readout errors and mitigation.
//!
//! Each singlet pair of a projection pattern is read by one detector whose
//! bit is 1 for the singlet outcome. `e01` is the probability that a true 1
//! is read as 0 and `e10` that a true 0 is read as 1. A pattern succeeds when
//! every detector reads 1.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multicopy::{pattern_value, ConfigName, ProjectionConfig, WiringAssignment};
use crate::qcore::{
    bloch_decompose, depolarizing, fidelity_overlap, DensityMatrix, StateError,
};

/// Readout error rate quoted for the reference hardware.
pub const DEFAULT_READOUT_ERROR: f64 = 0.0189;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("confusion matrix is singular (e01 = {e01}, e10 = {e10}); rates must be below 0.5")]
    SingularConfusion { e01: f64, e10: f64 },
    #[error("zero-noise extrapolation needs distinct noise scales")]
    DuplicateScales,
    #[error("zero-noise extrapolation needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("length mismatch: {values} values for {weights} weights")]
    LengthMismatch { values: usize, weights: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("malformed noise document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("count file: {0}")]
    Csv(#[from] csv::Error),
}

/// Per-detector readout flip probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionModel {
    pub e01: f64,
    pub e10: f64,
}

impl ConfusionModel {
    pub const IDEAL: ConfusionModel = ConfusionModel { e01: 0.0, e10: 0.0 };

    pub fn symmetric(e: f64) -> Self {
        ConfusionModel { e01: e, e10: e }
    }

    pub fn check(&self) -> Result<(), NoiseError> {
        let ok = |e: f64| (0.0..0.5).contains(&e);
        if ok(self.e01) && ok(self.e10) {
            Ok(())
        } else {
            Err(NoiseError::SingularConfusion {
                e01: self.e01,
                e10: self.e10,
            })
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.e01 == 0.0 && self.e10 == 0.0
    }

    /// Column-stochastic single-detector matrix, `m[read][true]` with index
    /// 0 for the non-singlet bit.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[1.0 - self.e10, self.e01], [self.e10, 1.0 - self.e01]]
    }

    /// P(read success | true success) and P(read success | true failure) for
    /// a pattern of `detectors` detectors. A failing pattern is taken to
    /// have exactly one detector at 0.
    pub fn pattern_rates(&self, detectors: usize) -> (f64, f64) {
        let keep = (1.0 - self.e01).powi(detectors as i32);
        let spurious = if detectors == 0 {
            0.0
        } else {
            self.e10 * (1.0 - self.e01).powi(detectors as i32 - 1)
        };
        (keep, spurious)
    }

    /// Observed success probability for a true one.
    pub fn corrupt_rate(&self, p: f64, detectors: usize) -> f64 {
        let (keep, spurious) = self.pattern_rates(detectors);
        spurious + (keep - spurious) * p
    }

    /// Two-detector outcome distribution (index 2·bitₐ + bit_b) after the
    /// tensor-product confusion C⊗C.
    pub fn corrupt_pair_distribution(&self, probs: [f64; 4]) -> [f64; 4] {
        let c = self.matrix();
        let mut out = [0.0; 4];
        for (r, o) in out.iter_mut().enumerate() {
            for (t, p) in probs.iter().enumerate() {
                *o += c[r >> 1][t >> 1] * c[r & 1][t & 1] * p;
            }
        }
        out
    }

    /// Inverse of [`Self::corrupt_pair_distribution`]; the result may leave
    /// the simplex.
    pub fn mitigate_pair_distribution(&self, observed: [f64; 4]) -> Result<[f64; 4], NoiseError> {
        self.check()?;
        let c = self.matrix();
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let inv = [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]];
        let mut out = [0.0; 4];
        for (t, o) in out.iter_mut().enumerate() {
            for (r, q) in observed.iter().enumerate() {
                *o += inv[t >> 1][r >> 1] * inv[t & 1][r & 1] * q;
            }
        }
        Ok(out)
    }
}

/// Noise descriptor as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub readout: ConfusionModel,
    #[serde(default)]
    pub depolarizing: f64,
    #[serde(default = "default_scales")]
    pub zne_scales: Vec<f64>,
}

fn default_scales() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            readout: ConfusionModel::IDEAL,
            depolarizing: 0.0,
            zne_scales: default_scales(),
        }
    }
}

impl NoiseConfig {
    /// Readout error at the hardware-quoted rate, no depolarizing.
    pub fn hardware() -> Self {
        NoiseConfig {
            readout: ConfusionModel::symmetric(DEFAULT_READOUT_ERROR),
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, NoiseError> {
        let cfg: NoiseConfig = serde_json::from_str(text)?;
        cfg.readout.check()?;
        if !(0.0..=1.0).contains(&cfg.depolarizing) {
            return Err(NoiseError::InvalidParameter(format!(
                "depolarizing strength {} outside [0, 1]",
                cfg.depolarizing
            )));
        }
        Ok(cfg)
    }

    /// The state after the depolarizing channel amplified by `scale`.
    pub fn noisy_state(&self, rho: &DensityMatrix, scale: f64) -> Result<DensityMatrix, NoiseError> {
        if self.depolarizing == 0.0 {
            return Ok(rho.clone());
        }
        let strength = self.depolarizing * scale;
        if strength > 1.0 {
            return Err(NoiseError::InvalidParameter(format!(
                "amplified depolarizing strength {strength} exceeds 1"
            )));
        }
        Ok(depolarizing(rho, strength)?)
    }
}

/// Counts of one projection pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub config: ConfigName,
    pub shots: u64,
    pub successes: u64,
    pub detectors: usize,
    pub readout: Option<ConfusionModel>,
}

impl MeasurementRecord {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.shots as f64
    }
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    let p = p.clamp(0.0, 1.0);
    Binomial::new(n, p).expect("probability in [0, 1]").sample(rng)
}

/// Binomial draw of `shots` pattern outcomes at the exact projection
/// probability.
pub fn sample_projection(
    rho: &DensityMatrix,
    config: &ProjectionConfig,
    shots: u64,
    seed: u64,
) -> MeasurementRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = pattern_value(&bloch_decompose(rho).table(), config.copies, &config.pairs);
    sample_with(config, p, shots, &mut rng)
}

fn sample_with(
    config: &ProjectionConfig,
    p: f64,
    shots: u64,
    rng: &mut ChaCha8Rng,
) -> MeasurementRecord {
    MeasurementRecord {
        config: config.name,
        shots,
        successes: binomial(shots, p, rng),
        detectors: config.pairs.len(),
        readout: None,
    }
}

/// Flips every shot's success indicator with the pattern-level probability
/// induced by `model`.
pub fn apply_readout_noise(
    record: &MeasurementRecord,
    model: &ConfusionModel,
    seed: u64,
) -> MeasurementRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    readout_with(record, model, &mut rng)
}

fn readout_with(
    record: &MeasurementRecord,
    model: &ConfusionModel,
    rng: &mut ChaCha8Rng,
) -> MeasurementRecord {
    if model.is_ideal() {
        return record.clone();
    }
    let (keep, spurious) = model.pattern_rates(record.detectors);
    let kept = binomial(record.successes, keep, rng);
    let gained = binomial(record.shots - record.successes, spurious, rng);
    MeasurementRecord {
        successes: kept + gained,
        readout: Some(*model),
        ..record.clone()
    }
}

/// Inverse pattern-level confusion map, clipped to [0, 1].
pub fn mitigate_rate(rate: f64, detectors: usize, model: &ConfusionModel) -> Result<f64, NoiseError> {
    model.check()?;
    let (keep, spurious) = model.pattern_rates(detectors);
    Ok(((rate - spurious) / (keep - spurious)).clamp(0.0, 1.0))
}

/// Mitigated success rates of `records`, in order.
pub fn mitigate_readout(
    records: &[MeasurementRecord],
    model: &ConfusionModel,
) -> Result<Vec<f64>, NoiseError> {
    records
        .iter()
        .map(|r| mitigate_rate(r.rate(), r.detectors, model))
        .collect()
}

/// All thirteen configurations of `rho` sampled with `shots` each under
/// `noise` at depolarizing amplification `scale`. Records are in canonical
/// configuration order.
pub fn sample_projection_set(
    rho: &DensityMatrix,
    wiring: &WiringAssignment,
    shots: u64,
    noise: &NoiseConfig,
    scale: f64,
    seed: u64,
) -> Result<Vec<MeasurementRecord>, NoiseError> {
    let noisy = noise.noisy_state(rho, scale)?;
    let exact = wiring.projection_set(&noisy);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ConfigName::ALL
        .iter()
        .map(|&name| {
            let record = sample_with(wiring.config(name), exact[name], shots, &mut rng);
            readout_with(&record, &noise.readout, &mut rng)
        })
        .collect())
}

/// Writes records as CSV with columns config, shots, successes, detectors.
pub fn write_records_csv<W: Write>(records: &[MeasurementRecord], out: W) -> Result<(), NoiseError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config", "shots", "successes", "detectors"])?;
    for r in records {
        w.write_record([
            r.config.to_string(),
            r.shots.to_string(),
            r.successes.to_string(),
            r.detectors.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Deserialize)]
struct CsvRow {
    config: String,
    shots: u64,
    successes: u64,
    detectors: Option<usize>,
}

/// Reads counts written by [`write_records_csv`]; `detectors` is optional
/// and defaults to the pair count of the wiring.
pub fn read_records_csv<R: Read>(
    input: R,
    wiring: &WiringAssignment,
) -> Result<Vec<MeasurementRecord>, NoiseError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: CsvRow = row?;
        let config: ConfigName = row
            .config
            .parse()
            .map_err(|e: crate::multicopy::MulticopyError| NoiseError::InvalidParameter(e.to_string()))?;
        if row.successes > row.shots || row.shots == 0 {
            return Err(NoiseError::InvalidParameter(format!(
                "{config}: {} successes out of {} shots",
                row.successes, row.shots
            )));
        }
        out.push(MeasurementRecord {
            config,
            shots: row.shots,
            successes: row.successes,
            detectors: row.detectors.unwrap_or(wiring.config(config).pairs.len()),
            readout: None,
        });
    }
    Ok(out)
}

/// Richardson extrapolation to zero noise: the value at λ = 0 of the
/// interpolating polynomial through all `(λ, value)` points.
pub fn zero_noise_extrapolate(points: &[(f64, f64)]) -> Result<f64, NoiseError> {
    if points.len() < 2 {
        return Err(NoiseError::TooFewPoints(points.len()));
    }
    for (i, a) in points.iter().enumerate() {
        if points[..i].iter().any(|b| b.0 == a.0) {
            return Err(NoiseError::DuplicateScales);
        }
    }
    let mut total = 0.0;
    for (i, &(xi, yi)) in points.iter().enumerate() {
        let mut basis = 1.0;
        for (j, &(xj, _)) in points.iter().enumerate() {
            if i != j {
                basis *= xj / (xj - xi);
            }
        }
        total += basis * yi;
    }
    Ok(total)
}

/// Accepts `rho` when its purity reaches `threshold`.
pub fn purity_postselect(rho: &DensityMatrix, threshold: f64) -> Result<bool, NoiseError> {
    if !(threshold > 0.25 && threshold <= 1.0) {
        return Err(NoiseError::InvalidParameter(format!(
            "purity threshold {threshold} outside (0.25, 1]"
        )));
    }
    Ok(rho.purity() >= threshold)
}

/// Default post-selection threshold: 98% of the expected purity.
pub fn default_purity_threshold(expected_purity: f64) -> f64 {
    (0.98 * expected_purity).clamp(0.25 + f64::EPSILON, 1.0)
}

/// Accepts two copies whose overlap tr(ρ₁ρ₂) is at least 1 − ε.
pub fn copy_fidelity_gate(a: &DensityMatrix, b: &DensityMatrix, epsilon: f64) -> bool {
    fidelity_overlap(a, b) >= 1.0 - epsilon
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mapping {
    pub id: usize,
    pub error_rates: Vec<f64>,
    pub weight: f64,
}

/// Qubit mappings weighted by the softmax of their negated total error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingEnsemble {
    pub mappings: Vec<Mapping>,
}

impl MappingEnsemble {
    pub fn weights(&self) -> Vec<f64> {
        self.mappings.iter().map(|m| m.weight).collect()
    }
}

/// wᵢ = exp(−Σⱼ εᵢⱼ) / Σₖ exp(−Σⱼ εₖⱼ).
pub fn mapping_weights(error_rates: &[Vec<f64>]) -> Result<MappingEnsemble, NoiseError> {
    if error_rates.is_empty() {
        return Err(NoiseError::InvalidParameter("no mappings".into()));
    }
    let sums: Vec<f64> = error_rates.iter().map(|e| e.iter().sum()).collect();
    let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = sums.iter().map(|s| (min - s).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(MappingEnsemble {
        mappings: error_rates
            .iter()
            .zip(raw)
            .enumerate()
            .map(|(id, (e, w))| Mapping {
                id,
                error_rates: e.clone(),
                weight: w / total,
            })
            .collect(),
    })
}

pub fn weighted_average(values: &[f64], ensemble: &MappingEnsemble) -> Result<f64, NoiseError> {
    if values.len() != ensemble.mappings.len() {
        return Err(NoiseError::LengthMismatch {
            values: values.len(),
            weights: ensemble.mappings.len(),
        });
    }
    Ok(values
        .iter()
        .zip(&ensemble.mappings)
        .map(|(v, m)| v * m.weight)
        .sum())
}
