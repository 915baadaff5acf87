//! Workflows behind the `qcorr` binary: parameter sweeps, shot-noise
//! studies and model evaluation.

use std::io::{Read, Write};
use std::path::Path;

use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use qcorr::estimators::{
    estimate_correlations, estimate_correlations_matrix, linear_inversion, mle_solve, qst_measure,
    MleProblem,
};
use qcorr::ml::{fit_ols, mse, r2_score, reference_overlap, Dataset, MlError, MlpModel, Row, Split, Target};
use qcorr::multicopy::{bell_from_invariants_lenient, invariants_from_projections, negativity_quartic_lenient};
use qcorr::noise::{mitigate_readout, sample_projection_set, NoiseConfig, NoiseError};
use qcorr::qcore::{horodecki, horodecki_b_oracle, negativity_oracle, werner};
use qcorr::{DensityMatrix, ProjectionSet, WiringAssignment};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<NoiseError> for CliError {
    fn from(e: NoiseError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<MlError> for CliError {
    fn from(e: MlError) -> Self {
        match e {
            MlError::Divergence { .. } | MlError::ZeroVariance => CliError::Numerical(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

pub fn read_file(path: &Path, what: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::MissingInput(format!("{what} `{}`: {e}", path.display())))
}

pub fn load_wiring(path: Option<&Path>) -> Result<WiringAssignment, CliError> {
    let path = path.ok_or_else(|| CliError::MissingInput("this method needs --wiring <json>".into()))?;
    WiringAssignment::from_json(&read_file(path, "wiring")?).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn load_noise(path: Option<&Path>) -> Result<NoiseConfig, CliError> {
    match path {
        None => Ok(NoiseConfig::default()),
        Some(p) => Ok(NoiseConfig::from_json(&read_file(p, "noise config")?)?),
    }
}

pub fn load_model(path: &Path) -> Result<MlpModel, CliError> {
    Ok(MlpModel::from_json(&read_file(path, "model")?)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(Dataset::read_csv(read_file(path, "dataset")?.as_bytes())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Werner,
    Horodecki,
}

impl Family {
    pub fn state(self, p: f64) -> Result<DensityMatrix, CliError> {
        match self {
            Family::Werner => werner(p),
            Family::Horodecki => horodecki(p),
        }
        .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Qst,
    QstMle,
    Mce,
    MceMle,
    AnnFull,
    AnnReduced,
}

impl Method {
    pub fn needs_wiring(self) -> bool {
        !matches!(self, Method::Qst | Method::QstMle)
    }
}

/// Seed for one (point, trial) cell, mixed so neighbouring cells decorrelate.
pub fn cell_seed(seed: u64, point: usize, trial: usize) -> u64 {
    let mut z = seed
        ^ (point as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (trial as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Everything one estimate needs besides the state itself.
pub struct Estimator {
    pub method: Method,
    pub noise: NoiseConfig,
    pub wiring: Option<WiringAssignment>,
    pub model_n: Option<MlpModel>,
    pub model_b: Option<MlpModel>,
}

impl Estimator {
    pub fn new(method: Method, noise: NoiseConfig) -> Self {
        Estimator { method, noise, wiring: None, model_n: None, model_b: None }
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.method.needs_wiring() && self.wiring.is_none() {
            return Err(CliError::MissingInput("this method needs --wiring <json>".into()));
        }
        if matches!(self.method, Method::AnnFull | Method::AnnReduced) {
            if self.model_n.is_none() && self.model_b.is_none() {
                return Err(CliError::MissingInput("ANN methods need --model-n and/or --model-b".into()));
            }
            for (model, target) in [(&self.model_n, Target::N), (&self.model_b, Target::B)] {
                let Some(m) = model else { continue };
                if m.target != target {
                    return Err(CliError::Usage(format!("model for {target} was trained on {}", m.target)));
                }
                let full = m.inputs() == 13;
                if full != (self.method == Method::AnnFull) {
                    return Err(CliError::Usage(format!(
                        "{:?} does not match a {}-input model",
                        self.method,
                        m.inputs()
                    )));
                }
            }
        }
        Ok(())
    }

    fn wiring(&self) -> &WiringAssignment {
        self.wiring.as_ref().expect("checked by Estimator::check")
    }

    fn readout(&self) -> Option<&qcorr::noise::ConfusionModel> {
        (!self.noise.readout.is_ideal()).then_some(&self.noise.readout)
    }

    /// Projection features, exact (`shots == 0`) or sampled and readout
    /// mitigated.
    fn projections(&self, rho: &DensityMatrix, shots: u64, seed: u64) -> Result<ProjectionSet, CliError> {
        let wiring = self.wiring();
        if shots == 0 {
            return Ok(wiring.projection_set(&self.noise.noisy_state(rho, 1.0)?));
        }
        let records = sample_projection_set(rho, wiring, shots, &self.noise, 1.0, seed)?;
        let rates = mitigate_readout(&records, &self.noise.readout)?;
        Ok(ProjectionSet { values: rates.try_into().expect("thirteen records") })
    }

    fn solve(&self, problem: &MleProblem, seed: u64) -> (f64, f64) {
        let outcome = mle_solve(problem, seed).unwrap_or_else(|e| e.best());
        estimate_correlations(&outcome.state)
    }

    /// (N̂, B̂) for one realisation of the measurement record.
    pub fn estimate(&self, rho: &DensityMatrix, shots: u64, seed: u64) -> Result<(f64, f64), CliError> {
        match self.method {
            Method::Qst | Method::QstMle => {
                let noisy = self.noise.noisy_state(rho, 1.0)?;
                let data = qst_measure(&noisy, shots, seed, self.readout());
                if self.method == Method::Qst {
                    let e = data.mitigated_expectations()?;
                    Ok(estimate_correlations_matrix(&linear_inversion(&e)))
                } else {
                    Ok(self.solve(&MleProblem::from_qst(&data), seed))
                }
            }
            Method::Mce => {
                let ps = self.projections(rho, shots, seed)?;
                let n = negativity_quartic_lenient(&ps);
                let b = bell_from_invariants_lenient(&invariants_from_projections(&ps));
                Ok((n, b))
            }
            Method::MceMle => {
                let wiring = self.wiring();
                let problem = if shots == 0 {
                    let noisy = self.noise.noisy_state(rho, 1.0)?;
                    MleProblem::from_projection_set(&wiring.projection_set(&noisy), wiring, 1e6)
                } else {
                    let records = sample_projection_set(rho, wiring, shots, &self.noise, 1.0, seed)?;
                    MleProblem::from_records(&records, wiring)
                };
                Ok(self.solve(&problem, seed))
            }
            Method::AnnFull | Method::AnnReduced => {
                let ps = self.projections(rho, shots, seed)?;
                let row = Row { features: ps.values, n: f64::NAN, b: f64::NAN, split: Split::Test };
                let predict = |m: &Option<MlpModel>| m.as_ref().map_or(f64::NAN, |m| m.predict_row(&row));
                Ok((predict(&self.model_n), predict(&self.model_b)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub family: Family,
    pub p_start: f64,
    pub p_stop: f64,
    pub p_points: usize,
    pub shots: u64,
    pub trials: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.p_start) || !unit.contains(&self.p_stop) {
            return Err(CliError::Usage("p grid must lie in [0, 1]".into()));
        }
        if self.p_points < 2 {
            return Err(CliError::Usage("--p-points must be at least 2".into()));
        }
        if self.shots > 0 && self.trials < 2 {
            return Err(CliError::Usage("sampled sweeps need at least 2 trials".into()));
        }
        let last = (self.p_points - 1) as f64;
        Ok((0..self.p_points)
            .map(|i| {
                if i + 1 == self.p_points {
                    self.p_stop
                } else {
                    self.p_start + (self.p_stop - self.p_start) * i as f64 / last
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub n_est: f64,
    pub b_est: f64,
    pub n_true: f64,
    pub b_true: f64,
    pub n_std: f64,
    pub b_std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `trials` seeded estimates (one when exact) at each grid point.
pub fn run_sweep(spec: &SweepSpec, estimator: &Estimator) -> Result<Vec<SweepRow>, CliError> {
    estimator.check()?;
    let grid = spec.grid()?;
    let trials = if spec.shots == 0 { 1 } else { spec.trials };
    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|i| (0..trials).map(move |t| (i, t))).collect();
    let states = grid.iter().map(|&p| spec.family.state(p)).collect::<Result<Vec<_>, _>>()?;
    let estimates = cells
        .par_iter()
        .map(|&(i, t)| estimator.estimate(&states[i], spec.shots, cell_seed(spec.seed, i, t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let chunk = &estimates[i * trials..(i + 1) * trials];
            let (ns, bs): (Vec<f64>, Vec<f64>) = chunk.iter().copied().unzip();
            let (n_est, n_std) = mean_std(&ns);
            let (b_est, b_std) = mean_std(&bs);
            SweepRow {
                p,
                n_est,
                b_est,
                n_true: negativity_oracle(&states[i]),
                b_true: horodecki_b_oracle(&states[i]),
                n_std,
                b_std,
            }
        })
        .collect())
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>, CliError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(CliError::from)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotsRow {
    pub shots: u64,
    pub trials: usize,
    pub n_mean: f64,
    pub n_std: f64,
    pub b_mean: f64,
    pub b_std: f64,
}

pub const MIN_STUDY_TRIALS: usize = 30;

/// Empirical spread of (N̂, B̂) at fixed p over a grid of shot counts.
pub fn shots_study(
    family: Family,
    p: f64,
    shots: &[u64],
    trials: usize,
    seed: u64,
    estimator: &Estimator,
) -> Result<Vec<ShotsRow>, CliError> {
    estimator.check()?;
    if shots.is_empty() {
        return Err(CliError::Usage("empty shot grid".into()));
    }
    if trials < MIN_STUDY_TRIALS {
        return Err(CliError::Usage(format!("shots-study needs at least {MIN_STUDY_TRIALS} trials")));
    }
    let rho = family.state(p)?;
    shots
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let runs = if s == 0 { 1 } else { trials };
            let estimates = (0..runs)
                .into_par_iter()
                .map(|t| estimator.estimate(&rho, s, cell_seed(seed, i, t)))
                .collect::<Result<Vec<_>, _>>()?;
            let (ns, bs): (Vec<f64>, Vec<f64>) = estimates.into_iter().unzip();
            let (n_mean, n_std) = mean_std(&ns);
            let (b_mean, b_std) = mean_std(&bs);
            Ok(ShotsRow { shots: s, trials: runs, n_mean, n_std, b_mean, b_std })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub target: Target,
    pub features: Vec<String>,
    pub test_rows: usize,
    pub test_r2: f64,
    pub test_mse: f64,
    /// R² of least squares on the same features and split.
    pub ols_r2: f64,
    pub werner_mae: Option<f64>,
    pub horodecki_mae: Option<f64>,
    /// Overlap with the reference negativity feature set (N models only).
    pub reference_overlap: Option<usize>,
}

pub const EVAL_GRID_POINTS: usize = 101;

/// Mean absolute error of `model` against the oracle on an exact family sweep.
pub fn family_mae(model: &MlpModel, wiring: &WiringAssignment, family: Family) -> Result<f64, CliError> {
    let mut total = 0.0;
    for i in 0..EVAL_GRID_POINTS {
        let p = i as f64 / (EVAL_GRID_POINTS - 1) as f64;
        let row = Row::from_state(&family.state(p)?, wiring, Split::Test);
        total += (model.predict_row(&row) - model.target.label(&row)).abs();
    }
    Ok(total / EVAL_GRID_POINTS as f64)
}

pub fn evaluate(model: &MlpModel, data: &Dataset, wiring: Option<&WiringAssignment>) -> Result<Evaluation, CliError> {
    let test = data.test();
    let ols = fit_ols(data, model.target, &model.features)?;
    let mae = |f| wiring.map(|w| family_mae(model, w, f)).transpose();
    Ok(Evaluation {
        target: model.target,
        features: model.features.iter().map(|f| f.to_string()).collect(),
        test_rows: test.len(),
        test_r2: r2_score(model, &test)?,
        test_mse: mse(model, &test)?,
        ols_r2: r2_score(&ols, &test)?,
        werner_mae: mae(Family::Werner)?,
        horodecki_mae: mae(Family::Horodecki)?,
        reference_overlap: (model.target == Target::N).then(|| reference_overlap(&model.features)),
    })
}
