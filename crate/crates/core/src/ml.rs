//! Dataset generation, the ReLU regressor, exact Shapley attribution and
//! reduced-feature retraining.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multicopy::{ConfigName, WiringAssignment};
use crate::noise::{sample_projection_set, NoiseConfig, NoiseError};
use crate::qcore::{horodecki_b_oracle, negativity_oracle, random_state_with, DensityMatrix, Ensemble};

pub const HIDDEN_LAYERS: usize = 5;
pub const HIDDEN_WIDTH: usize = 9;
pub const TRAIN_FRACTION: f64 = 0.75;
pub const SHAP_BACKGROUND: usize = 256;
pub const MAX_SHAP_FEATURES: usize = 20;
const MAX_WIDTH: usize = 16;
const SPLIT_SALT: u64 = 0x5b11_7000;
const BACKGROUND_SEED: u64 = 0xb6_5eed;

/// Top-5 negativity features listed in the reference study.
pub const REFERENCE_N_FEATURES: [ConfigName; 5] = [
    ConfigName::L1,
    ConfigName::Cbar3,
    ConfigName::Lbar2,
    ConfigName::Lbar1,
    ConfigName::C3,
];

#[derive(Debug, Error)]
pub enum MlError {
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("labels have zero variance; R² is undefined")]
    ZeroVariance,
    #[error("{0} features exceed the exact-enumeration limit of {MAX_SHAP_FEATURES}")]
    TooManyFeatures(usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid features: {0}")]
    InvalidFeatures(String),
    #[error("bad dataset: {0}")]
    BadDataset(String),
    #[error("bad model: {0}")]
    BadModel(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    N,
    B,
}

impl Target {
    pub fn label(self, row: &Row) -> f64 {
        match self {
            Target::N => row.n,
            Target::B => row.b,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::N => "n",
            Target::B => "b",
        })
    }
}

impl FromStr for Target {
    type Err = MlError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "n" | "negativity" => Ok(Target::N),
            "b" | "bell" => Ok(Target::B),
            _ => Err(MlError::BadDataset(format!("unknown target `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub features: [f64; 13],
    pub n: f64,
    pub b: f64,
    pub split: Split,
}

impl Row {
    /// Exact projection features and oracle labels of `rho`.
    pub fn from_state(rho: &DensityMatrix, wiring: &WiringAssignment, split: Split) -> Self {
        Row {
            features: wiring.projection_set(rho).values,
            n: negativity_oracle(rho),
            b: horodecki_b_oracle(rho),
            split,
        }
    }

    pub fn select(&self, features: &[ConfigName]) -> Vec<f64> {
        features.iter().map(|f| self.features[f.index()]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<Row>,
}

fn row_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn split_tags(n: usize, seed: u64) -> Vec<Split> {
    let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
    let mut tags = vec![Split::Test; n];
    for &i in &order[..n_train] {
        tags[i] = Split::Train;
    }
    tags
}

fn training_state(seed: u64, index: usize) -> DensityMatrix {
    random_state_with(Ensemble::TrainingMix, &mut row_rng(seed, index))
        .expect("Ginibre draws are valid states")
}

/// `n` random states with exact projection features and oracle labels,
/// split 75/25 by a seeded shuffle.
pub fn generate_dataset(n: usize, seed: u64, wiring: &WiringAssignment) -> Dataset {
    let tags = split_tags(n, seed);
    let rows = (0..n)
        .into_par_iter()
        .map(|i| Row::from_state(&training_state(seed, i), wiring, tags[i]))
        .collect();
    Dataset { rows }
}

/// Same states as [`generate_dataset`], but with features replaced by
/// finite-shot success rates under `noise`.
pub fn generate_sampled_dataset(
    n: usize,
    seed: u64,
    wiring: &WiringAssignment,
    shots: u64,
    noise: &NoiseConfig,
) -> Result<Dataset, MlError> {
    let tags = split_tags(n, seed);
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let rho = training_state(seed, i);
            let sample_seed = row_rng(seed, i).random::<u64>() ^ 0x5a4d_0000;
            let records = sample_projection_set(&rho, wiring, shots, noise, 1.0, sample_seed)?;
            let mut features = [0.0; 13];
            for (f, r) in features.iter_mut().zip(&records) {
                *f = r.rate();
            }
            Ok(Row {
                features,
                n: negativity_oracle(&rho),
                b: horodecki_b_oracle(&rho),
                split: tags[i],
            })
        })
        .collect::<Result<Vec<_>, MlError>>()?;
    Ok(Dataset { rows })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&Row> {
        self.rows.iter().filter(|r| r.split == split).collect()
    }

    pub fn train(&self) -> Vec<&Row> {
        self.split(Split::Train)
    }

    pub fn test(&self) -> Vec<&Row> {
        self.split(Split::Test)
    }

    /// Up to [`SHAP_BACKGROUND`] training rows drawn with a fixed seed.
    pub fn background(&self) -> Vec<&Row> {
        let mut train = self.train();
        let mut rng = ChaCha8Rng::seed_from_u64(BACKGROUND_SEED);
        let k = train.len().min(SHAP_BACKGROUND);
        let (chosen, _) = train.partial_shuffle(&mut rng, k);
        chosen.to_vec()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MlError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = ConfigName::ALL.iter().map(|c| c.as_str()).collect();
        header.extend(["n_label", "b_label", "split"]);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record: Vec<String> = row.features.iter().map(|v| v.to_string()).collect();
            record.push(row.n.to_string());
            record.push(row.b.to_string());
            record.push(row.split.as_str().to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, MlError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let column = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| MlError::BadDataset(format!("missing column `{name}`")))
        };
        let feature_cols = ConfigName::ALL
            .iter()
            .map(|c| column(c.as_str()))
            .collect::<Result<Vec<_>, _>>()?;
        let (n_col, b_col, split_col) = (column("n_label")?, column("b_label")?, column("split")?);
        let mut rows = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let num = |col: usize| -> Result<f64, MlError> {
                record[col].trim().parse().map_err(|_| {
                    MlError::BadDataset(format!("row {}: bad number `{}`", line + 1, &record[col]))
                })
            };
            let mut features = [0.0; 13];
            for (f, &col) in features.iter_mut().zip(&feature_cols) {
                *f = num(col)?;
            }
            let split = match record[split_col].trim() {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(MlError::BadDataset(format!(
                        "row {}: bad split `{other}`",
                        line + 1
                    )))
                }
            };
            rows.push(Row { features, n: num(n_col)?, b: num(b_col)?, split });
        }
        Ok(Dataset { rows })
    }
}

fn check_features(features: &[ConfigName]) -> Result<(), MlError> {
    if features.is_empty() {
        return Err(MlError::InvalidFeatures("no features selected".into()));
    }
    for (i, f) in features.iter().enumerate() {
        if features[..i].contains(f) {
            return Err(MlError::InvalidFeatures(format!("`{f}` listed twice")));
        }
    }
    Ok(())
}

/// Adam hyperparameters. Early stopping follows the usual "no improvement
/// by more than `tol` for `n_iter_no_change` epochs" rule and is off when
/// `n_iter_no_change` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub l2: f64,
    pub max_iter: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: Option<usize>,
    pub tol: f64,
    pub n_iter_no_change: usize,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lr: 1e-5,
            l2: 1e-5,
            max_iter: 2000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: None,
            tol: 1e-4,
            n_iter_no_change: 0,
            seed: 0,
        }
    }
}

/// Dense layer; `weights` is row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut draw = || rng.random_range(-bound..bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let biases = (0..outputs).map(|_| draw()).collect();
        Layer { inputs, outputs, weights, biases }
    }

    #[inline]
    fn apply(&self, input: &[f64], output: &mut [f64], relu: bool) {
        for (j, out) in output.iter_mut().enumerate().take(self.outputs) {
            let row = &self.weights[j * self.inputs..(j + 1) * self.inputs];
            let z = self.biases[j] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            *out = if relu { z.max(0.0) } else { z };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub target: Target,
    pub features: Vec<ConfigName>,
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    pub hyper: Hyper,
    /// Entry 0 is the objective at initialisation, then one mean loss per epoch.
    pub training_log: Vec<f64>,
}

pub fn architecture(inputs: usize) -> Vec<usize> {
    let mut sizes = vec![inputs];
    sizes.extend([HIDDEN_WIDTH; HIDDEN_LAYERS]);
    sizes.push(1);
    sizes
}

impl MlpModel {
    /// Wraps explicit layers; the last layer must have a single output.
    pub fn from_layers(
        target: Target,
        features: Vec<ConfigName>,
        layers: Vec<Layer>,
    ) -> Result<Self, MlError> {
        let model = MlpModel {
            target,
            layer_sizes: Self::sizes_of(&layers),
            features,
            layers,
            hyper: Hyper::default(),
            training_log: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    fn sizes_of(layers: &[Layer]) -> Vec<usize> {
        let mut sizes: Vec<usize> = layers.first().map(|l| vec![l.inputs]).unwrap_or_default();
        sizes.extend(layers.iter().map(|l| l.outputs));
        sizes
    }

    fn validate(&self) -> Result<(), MlError> {
        check_features(&self.features)?;
        let bad = |m: String| Err(MlError::BadModel(m));
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        if self.layer_sizes != Self::sizes_of(&self.layers) {
            return bad("layer_sizes disagree with layers".into());
        }
        if self.layer_sizes[0] != self.features.len() {
            return bad(format!("{} inputs for {} features", self.layer_sizes[0], self.features.len()));
        }
        if *self.layer_sizes.last().unwrap() != 1 {
            return bad("output layer must have one unit".into());
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return bad(format!("layer {k} output does not feed layer {}", k + 1));
            }
        }
        for l in &self.layers {
            if l.inputs > MAX_WIDTH || l.outputs > MAX_WIDTH {
                return bad(format!("layer width above {MAX_WIDTH}"));
            }
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return bad("parameter array length mismatch".into());
            }
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut a = [0.0; MAX_WIDTH];
        let mut b = [0.0; MAX_WIDTH];
        a[..x.len()].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&a[..layer.inputs], &mut b[..layer.outputs], k < last);
            std::mem::swap(&mut a, &mut b);
        }
        a[0]
    }

    pub fn predict_row(&self, row: &Row) -> f64 {
        let mut x = [0.0; MAX_WIDTH];
        for (slot, f) in x.iter_mut().zip(&self.features) {
            *slot = row.features[f.index()];
        }
        self.predict(&x[..self.features.len()])
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, MlError> {
        let model: MlpModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
}

impl Adam {
    fn new(layers: &[Layer]) -> Self {
        let zeros: Vec<Layer> = layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        Adam { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, layers: &mut [Layer], grads: &[Layer], h: &Hyper) {
        self.t += 1;
        let lr = h.lr * (1.0 - h.beta2.powi(self.t)).sqrt() / (1.0 - h.beta1.powi(self.t));
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
                v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
                p[i] -= lr * m[i] / (v[i].sqrt() + h.epsilon);
            }
        };
        for (k, layer) in layers.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            update(&mut layer.weights, &grads[k].weights, &mut m.weights, &mut v.weights);
            update(&mut layer.biases, &grads[k].biases, &mut m.biases, &mut v.biases);
        }
    }
}

/// Scratch buffers for one mini-batch: activations per layer boundary and
/// back-propagated errors.
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    fn new(sizes: &[usize], batch: usize) -> Self {
        Workspace {
            acts: sizes.iter().map(|&s| vec![0.0; s * batch]).collect(),
            delta: vec![0.0; MAX_WIDTH * batch],
            delta_prev: vec![0.0; MAX_WIDTH * batch],
        }
    }
}

/// Squared loss ½·mean(err²) plus ½·l2·‖W‖²/batch on one batch, with its
/// gradient accumulated into `grads`.
fn batch_loss_and_grad(
    layers: &[Layer],
    x: &[f64],
    y: &[f64],
    batch: &[usize],
    l2: f64,
    ws: &mut Workspace,
    grads: &mut [Layer],
) -> f64 {
    let n = batch.len();
    let d = layers[0].inputs;
    for (s, &i) in batch.iter().enumerate() {
        ws.acts[0][s * d..(s + 1) * d].copy_from_slice(&x[i * d..(i + 1) * d]);
    }
    let last = layers.len() - 1;
    for (k, layer) in layers.iter().enumerate() {
        let (before, after) = ws.acts.split_at_mut(k + 1);
        let (input, output) = (&before[k], &mut after[0]);
        for s in 0..n {
            layer.apply(
                &input[s * layer.inputs..(s + 1) * layer.inputs],
                &mut output[s * layer.outputs..(s + 1) * layer.outputs],
                k < last,
            );
        }
    }
    let mut loss = 0.0;
    let out = &ws.acts[layers.len()];
    for (s, &i) in batch.iter().enumerate() {
        let err = out[s] - y[i];
        loss += err * err;
        ws.delta[s] = err;
    }
    let inv = 1.0 / n as f64;
    loss *= 0.5 * inv;
    loss += 0.5 * l2 * inv * layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum::<f64>();

    for k in (0..layers.len()).rev() {
        let layer = &layers[k];
        let g = &mut grads[k];
        let input = &ws.acts[k];
        let (ni, no) = (layer.inputs, layer.outputs);
        g.weights.iter_mut().zip(&layer.weights).for_each(|(gw, w)| *gw = l2 * inv * w);
        g.biases.iter_mut().for_each(|b| *b = 0.0);
        for s in 0..n {
            let a = &input[s * ni..(s + 1) * ni];
            for j in 0..no {
                let dj = ws.delta[s * no + j] * inv;
                if dj == 0.0 {
                    continue;
                }
                g.biases[j] += dj;
                for (gw, x) in g.weights[j * ni..(j + 1) * ni].iter_mut().zip(a) {
                    *gw += dj * x;
                }
            }
        }
        if k > 0 {
            for s in 0..n {
                let a = &input[s * ni..(s + 1) * ni];
                for i in 0..ni {
                    ws.delta_prev[s * ni + i] = if a[i] > 0.0 {
                        (0..no).map(|j| layer.weights[j * ni + i] * ws.delta[s * no + j]).sum()
                    } else {
                        0.0
                    };
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }
    loss
}

fn design(rows: &[&Row], features: &[ConfigName], target: Target) -> (Vec<f64>, Vec<f64>) {
    let x = rows.iter().flat_map(|r| r.select(features)).collect();
    let y = rows.iter().map(|r| target.label(r)).collect();
    (x, y)
}

/// Trains a [input, 9×5, 1] ReLU regressor on the training split with
/// mini-batch Adam. Single-threaded and deterministic for a given seed.
pub fn train_mlp(
    dataset: &Dataset,
    target: Target,
    features: &[ConfigName],
    hyper: &Hyper,
) -> Result<MlpModel, MlError> {
    check_features(features)?;
    let train = dataset.train();
    if train.is_empty() {
        return Err(MlError::Empty("training split"));
    }
    let (x, y) = design(&train, features, target);
    let n = train.len();
    let sizes = architecture(features.len());
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut layers: Vec<Layer> =
        sizes.windows(2).map(|w| Layer::glorot(w[0], w[1], &mut rng)).collect();
    let mut grads: Vec<Layer> = layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
    let batch_size = hyper.batch_size.unwrap_or(200).clamp(1, n);
    let mut ws = Workspace::new(&sizes, batch_size.max(n.min(4096)));
    let mut adam = Adam::new(&layers);

    let all: Vec<usize> = (0..n).collect();
    let mut initial = 0.0;
    for chunk in all.chunks(4096) {
        let l = batch_loss_and_grad(&layers, &x, &y, chunk, 0.0, &mut ws, &mut grads);
        initial += l * chunk.len() as f64;
    }
    initial /= n as f64;
    initial += 0.5 * hyper.l2 / n as f64 * layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum::<f64>();
    let mut log = vec![initial];

    let mut order = all;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 1..=hyper.max_iter {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            let l = batch_loss_and_grad(&layers, &x, &y, batch, hyper.l2, &mut ws, &mut grads);
            total += l * batch.len() as f64;
            adam.step(&mut layers, &grads, hyper);
        }
        let loss = total / n as f64;
        if !loss.is_finite() || layers.iter().flat_map(|l| &l.weights).any(|w| !w.is_finite()) {
            return Err(MlError::Divergence { epoch, loss });
        }
        log.push(loss);
        if hyper.n_iter_no_change > 0 {
            if loss > best - hyper.tol {
                stale += 1;
            } else {
                stale = 0;
            }
            best = best.min(loss);
            if stale > hyper.n_iter_no_change {
                break;
            }
        }
    }
    Ok(MlpModel {
        target,
        features: features.to_vec(),
        layer_sizes: sizes,
        layers,
        hyper: hyper.clone(),
        training_log: log,
    })
}

/// [`train_mlp`] on a reduced feature list (normally the SHAP top five).
pub fn train_reduced(
    dataset: &Dataset,
    target: Target,
    selected: &[ConfigName],
    hyper: &Hyper,
) -> Result<MlpModel, MlError> {
    train_mlp(dataset, target, selected, hyper)
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub target: Target,
    pub features: Vec<ConfigName>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

pub fn fit_ols(dataset: &Dataset, target: Target, features: &[ConfigName]) -> Result<LinearModel, MlError> {
    check_features(features)?;
    let train = dataset.train();
    if train.is_empty() {
        return Err(MlError::Empty("training split"));
    }
    let d = features.len();
    let a = DMatrix::from_fn(train.len(), d + 1, |i, j| {
        if j < d {
            train[i].features[features[j].index()]
        } else {
            1.0
        }
    });
    let y = DVector::from_iterator(train.len(), train.iter().map(|r| target.label(r)));
    let beta = a
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| MlError::BadDataset(format!("least squares failed: {e}")))?;
    Ok(LinearModel {
        target,
        features: features.to_vec(),
        coefficients: beta.iter().take(d).copied().collect(),
        intercept: beta[d],
    })
}

pub trait Regressor {
    fn target(&self) -> Target;
    fn predict_row(&self, row: &Row) -> f64;
}

impl Regressor for MlpModel {
    fn target(&self) -> Target {
        self.target
    }
    fn predict_row(&self, row: &Row) -> f64 {
        MlpModel::predict_row(self, row)
    }
}

impl Regressor for LinearModel {
    fn target(&self) -> Target {
        self.target
    }
    fn predict_row(&self, row: &Row) -> f64 {
        self.intercept
            + self
                .features
                .iter()
                .zip(&self.coefficients)
                .map(|(f, c)| c * row.features[f.index()])
                .sum::<f64>()
    }
}

/// Coefficient of determination of `predictions` against `labels`.
pub fn r2(labels: &[f64], predictions: &[f64]) -> Result<f64, MlError> {
    if labels.is_empty() {
        return Err(MlError::Empty("rows"));
    }
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let ss_tot: f64 = labels.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 || labels.iter().all(|y| *y == labels[0]) {
        return Err(MlError::ZeroVariance);
    }
    let ss_res: f64 = labels.iter().zip(predictions).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn labels_and_predictions<M: Regressor + ?Sized>(model: &M, rows: &[&Row]) -> (Vec<f64>, Vec<f64>) {
    let t = model.target();
    rows.iter().map(|r| (t.label(r), model.predict_row(r))).unzip()
}

pub fn r2_score<M: Regressor + ?Sized>(model: &M, rows: &[&Row]) -> Result<f64, MlError> {
    let (y, p) = labels_and_predictions(model, rows);
    r2(&y, &p)
}

pub fn mse<M: Regressor + ?Sized>(model: &M, rows: &[&Row]) -> Result<f64, MlError> {
    if rows.is_empty() {
        return Err(MlError::Empty("rows"));
    }
    let (y, p) = labels_and_predictions(model, rows);
    Ok(y.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Exact Shapley attributions for several samples against one background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapReport {
    pub features: Vec<ConfigName>,
    /// E[f] over the background.
    pub base_value: f64,
    /// One attribution vector per explained sample.
    pub phi: Vec<Vec<f64>>,
    pub predictions: Vec<f64>,
    /// Σⱼ φⱼ per sample.
    pub sums: Vec<f64>,
}

impl ShapReport {
    pub fn efficiency_residual(&self) -> f64 {
        self.sums
            .iter()
            .zip(&self.predictions)
            .map(|(s, f)| (s - (f - self.base_value)).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean_abs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.features.len()];
        for phi in &self.phi {
            for (o, p) in out.iter_mut().zip(phi) {
                *o += p.abs();
            }
        }
        let n = self.phi.len().max(1) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    /// Features paired with mean |φ|, most important first.
    pub fn ranking(&self) -> Vec<(ConfigName, f64)> {
        let mut ranked: Vec<(ConfigName, f64)> =
            self.features.iter().copied().zip(self.mean_abs()).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.index().cmp(&b.0.index())));
        ranked
    }
}

fn shapley_weights(f: usize) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    (0..f).map(|s| fact(s) * fact(f - s - 1) / fact(f)).collect()
}

/// Exact Shapley values of an arbitrary function of `inputs` reals. A
/// coalition's value is `f` averaged over `background`, with inputs outside
/// the coalition taken from the background row. Returns the base value and
/// one attribution vector per sample.
pub fn exact_shapley<F>(
    f: F,
    inputs: usize,
    samples: &[Vec<f64>],
    background: &[Vec<f64>],
) -> Result<(f64, Vec<Vec<f64>>), MlError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if inputs > MAX_SHAP_FEATURES {
        return Err(MlError::TooManyFeatures(inputs));
    }
    if background.is_empty() {
        return Err(MlError::Empty("background"));
    }
    if samples.iter().chain(background).any(|v| v.len() != inputs) {
        return Err(MlError::InvalidFeatures(format!("inputs must have length {inputs}")));
    }
    let weights = shapley_weights(inputs);
    let masks = 1usize << inputs;
    let inv_bg = 1.0 / background.len() as f64;
    let base_value = background.iter().map(|b| f(b)).sum::<f64>() * inv_bg;
    let phi = samples
        .iter()
        .map(|x| {
            let values: Vec<f64> = (0..masks)
                .into_par_iter()
                .map(|mask| {
                    let mut input = [0.0; MAX_SHAP_FEATURES];
                    let mut total = 0.0;
                    for b in background {
                        for j in 0..inputs {
                            input[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
                        }
                        total += f(&input[..inputs]);
                    }
                    total * inv_bg
                })
                .collect();
            (0..inputs)
                .map(|j| {
                    let bit = 1usize << j;
                    (0..masks)
                        .filter(|m| m & bit == 0)
                        .map(|m| weights[m.count_ones() as usize] * (values[m | bit] - values[m]))
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok((base_value, phi))
}

/// [`exact_shapley`] applied to a trained model.
pub fn shap_values(
    model: &MlpModel,
    samples: &[Vec<f64>],
    background: &[Vec<f64>],
) -> Result<ShapReport, MlError> {
    let (base_value, phi) = exact_shapley(|x| model.predict(x), model.inputs(), samples, background)?;
    let predictions = samples.iter().map(|x| model.predict(x)).collect();
    let sums = phi.iter().map(|p: &Vec<f64>| p.iter().sum()).collect();
    Ok(ShapReport { features: model.features.clone(), base_value, phi, predictions, sums })
}

/// [`shap_values`] for dataset rows, projecting onto the model's features.
pub fn shap_for_rows(model: &MlpModel, samples: &[&Row], background: &[&Row]) -> Result<ShapReport, MlError> {
    let project = |rows: &[&Row]| rows.iter().map(|r| r.select(&model.features)).collect::<Vec<_>>();
    shap_values(model, &project(samples), &project(background))
}

/// The `k` features with largest mean |φ|, ties broken by canonical order.
pub fn select_top_k(report: &ShapReport, k: usize) -> Vec<ConfigName> {
    report.ranking().into_iter().take(k).map(|(name, _)| name).collect()
}

/// Size of the intersection with [`REFERENCE_N_FEATURES`].
pub fn reference_overlap(selected: &[ConfigName]) -> usize {
    selected.iter().filter(|f| REFERENCE_N_FEATURES.contains(f)).count()
}
