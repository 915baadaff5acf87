//! Tomography baseline and maximum-likelihood reconstruction.
//!
//! Outcome bit 0 of a Pauli measurement is the +1 eigenvalue.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multicopy::{
    pattern_gradient, pattern_value, ConfigName, ProjectionConfig, ProjectionSet, WiringAssignment,
};
use crate::noise::{ConfusionModel, MeasurementRecord, NoiseError};
use crate::qcore::{
    correlation_table, horodecki_b_oracle, negativity_of_matrix, negativity_oracle, pauli_pair,
    BlochForm, DensityMatrix, Mat4, C64,
};

const PAULI_LABELS: [char; 4] = ['0', 'x', 'y', 'z'];

/// Pauli index pair (i, j), 0 meaning identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliSetting {
    pub a: usize,
    pub b: usize,
}

impl PauliSetting {
    pub fn is_local(&self) -> bool {
        self.a == 0 || self.b == 0
    }

    /// Outcome effects in outcome order; two for local settings, four
    /// (index 2·bitₐ + bit_b) otherwise.
    pub fn effects(&self) -> Vec<Mat4> {
        let sign = |bit: usize| if bit == 0 { 1.0 } else { -1.0 };
        let local = |i: usize, bit: usize, first: bool| {
            let s = sign(bit);
            let id = pauli_pair(0, 0);
            let op = if first { pauli_pair(i, 0) } else { pauli_pair(0, i) };
            (id + op.scale(s)).scale(0.5)
        };
        match (self.a, self.b) {
            (i, 0) => (0..2).map(|bit| local(i, bit, true)).collect(),
            (0, j) => (0..2).map(|bit| local(j, bit, false)).collect(),
            (i, j) => (0..4)
                .map(|k| local(i, k >> 1, true) * local(j, k & 1, false))
                .collect(),
        }
    }
}

impl fmt::Display for PauliSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", PAULI_LABELS[self.a], PAULI_LABELS[self.b])
    }
}

/// The 9 correlator settings followed by the 6 local ones.
pub fn qst_settings() -> Vec<PauliSetting> {
    let mut out = Vec::with_capacity(15);
    for a in 1..4 {
        for b in 1..4 {
            out.push(PauliSetting { a, b });
        }
    }
    for a in 1..4 {
        out.push(PauliSetting { a, b: 0 });
    }
    for b in 1..4 {
        out.push(PauliSetting { a: 0, b });
    }
    out
}

/// Observed outcome frequencies of one setting. `shots == 0` marks exact
/// probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingData {
    pub setting: PauliSetting,
    pub counts: Vec<f64>,
    pub shots: u64,
}

impl SettingData {
    pub fn frequencies(&self) -> Vec<f64> {
        let total: f64 = self.counts.iter().sum();
        self.counts.iter().map(|c| c / total).collect()
    }
}

fn expectation_of(freq: &[f64]) -> f64 {
    match freq.len() {
        2 => freq[0] - freq[1],
        _ => freq[0] - freq[1] - freq[2] + freq[3],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QstData {
    pub settings: Vec<SettingData>,
    pub readout: Option<ConfusionModel>,
}

impl QstData {
    /// Raw expectation values in [`qst_settings`] order.
    pub fn expectations(&self) -> [f64; 15] {
        let mut out = [0.0; 15];
        for (o, s) in out.iter_mut().zip(&self.settings) {
            *o = expectation_of(&s.frequencies());
        }
        out
    }

    /// Expectations after inverting the readout confusion.
    pub fn mitigated_expectations(&self) -> Result<[f64; 15], NoiseError> {
        let Some(model) = self.readout else {
            return Ok(self.expectations());
        };
        model.check()?;
        let mut out = [0.0; 15];
        for (o, s) in out.iter_mut().zip(&self.settings) {
            let f = s.frequencies();
            let fixed = if f.len() == 2 {
                let c = model.matrix();
                let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
                vec![
                    (c[1][1] * f[0] - c[0][1] * f[1]) / det,
                    (-c[1][0] * f[0] + c[0][0] * f[1]) / det,
                ]
            } else {
                model
                    .mitigate_pair_distribution([f[0], f[1], f[2], f[3]])?
                    .to_vec()
            };
            *o = expectation_of(&fixed);
        }
        Ok(out)
    }
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    Binomial::new(n, p.clamp(0.0, 1.0)).expect("valid probability").sample(rng)
}

/// Multinomial draw by successive conditional binomials.
fn multinomial(n: u64, probs: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for (k, &p) in probs.iter().enumerate() {
        let draw = if k + 1 == probs.len() || mass <= 0.0 {
            left
        } else {
            binomial(left, (p / mass).clamp(0.0, 1.0), rng)
        };
        out.push(draw as f64);
        left -= draw;
        mass -= p;
    }
    out
}

/// Outcome probabilities of every setting, with readout confusion applied.
fn setting_probabilities(rho: &Mat4, setting: PauliSetting, noise: Option<&ConfusionModel>) -> Vec<f64> {
    let ideal: Vec<f64> = setting
        .effects()
        .iter()
        .map(|e| (rho * e).trace().re.max(0.0))
        .collect();
    match noise {
        None => ideal,
        Some(model) if ideal.len() == 2 => {
            let c = model.matrix();
            vec![
                c[0][0] * ideal[0] + c[0][1] * ideal[1],
                c[1][0] * ideal[0] + c[1][1] * ideal[1],
            ]
        }
        Some(model) => model
            .corrupt_pair_distribution([ideal[0], ideal[1], ideal[2], ideal[3]])
            .to_vec(),
    }
}

/// Samples `shots` outcomes of each of the 15 settings, or returns exact
/// probabilities when `shots == 0`.
pub fn qst_measure(
    rho: &DensityMatrix,
    shots: u64,
    seed: u64,
    noise: Option<&ConfusionModel>,
) -> QstData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let settings = qst_settings()
        .into_iter()
        .map(|setting| {
            let probs = setting_probabilities(rho.matrix(), setting, noise);
            let counts = if shots == 0 {
                probs
            } else {
                multinomial(shots, &probs, &mut rng)
            };
            SettingData {
                setting,
                counts,
                shots,
            }
        })
        .collect();
    QstData {
        settings,
        readout: noise.copied(),
    }
}

/// ρ̂ = ¼(𝟙⊗𝟙 + Σ e_{ij} σᵢ⊗σⱼ), Hermitian with unit trace but not
/// necessarily positive.
pub fn linear_inversion(expectations: &[f64; 15]) -> Mat4 {
    let mut m = pauli_pair(0, 0);
    for (s, e) in qst_settings().iter().zip(expectations) {
        m += pauli_pair(s.a, s.b).scale(*e);
    }
    m.scale(0.25)
}

/// (negativity, Bell measure) of a state.
pub fn estimate_correlations(rho: &DensityMatrix) -> (f64, f64) {
    (negativity_oracle(rho), horodecki_b_oracle(rho))
}

/// Same as [`estimate_correlations`] for an arbitrary Hermitian estimate.
pub fn estimate_correlations_matrix(m: &Mat4) -> (f64, f64) {
    (negativity_of_matrix(m), BlochForm::from_matrix(m).bell_measure())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    Real,
    Complex,
}

/// One independent block of observed counts.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// Counts of mutually exclusive outcomes with effects Eₖ (pₖ = tr ρEₖ).
    Multinomial { effects: Vec<Mat4>, counts: Vec<f64> },
    /// Successes of a singlet pattern; success probability
    /// spurious + (keep − spurious)·value(ρ).
    Pattern {
        config: ProjectionConfig,
        successes: f64,
        shots: f64,
        keep: f64,
        spurious: f64,
    },
}

impl Observation {
    fn weight(&self) -> f64 {
        match self {
            Observation::Multinomial { counts, .. } => counts.iter().sum(),
            Observation::Pattern { shots, .. } => *shots,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleProblem {
    pub observations: Vec<Observation>,
    /// λ in Σ n log p + λ tr ρ², in count units.
    pub purity_weight: f64,
    pub parametrization: Parametrization,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl MleProblem {
    pub fn new(observations: Vec<Observation>) -> Self {
        MleProblem {
            observations,
            purity_weight: 0.0,
            parametrization: Parametrization::Complex,
            max_iterations: 10_000,
            gradient_tolerance: 1e-8,
        }
    }

    pub fn with_purity_weight(mut self, lambda: f64) -> Self {
        self.purity_weight = lambda;
        self
    }

    pub fn with_parametrization(mut self, p: Parametrization) -> Self {
        self.parametrization = p;
        self
    }

    /// Tomography counts, with the readout model folded into the effects.
    pub fn from_qst(data: &QstData) -> Self {
        let observations = data
            .settings
            .iter()
            .map(|s| {
                let ideal = s.setting.effects();
                let effects = match data.readout {
                    None => ideal,
                    Some(model) => {
                        let c = model.matrix();
                        (0..ideal.len())
                            .map(|r| {
                                let mut e = Mat4::zeros();
                                for (t, it) in ideal.iter().enumerate() {
                                    let w = if ideal.len() == 2 {
                                        c[r][t]
                                    } else {
                                        c[r >> 1][t >> 1] * c[r & 1][t & 1]
                                    };
                                    e += it.scale(w);
                                }
                                e
                            })
                            .collect()
                    }
                };
                Observation::Multinomial {
                    effects,
                    counts: s.counts.clone(),
                }
            })
            .collect();
        MleProblem::new(observations)
    }

    /// Multicopy counts; each record's readout model enters its pattern
    /// success probability.
    pub fn from_records(records: &[MeasurementRecord], wiring: &WiringAssignment) -> Self {
        let observations = records
            .iter()
            .map(|r| {
                let (keep, spurious) = r
                    .readout
                    .map_or((1.0, 0.0), |m| m.pattern_rates(r.detectors));
                Observation::Pattern {
                    config: wiring.config(r.config).clone(),
                    successes: r.successes as f64,
                    shots: r.shots as f64,
                    keep,
                    spurious,
                }
            })
            .collect();
        MleProblem::new(observations)
    }

    /// Exact projection probabilities, each weighted as `shots` trials.
    pub fn from_projection_set(ps: &ProjectionSet, wiring: &WiringAssignment, shots: f64) -> Self {
        let observations = ConfigName::ALL
            .iter()
            .map(|&n| Observation::Pattern {
                config: wiring.config(n).clone(),
                successes: ps[n] * shots,
                shots,
                keep: 1.0,
                spurious: 0.0,
            })
            .collect();
        MleProblem::new(observations)
    }

    pub fn total_counts(&self) -> f64 {
        self.observations.iter().map(Observation::weight).sum()
    }

    /// (Σ n log p + λ tr ρ²) / max(total counts, 1).
    pub fn objective(&self, rho: &Mat4) -> f64 {
        self.evaluate(rho, false).0
    }

    /// Objective and its gradient G with d(objective) = tr(G dρ).
    fn evaluate(&self, rho: &Mat4, want_grad: bool) -> (f64, Mat4) {
        let norm = self.total_counts().max(1.0);
        let mut value = self.purity_weight * (rho * rho).trace().re;
        let mut grad = if want_grad {
            rho.scale(2.0 * self.purity_weight)
        } else {
            Mat4::zeros()
        };
        let mut table = None;
        for obs in &self.observations {
            match obs {
                Observation::Multinomial { effects, counts } => {
                    for (e, &n) in effects.iter().zip(counts) {
                        if n <= 0.0 {
                            continue;
                        }
                        let p = (rho * e).trace().re;
                        if p <= 0.0 {
                            return (f64::NEG_INFINITY, grad);
                        }
                        value += n * p.ln();
                        if want_grad {
                            grad += e.scale(n / p);
                        }
                    }
                }
                Observation::Pattern {
                    config,
                    successes,
                    shots,
                    keep,
                    spurious,
                } => {
                    let t = table.get_or_insert_with(|| correlation_table(rho));
                    let v = pattern_value(t, config.copies, &config.pairs);
                    let p = spurious + (keep - spurious) * v;
                    let fail = shots - successes;
                    let mut d = 0.0;
                    for (n, q, s) in [(*successes, p, 1.0), (fail, 1.0 - p, -1.0)] {
                        if n <= 0.0 {
                            continue;
                        }
                        if q <= 0.0 {
                            return (f64::NEG_INFINITY, grad);
                        }
                        value += n * q.ln();
                        d += s * n / q;
                    }
                    if want_grad && d != 0.0 {
                        let g = pattern_gradient(t, config.copies, &config.pairs);
                        let scale = d * (keep - spurious);
                        for (mu, row) in g.iter().enumerate() {
                            for (nu, &gv) in row.iter().enumerate() {
                                if gv != 0.0 {
                                    grad += pauli_pair(mu, nu).scale(scale * gv);
                                }
                            }
                        }
                    }
                }
            }
        }
        (value / norm, grad.unscale(norm))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleOutcome {
    pub state: DensityMatrix,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Error)]
pub enum MleError {
    #[error("MLE did not converge after {} iterations (gradient norm {:e})", .0.iterations, .0.gradient_norm)]
    NonConvergence(Box<MleOutcome>),
}

impl MleError {
    /// The best iterate reached.
    pub fn best(self) -> MleOutcome {
        match self {
            MleError::NonConvergence(o) => *o,
        }
    }
}

struct Factor {
    complex: bool,
}

impl Factor {
    fn len(&self) -> usize {
        if self.complex {
            32
        } else {
            16
        }
    }

    fn matrix(&self, x: &[f64]) -> Mat4 {
        Mat4::from_fn(|r, c| {
            let im = if self.complex { x[16 + 4 * r + c] } else { 0.0 };
            C64::new(x[4 * r + c], im)
        })
    }

    fn rho(&self, x: &[f64]) -> (Mat4, Mat4, f64) {
        let t = self.matrix(x);
        let a = t * t.adjoint();
        let tr = a.trace().re;
        (t, a.unscale(tr), tr)
    }

    /// Gradient with respect to x from the ρ-gradient G.
    fn pullback(&self, t: &Mat4, rho: &Mat4, tr: f64, g: &Mat4) -> Vec<f64> {
        let shift = (g * rho).trace().re;
        let gp = (g - Mat4::identity().scale(shift)).unscale(tr);
        let gt = (gp + gp.adjoint()) * t;
        let mut out = vec![0.0; self.len()];
        for r in 0..4 {
            for c in 0..4 {
                out[4 * r + c] = gt[(r, c)].re;
                if self.complex {
                    out[16 + 4 * r + c] = gt[(r, c)].im;
                }
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Maximizes the problem's objective over ρ = TT†/tr(TT†), starting from
/// 𝟙/4, with L-BFGS directions and a monotone backtracking line search.
/// The seed perturbs the starting factor slightly to break the symmetry of
/// the maximally mixed point.
pub fn mle_solve(problem: &MleProblem, seed: u64) -> Result<MleOutcome, MleError> {
    let factor = Factor {
        complex: problem.parametrization == Parametrization::Complex,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = rand_distr::Uniform::new(-1e-3, 1e-3).expect("valid range");
    let mut x: Vec<f64> = (0..factor.len())
        .map(|k| {
            let diag = k < 16 && k % 5 == 0;
            (if diag { 0.5 } else { 0.0 }) + jitter.sample(&mut rng)
        })
        .collect();

    let eval = |x: &[f64]| {
        let (t, rho, tr) = factor.rho(x);
        let (f, g) = problem.evaluate(&rho, true);
        (f, factor.pullback(&t, &rho, tr, &g))
    };

    let (mut f, mut g) = eval(&x);
    let memory = 8;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;

    while iterations < problem.max_iterations {
        let gnorm = norm(&g);
        if gnorm <= problem.gradient_tolerance {
            break;
        }
        iterations += 1;

        // two-loop recursion on the ascent problem (minimizing −f)
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0 / gnorm.max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope > 0.0) {
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| v / gnorm.max(1.0)).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = eval(&trial);
            if ft.is_finite() && ft >= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // y for minimizing −f
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| b - a).collect();
        if dot(&s, &y) > 1e-16 * norm(&s) * norm(&y) {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        x = xn;
        f = fnew;
        g = gn;
        // keep the factor well scaled; ρ is invariant under T → cT
        let scale = factor.matrix(&x).norm();
        if !(0.1..10.0).contains(&scale) {
            x.iter_mut().for_each(|v| *v /= scale);
            g.iter_mut().for_each(|v| *v *= scale);
            s_hist.clear();
            y_hist.clear();
        }
    }

    let (_, rho, _) = factor.rho(&x);
    let outcome = MleOutcome {
        state: DensityMatrix::from_trusted(rho),
        objective: f,
        gradient_norm: norm(&g),
        iterations,
    };
    if outcome.gradient_norm <= problem.gradient_tolerance {
        Ok(outcome)
    } else {
        Err(MleError::NonConvergence(Box::new(outcome)))
    }
}
