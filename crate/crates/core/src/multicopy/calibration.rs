//! Resolution of the configuration wirings against the density-matrix
//! oracles.
//!
//! Configurations are searched group by group, each group being the set of
//! names that first appears in one oracle identity:
//!
//! | group | configurations                 | identity                      |
//! |-------|--------------------------------|-------------------------------|
//! | I₂    | l1, c1, c2                     | I₂ = tr βᵀβ, Π₂ = tr ρ²       |
//! | I₃    | l2, c3, c4, c5                 | I₃ = tr (βᵀβ)²                |
//! | I₁    | l0, cbar1, lbar1, cbar2, lbar2 | I₁ = det β, a₁ from ρ^Γ       |
//! | a₀    | cbar3                          | a₀ from ρ^Γ                   |
//!
//! Within a group, combinations are tried in lexicographic order of their
//! pair lists and the first one passing the tolerance is kept; a later group
//! failing backtracks into the earlier ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    bell_from_invariants_with, invariants_from_projections, negativity_quartic, pattern_value,
    pi2_from_projections, quartic_coefficients, Class, ConfigName, MulticopyError,
    ProjectionConfig, ProjectionSet, Qubit, QubitPair,
};
use crate::qcore::{
    bloch_decompose, hermitian_eigenvalues, horodecki, horodecki_b_oracle, negativity_oracle,
    partial_transpose, random_state, werner, DensityMatrix, Ensemble,
};

/// Sign convention for the constant term of the characteristic cubic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubicConstant {
    /// c₀ = −I₁²
    NegativeSquare,
    /// c₀ = +I₁²
    PositiveSquare,
}

impl CubicConstant {
    pub fn sign(self) -> f64 {
        match self {
            CubicConstant::NegativeSquare => -1.0,
            CubicConstant::PositiveSquare => 1.0,
        }
    }
}

/// Structural description of the pattern searched for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigShape {
    pub class: Class,
    pub copies: usize,
    pub pairs: usize,
}

impl ConfigShape {
    pub fn of(name: ConfigName) -> Self {
        use ConfigName::*;
        let (copies, pairs) = match name {
            L0 => (1, 1),
            L1 => (2, 2),
            L2 => (4, 4),
            C1 | C2 => (2, 1),
            C3 => (3, 2),
            C4 | C5 => (4, 3),
            Cbar1 => (2, 1),
            Cbar2 => (3, 2),
            Cbar3 => (4, 3),
            Lbar1 => (2, 2),
            Lbar2 => (3, 3),
        };
        ConfigShape {
            class: name.class(),
            copies,
            pairs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Largest number of copies a pattern may span. Shapes needing more are
    /// replaced by every class-consistent pattern on at most this many.
    pub max_copies: usize,
    pub tolerance: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            max_copies: 4,
            tolerance: 1e-9,
        }
    }
}

/// All valid pair sets matching `shape` that touch every copy, with
/// duplicates (patterns of identical value on every state) removed. The
/// lexicographically smallest representative is kept and the result is
/// sorted by pair list.
pub fn enumerate_candidates(
    name: ConfigName,
    shape: ConfigShape,
    max_copies: usize,
) -> Vec<ProjectionConfig> {
    let mut raw = Vec::new();
    if shape.copies <= max_copies {
        matchings(name, shape.copies, Some(shape.pairs), &mut raw);
    } else {
        for copies in 1..=max_copies {
            matchings(name, copies, None, &mut raw);
        }
    }
    raw.sort_by(|x, y| x.pairs.cmp(&y.pairs).then(x.copies.cmp(&y.copies)));
    dedupe(raw)
}

fn matchings(name: ConfigName, copies: usize, pairs: Option<usize>, out: &mut Vec<ProjectionConfig>) {
    let mut qubits: Vec<Qubit> = (1..=copies as u8)
        .flat_map(|c| [Qubit::a(c), Qubit::b(c)])
        .collect();
    qubits.sort();
    let mut current = Vec::new();
    extend(&qubits, 0, &mut vec![false; qubits.len()], &mut current, &mut |set| {
        if pairs.is_some_and(|k| set.len() != k) || set.is_empty() {
            return;
        }
        let touched = (0..copies).all(|c| {
            set.iter()
                .any(|p: &QubitPair| p.first().copy_index() == c || p.second().copy_index() == c)
        });
        if touched {
            if let Ok(cfg) = ProjectionConfig::new(name, copies, set.to_vec()) {
                out.push(cfg);
            }
        }
    });
}

/// Visits every partial matching of `qubits` (each qubit either skipped or
/// paired with a later unused one).
fn extend(
    qubits: &[Qubit],
    start: usize,
    used: &mut Vec<bool>,
    current: &mut Vec<QubitPair>,
    visit: &mut impl FnMut(&[QubitPair]),
) {
    let Some(i) = (start..qubits.len()).find(|&i| !used[i]) else {
        visit(current);
        return;
    };
    used[i] = true;
    extend(qubits, i + 1, used, current, visit);
    for j in i + 1..qubits.len() {
        if !used[j] {
            used[j] = true;
            current.push(QubitPair::new(qubits[i], qubits[j]));
            extend(qubits, i + 1, used, current, visit);
            current.pop();
            used[j] = false;
        }
    }
    used[i] = false;
}

fn probe_tables() -> Vec<[[f64; 4]; 4]> {
    (0..3u64)
        .map(|seed| {
            let rho = random_state(Ensemble::GinibreFull, 0x5eed_0000 + seed)
                .expect("full-rank ensemble");
            bloch_decompose(&rho).table()
        })
        .collect()
}

fn dedupe(candidates: Vec<ProjectionConfig>) -> Vec<ProjectionConfig> {
    let probes = probe_tables();
    let mut kept: Vec<(ProjectionConfig, Vec<f64>)> = Vec::new();
    for cfg in candidates {
        let sig: Vec<f64> = probes
            .iter()
            .map(|t| pattern_value(t, cfg.copies, &cfg.pairs))
            .collect();
        let duplicate = kept
            .iter()
            .any(|(_, s)| s.iter().zip(&sig).all(|(x, y)| (x - y).abs() <= 1e-12));
        if !duplicate {
            kept.push((cfg, sig));
        }
    }
    kept.into_iter().map(|(c, _)| c).collect()
}

/// Resolved wiring of all thirteen configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct WiringAssignment {
    configs: Vec<ProjectionConfig>,
    group_residuals: [f64; 13],
    /// Largest deviation of any checked identity over the validation set.
    pub residual: f64,
    pub cubic_constant: CubicConstant,
}

#[derive(Serialize, Deserialize)]
struct EntryDoc {
    copies: usize,
    pairs: Vec<[String; 2]>,
    residual: f64,
}

#[derive(Serialize, Deserialize)]
struct WiringDoc {
    configs: BTreeMap<String, EntryDoc>,
    residual: f64,
    cubic_constant: CubicConstant,
}

impl WiringAssignment {
    pub fn config(&self, name: ConfigName) -> &ProjectionConfig {
        &self.configs[name.index()]
    }

    pub fn configs(&self) -> &[ProjectionConfig] {
        &self.configs
    }

    /// Residual of the identity group in which `name` was resolved.
    pub fn config_residual(&self, name: ConfigName) -> f64 {
        self.group_residuals[name.index()]
    }

    /// Exact values of all thirteen configurations for `rho`.
    pub fn projection_set(&self, rho: &DensityMatrix) -> ProjectionSet {
        self.projection_set_from_table(&bloch_decompose(rho).table())
    }

    pub fn projection_set_from_table(&self, table: &[[f64; 4]; 4]) -> ProjectionSet {
        ProjectionSet::from_fn(|n| {
            let c = self.config(n);
            pattern_value(table, c.copies, &c.pairs)
        })
    }

    pub fn negativity(&self, rho: &DensityMatrix) -> Result<f64, MulticopyError> {
        negativity_quartic(&self.projection_set(rho))
    }

    pub fn bell(&self, rho: &DensityMatrix) -> Result<f64, MulticopyError> {
        self.bell_from_projections(&self.projection_set(rho))
    }

    pub fn bell_from_projections(&self, ps: &ProjectionSet) -> Result<f64, MulticopyError> {
        bell_from_invariants_with(&invariants_from_projections(ps), self.cubic_constant)
    }

    pub fn to_json(&self) -> String {
        let doc = WiringDoc {
            configs: ConfigName::ALL
                .iter()
                .map(|&n| {
                    let c = self.config(n);
                    let entry = EntryDoc {
                        copies: c.copies,
                        pairs: c.pair_labels(),
                        residual: self.config_residual(n),
                    };
                    (n.to_string(), entry)
                })
                .collect(),
            residual: self.residual,
            cubic_constant: self.cubic_constant,
        };
        serde_json::to_string_pretty(&doc).expect("wiring serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MulticopyError> {
        let doc: WiringDoc =
            serde_json::from_str(text).map_err(|e| MulticopyError::BadWiring(e.to_string()))?;
        let mut configs = Vec::with_capacity(13);
        let mut group_residuals = [0.0; 13];
        for name in ConfigName::ALL {
            let entry = doc
                .configs
                .get(name.as_str())
                .ok_or_else(|| MulticopyError::BadWiring(format!("missing `{name}`")))?;
            let pairs = entry
                .pairs
                .iter()
                .map(|[x, y]| Ok(QubitPair::new(x.parse()?, y.parse()?)))
                .collect::<Result<Vec<_>, MulticopyError>>()?;
            configs.push(ProjectionConfig::new(name, entry.copies, pairs)?);
            group_residuals[name.index()] = entry.residual;
        }
        if let Some(extra) = doc.configs.keys().find(|k| k.parse::<ConfigName>().is_err()) {
            return Err(MulticopyError::UnknownConfig(extra.clone()));
        }
        Ok(WiringAssignment {
            configs,
            group_residuals,
            residual: doc.residual,
            cubic_constant: doc.cubic_constant,
        })
    }
}

/// Werner and Horodecki grids (p = 0, 0.1, …, 1) plus 100 states of the
/// training mixture.
pub fn default_validation_states() -> Vec<DensityMatrix> {
    let mut states = Vec::new();
    for i in 0..=10 {
        let p = f64::from(i) / 10.0;
        states.push(werner(p).expect("p in range"));
        states.push(horodecki(p).expect("p in range"));
    }
    for seed in 0..100 {
        states.push(random_state(Ensemble::TrainingMix, 1_000 + seed).expect("valid ensemble"));
    }
    states
}

struct Reference {
    table: [[f64; 4]; 4],
    i1: f64,
    i2: f64,
    i3: f64,
    purity: f64,
    a1: f64,
    a0: f64,
    negativity: f64,
    bell: f64,
}

impl Reference {
    fn new(rho: &DensityMatrix) -> Self {
        let form = bloch_decompose(rho);
        let inv = form.invariants();
        // quartic 3∏(N + 2λᵢ) over the eigenvalues λ of ρ^Γ
        let x = hermitian_eigenvalues(&partial_transpose(rho)).map(|l| 2.0 * l);
        let e3 = x[0] * x[1] * x[2] + x[0] * x[1] * x[3] + x[0] * x[2] * x[3] + x[1] * x[2] * x[3];
        let e4 = x[0] * x[1] * x[2] * x[3];
        Reference {
            table: form.table(),
            i1: inv.i1,
            i2: inv.i2,
            i3: inv.i3,
            purity: rho.purity(),
            a1: 3.0 * e3,
            a0: 3.0 * e4,
            negativity: negativity_oracle(rho),
            bell: horodecki_b_oracle(rho),
        }
    }
}

struct Group {
    label: &'static str,
    names: &'static [ConfigName],
    check: fn(&ProjectionSet, &Reference) -> f64,
}

const GROUPS: [Group; 4] = [
    Group {
        label: "I2 (l1, c1, c2)",
        names: &[ConfigName::L1, ConfigName::C1, ConfigName::C2],
        check: |ps, r| {
            let i2 = invariants_from_projections(ps).i2;
            (i2 - r.i2).abs().max((pi2_from_projections(ps) - r.purity).abs())
        },
    },
    Group {
        label: "I3 (l2, c3, c4, c5)",
        names: &[ConfigName::L2, ConfigName::C3, ConfigName::C4, ConfigName::C5],
        check: |ps, r| (invariants_from_projections(ps).i3 - r.i3).abs(),
    },
    Group {
        label: "I1 (l0, cbar1, lbar1, cbar2, lbar2)",
        names: &[
            ConfigName::L0,
            ConfigName::Cbar1,
            ConfigName::Lbar1,
            ConfigName::Cbar2,
            ConfigName::Lbar2,
        ],
        check: |ps, r| {
            let i1 = invariants_from_projections(ps).i1;
            (i1 - r.i1).abs().max((quartic_coefficients(ps)[3] - r.a1).abs())
        },
    },
    Group {
        label: "a0 (cbar3)",
        names: &[ConfigName::Cbar3],
        check: |ps, r| (quartic_coefficients(ps)[4] - r.a0).abs(),
    },
];

struct Search<'a> {
    refs: &'a [Reference],
    /// candidate configs and their values on each reference state
    candidates: Vec<Vec<(ProjectionConfig, Vec<f64>)>>,
    sets: Vec<ProjectionSet>,
    chosen: Vec<Option<ProjectionConfig>>,
    group_residuals: [f64; 13],
    tolerance: f64,
    deepest: (usize, f64),
}

impl Search<'_> {
    fn run(&mut self, group: usize) -> bool {
        if group == GROUPS.len() {
            return true;
        }
        let g = &GROUPS[group];
        let sizes: Vec<usize> = g.names.iter().map(|n| self.candidates[n.index()].len()).collect();
        if sizes.contains(&0) {
            self.note_failure(group, f64::INFINITY);
            return false;
        }
        let mut odometer = vec![0usize; g.names.len()];
        let mut best = f64::INFINITY;
        loop {
            for (slot, name) in g.names.iter().enumerate() {
                let (_, values) = &self.candidates[name.index()][odometer[slot]];
                for (set, v) in self.sets.iter_mut().zip(values) {
                    set.set(*name, *v);
                }
            }
            let residual = self
                .sets
                .iter()
                .zip(self.refs)
                .map(|(ps, r)| (g.check)(ps, r))
                .fold(0.0, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });
            best = best.min(residual);
            if residual <= self.tolerance {
                for (slot, name) in g.names.iter().enumerate() {
                    self.chosen[name.index()] =
                        Some(self.candidates[name.index()][odometer[slot]].0.clone());
                    self.group_residuals[name.index()] = residual;
                }
                if self.run(group + 1) {
                    return true;
                }
            }
            // advance, last slot fastest
            let mut k = odometer.len();
            loop {
                if k == 0 {
                    self.note_failure(group, best);
                    return false;
                }
                k -= 1;
                odometer[k] += 1;
                if odometer[k] < sizes[k] {
                    break;
                }
                odometer[k] = 0;
            }
        }
    }

    fn note_failure(&mut self, group: usize, best: f64) {
        let (depth, residual) = self.deepest;
        if group > depth || (group == depth && best < residual) {
            self.deepest = (group, best);
        }
    }
}

/// Resolves every configuration's pair set so that all projection formulas
/// reproduce the oracles on `validation` to `options.tolerance`.
pub fn calibrate_wiring(
    validation: &[DensityMatrix],
    options: &CalibrationOptions,
) -> Result<WiringAssignment, MulticopyError> {
    if validation.len() < 100 {
        return Err(MulticopyError::InvalidConfig(format!(
            "calibration needs at least 100 validation states, got {}",
            validation.len()
        )));
    }
    let refs: Vec<Reference> = validation.iter().map(Reference::new).collect();
    let candidates = ConfigName::ALL
        .iter()
        .map(|&n| {
            enumerate_candidates(n, ConfigShape::of(n), options.max_copies)
                .into_iter()
                .map(|c| {
                    let values = refs
                        .iter()
                        .map(|r| pattern_value(&r.table, c.copies, &c.pairs))
                        .collect();
                    (c, values)
                })
                .collect()
        })
        .collect();
    let mut search = Search {
        refs: &refs,
        candidates,
        sets: vec![ProjectionSet { values: [0.0; 13] }; refs.len()],
        chosen: vec![None; 13],
        group_residuals: [0.0; 13],
        tolerance: options.tolerance,
        deepest: (0, f64::INFINITY),
    };
    if !search.run(0) {
        let (group, best_residual) = search.deepest;
        return Err(MulticopyError::NoConsistentWiring {
            group: GROUPS[group].label.to_string(),
            best_residual,
        });
    }

    let mut best = (f64::INFINITY, CubicConstant::NegativeSquare);
    for constant in [CubicConstant::NegativeSquare, CubicConstant::PositiveSquare] {
        let residual = end_to_end_residual(&search.sets, &refs, constant);
        if residual < best.0 {
            best = (residual, constant);
        }
        if residual <= options.tolerance {
            break;
        }
    }
    let (end_to_end, cubic_constant) = best;
    if end_to_end > options.tolerance {
        return Err(MulticopyError::NoConsistentWiring {
            group: "negativity and Bell measure".into(),
            best_residual: end_to_end,
        });
    }
    let group_max = search.group_residuals.iter().copied().fold(0.0, f64::max);
    Ok(WiringAssignment {
        configs: search.chosen.into_iter().map(|c| c.expect("all groups resolved")).collect(),
        group_residuals: search.group_residuals,
        residual: group_max.max(end_to_end),
        cubic_constant,
    })
}

fn end_to_end_residual(sets: &[ProjectionSet], refs: &[Reference], constant: CubicConstant) -> f64 {
    sets.iter()
        .zip(refs)
        .map(|(ps, r)| {
            let n = negativity_quartic(ps).map_or(f64::INFINITY, |n| (n - r.negativity).abs());
            let b = bell_from_invariants_with(&invariants_from_projections(ps), constant)
                .map_or(f64::INFINITY, |b| (b - r.bell).abs());
            n.max(b)
        })
        .fold(0.0, f64::max)
}
