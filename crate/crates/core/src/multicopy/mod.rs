//! Multicopy singlet projections and the invariant, negativity and Bell
//! formulas built on them.
//!
//! A projection configuration names a set of qubit pairs spread over one to
//! four copies of the same two-qubit state; its value is the probability that
//! every listed pair is found in the singlet |Ψ⁻⟩. Values are evaluated
//! exactly by contracting the Pauli expansion P⁻ = (𝟙 − Σₖ σₖ⊗σₖ)/4 against
//! the correlation table of the single-copy state.

mod calibration;
mod config;
pub mod roots;

pub use calibration::{
    calibrate_wiring, default_validation_states, enumerate_candidates, CalibrationOptions,
    ConfigShape, CubicConstant, WiringAssignment,
};
pub use config::{Class, ConfigName, ProjectionConfig, Qubit, QubitPair, Side};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qcore::{bloch_decompose, DensityMatrix, Invariants};
use roots::RootError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MulticopyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown configuration name `{0}`")]
    UnknownConfig(String),
    #[error("quartic has several positive roots {0:?}; projection data is inconsistent")]
    MultiplePositiveRoots(Vec<f64>),
    #[error("characteristic cubic has complex roots (|Im| = {0:e}); invariants are corrupted")]
    ComplexRoots(f64),
    #[error(transparent)]
    Roots(#[from] RootError),
    #[error("no consistent wiring for {group}: best residual {best_residual:e}")]
    NoConsistentWiring { group: String, best_residual: f64 },
    #[error("malformed wiring document: {0}")]
    BadWiring(String),
}

/// Probability of the joint singlet pattern `pairs` on `copies` copies of the
/// state whose correlation table is `table` (T_{μν} = tr ρ σ_μ⊗σ_ν).
pub fn pattern_value(table: &[[f64; 4]; 4], copies: usize, pairs: &[QubitPair]) -> f64 {
    let mut total = 0.0;
    for_each_term(copies, pairs, |weight, indices| {
        let mut prod = weight;
        for &(mu, nu) in indices.iter().take(copies) {
            prod *= table[mu][nu];
            if prod == 0.0 {
                break;
            }
        }
        total += prod;
    });
    total
}

/// ∂value/∂T_{μν} for [`pattern_value`], treating every T entry (including
/// T₀₀) as free.
pub fn pattern_gradient(table: &[[f64; 4]; 4], copies: usize, pairs: &[QubitPair]) -> [[f64; 4]; 4] {
    let mut grad = [[0.0; 4]; 4];
    for_each_term(copies, pairs, |weight, indices| {
        for c in 0..copies {
            let mut prod = weight;
            for (d, &(mu, nu)) in indices.iter().enumerate().take(copies) {
                if d != c {
                    prod *= table[mu][nu];
                }
            }
            let (mu, nu) = indices[c];
            grad[mu][nu] += prod;
        }
    });
    grad
}

/// Enumerates the 4^m terms of the product of singlet projectors. Each pair
/// carries a Pauli index k ∈ {0,1,2,3} with weight ¼ for k = 0 and −¼
/// otherwise; `indices[c]` is the (a, b) Pauli index acting on copy c.
fn for_each_term(copies: usize, pairs: &[QubitPair], mut f: impl FnMut(f64, &[(usize, usize); 4])) {
    assert!(copies <= 4, "at most four copies are supported");
    let m = pairs.len();
    let terms = 1usize << (2 * m);
    let mut indices = [(0usize, 0usize); 4];
    for code in 0..terms {
        indices.iter_mut().for_each(|x| *x = (0, 0));
        let mut weight = 1.0;
        for (p, pair) in pairs.iter().enumerate() {
            let k = (code >> (2 * p)) & 3;
            weight *= if k == 0 { 0.25 } else { -0.25 };
            for q in [pair.first(), pair.second()] {
                let slot = &mut indices[q.copy_index()];
                match q.side {
                    Side::A => slot.0 = k,
                    Side::B => slot.1 = k,
                }
            }
        }
        f(weight, &indices);
    }
}

/// tr[ρ^{⊗copies} · (⊗ P⁻ on the configured pairs)].
pub fn projection_value(rho: &DensityMatrix, config: &ProjectionConfig) -> f64 {
    pattern_value(&bloch_decompose(rho).table(), config.copies, &config.pairs)
}

/// The thirteen projection coefficients of one state, in canonical order
/// (see [`ConfigName::ALL`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSet {
    pub values: [f64; 13],
}

impl ProjectionSet {
    pub fn get(&self, name: ConfigName) -> f64 {
        self.values[name.index()]
    }

    pub fn set(&mut self, name: ConfigName, value: f64) {
        self.values[name.index()] = value;
    }

    pub fn from_fn(mut f: impl FnMut(ConfigName) -> f64) -> Self {
        let mut values = [0.0; 13];
        for name in ConfigName::ALL {
            values[name.index()] = f(name);
        }
        Self { values }
    }
}

impl std::ops::Index<ConfigName> for ProjectionSet {
    type Output = f64;
    fn index(&self, name: ConfigName) -> &f64 {
        &self.values[name.index()]
    }
}

struct Coefficients {
    l0: f64,
    l1: f64,
    l2: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    c4: f64,
    c5: f64,
    cb1: f64,
    cb2: f64,
    cb3: f64,
    lb1: f64,
    lb2: f64,
}

impl From<&ProjectionSet> for Coefficients {
    fn from(ps: &ProjectionSet) -> Self {
        use ConfigName::*;
        Coefficients {
            l0: ps[L0],
            l1: ps[L1],
            l2: ps[L2],
            c1: ps[C1],
            c2: ps[C2],
            c3: ps[C3],
            c4: ps[C4],
            c5: ps[C5],
            cb1: ps[Cbar1],
            cb2: ps[Cbar2],
            cb3: ps[Cbar3],
            lb1: ps[Lbar1],
            lb2: ps[Lbar2],
        }
    }
}

/// Makhlin invariants (I₁ = det β, I₂ = tr βᵀβ, I₃ = tr (βᵀβ)²) from
/// projection coefficients.
pub fn invariants_from_projections(ps: &ProjectionSet) -> Invariants {
    let k = Coefficients::from(ps);
    let i1 = -8.0 / 3.0
        * (k.l0 * (k.l0 * (4.0 * k.l0 - 3.0) + 6.0 * (k.cb1 - 2.0 * k.lb1)) + 3.0 * k.lb1
            - 6.0 * k.cb2
            + 8.0 * k.lb2);
    let i2 = 1.0 + 16.0 * k.l1 - 4.0 * (k.c1 + k.c2);
    let i3 = 1.0 + 256.0 * k.l2 - 128.0 * (k.c4 + k.c5)
        + 64.0 * k.c3
        + 16.0 * (k.c1 * k.c1 + k.c2 * k.c2)
        - 8.0 * (k.c1 + k.c2);
    Invariants { i1, i2, i3 }
}

/// Π₂ = tr[(ρ^Γ)²] = tr ρ².
pub fn pi2_from_projections(ps: &ProjectionSet) -> f64 {
    let k = Coefficients::from(ps);
    1.0 - 2.0 * (k.c1 + k.c2 - 2.0 * k.l1)
}

/// Coefficients [a₄, a₃, a₂, a₁, a₀] of the negativity quartic; its roots
/// are N = −2λ for the eigenvalues λ of ρ^Γ. Π₂ is clamped to [¼, 1].
pub fn quartic_coefficients(ps: &ProjectionSet) -> [f64; 5] {
    let k = Coefficients::from(ps);
    let pi2 = pi2_from_projections(ps).clamp(0.25, 1.0);
    let bracket = k.l0 * k.l0 - k.lb1 - k.l1 + 2.0 * (k.c3 - k.l0 * k.cb1 + k.cb2);
    let a0 = -16.0
        * (k.l0.powi(3) + 2.0 * k.lb2
            + 3.0 * (k.l1 * k.l1 - k.l0 * k.l0 * k.cb1 - k.l0 * k.lb1 + k.cb1 * k.lb1)
            - 6.0 * (k.l2 - k.l0 * k.cb2 + k.cb3));
    let a1 = 24.0 * bracket - 32.0 * (k.l0.powi(3) - 3.0 * k.l0 * k.lb1 + 2.0 * k.lb2);
    let a2 = 6.0 * (1.0 - pi2);
    [3.0, 6.0, a2, a1, a0]
}

/// Negativity as the unique positive root of the quartic, 0 when there is
/// none (separable state).
pub fn negativity_quartic(ps: &ProjectionSet) -> Result<f64, MulticopyError> {
    match roots::solve_quartic_positive(quartic_coefficients(ps)) {
        Ok(root) => Ok(root.unwrap_or(0.0)),
        Err(RootError::MultiplePositive(r)) => Err(MulticopyError::MultiplePositiveRoots(r)),
        Err(e) => Err(e.into()),
    }
}

/// Lenient variant for sampled data: the largest positive real root, which
/// matches 2·max(0, −λ_min) even when the data are not exactly physical.
pub fn negativity_quartic_lenient(ps: &ProjectionSet) -> f64 {
    roots::quartic_roots(quartic_coefficients(ps))
        .map(|r| {
            r.iter()
                .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()))
                .map(|z| z.re)
                .fold(0.0, f64::max)
        })
        .unwrap_or(0.0)
}

/// Coefficients [1, −I₂, ½(I₂²−I₃), c₀] of the characteristic cubic of βᵀβ.
pub fn characteristic_cubic(inv: &Invariants, constant: CubicConstant) -> [f64; 4] {
    [
        1.0,
        -inv.i2,
        0.5 * (inv.i2 * inv.i2 - inv.i3),
        constant.sign() * inv.i1 * inv.i1,
    ]
}

/// B = I₂ − min(r) − 1 over the roots r of the characteristic cubic, using
/// the calibrated constant-term convention.
pub fn bell_from_invariants(inv: &Invariants) -> Result<f64, MulticopyError> {
    bell_from_invariants_with(inv, CubicConstant::NegativeSquare)
}

pub fn bell_from_invariants_with(
    inv: &Invariants,
    constant: CubicConstant,
) -> Result<f64, MulticopyError> {
    let (r, discarded) = roots::real_rooted_cubic(characteristic_cubic(inv, constant))?;
    if discarded > 1e-6 * (1.0 + inv.i2.abs()) {
        return Err(MulticopyError::ComplexRoots(discarded));
    }
    Ok(inv.i2 - r[0] - 1.0)
}

/// Lenient variant for sampled data: any imaginary parts are dropped.
pub fn bell_from_invariants_lenient(inv: &Invariants) -> f64 {
    roots::real_rooted_cubic(characteristic_cubic(inv, CubicConstant::NegativeSquare))
        .map(|(r, _)| inv.i2 - r[0] - 1.0)
        .unwrap_or(f64::NAN)
}
