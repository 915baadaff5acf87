//! Two-qubit states, channels and the density-matrix oracles.
//!
//! Basis ordering is |00⟩, |01⟩, |10⟩, |11⟩ with the first qubit (subsystem
//! `a`) as the most significant bit.

mod channels;
mod oracles;
mod random;

pub use channels::{amplitude_damp, depolarizing};
pub use oracles::{
    bloch_decompose, fidelity_overlap, horodecki_b_oracle, negativity_of_matrix, negativity_oracle,
    partial_transpose, BlochForm, Invariants,
};
pub(crate) use oracles::correlation_table;
pub use random::{random_state, random_state_with, Ensemble};

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type Mat4 = Matrix4<C64>;
pub type Mat2 = Matrix2<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted as "positive semidefinite".
pub const PSD_TOL: f64 = -1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("matrix is not Hermitian: max |ρ - ρ†| = {0:e}")]
    NotHermitian(f64),
    #[error("matrix does not have unit trace: |tr ρ - 1| = {0:e}")]
    NotUnitTrace(f64),
    #[error("matrix is not positive semidefinite: smallest eigenvalue = {0:e}")]
    NotPositive(f64),
    #[error("parameter `{name}` = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("rank {0} is not in 1..=4")]
    BadRank(usize),
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<f64, StateError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(StateError::OutOfRange { name, value })
    }
}

/// A validated two-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(elements: Mat4) -> Result<Self, StateError> {
        let herm = (elements - elements.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > HERMITIAN_TOL {
            return Err(StateError::NotHermitian(herm));
        }
        let tr = (elements.trace() - C64::new(1.0, 0.0)).norm();
        if tr > TRACE_TOL {
            return Err(StateError::NotUnitTrace(tr));
        }
        let min = min_eigenvalue(&elements);
        if min < PSD_TOL {
            return Err(StateError::NotPositive(min));
        }
        Ok(Self(elements))
    }

    /// Wraps a matrix that is physical by construction (channel outputs,
    /// factored estimates). Hermiticity is restored exactly.
    pub(crate) fn from_trusted(elements: Mat4) -> Self {
        Self((elements + elements.adjoint()).scale(0.5))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat4 {
        self.0
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat4::identity().scale(0.25))
    }

    /// |Ψ⁻⟩⟨Ψ⁻| with |Ψ⁻⟩ = (|01⟩ − |10⟩)/√2.
    pub fn singlet() -> Self {
        Self(singlet_projector())
    }

    /// Projector onto a computational basis state, `index` in 0..4.
    pub fn basis(index: usize) -> Self {
        let mut m = Mat4::zeros();
        m[(index, index)] = C64::new(1.0, 0.0);
        Self(m)
    }

    pub fn from_pure(amplitudes: [C64; 4]) -> Self {
        let v = nalgebra::Vector4::from(amplitudes);
        let norm2 = v.norm_squared();
        Self((v * v.adjoint()).unscale(norm2))
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    /// Largest elementwise modulus of the difference to `other`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }
}

/// Werner family p|Ψ⁻⟩⟨Ψ⁻| + (1−p)𝟙/4.
pub fn werner(p: f64) -> Result<DensityMatrix, StateError> {
    let p = check_unit("p", p)?;
    Ok(DensityMatrix::from_trusted(
        singlet_projector().scale(p) + Mat4::identity().scale((1.0 - p) / 4.0),
    ))
}

/// Horodecki family p|Ψ⁻⟩⟨Ψ⁻| + (1−p)|00⟩⟨00|.
pub fn horodecki(p: f64) -> Result<DensityMatrix, StateError> {
    let p = check_unit("p", p)?;
    Ok(DensityMatrix::from_trusted(
        singlet_projector().scale(p) + DensityMatrix::basis(0).0.scale(1.0 - p),
    ))
}

pub fn singlet_projector() -> Mat4 {
    let h = C64::new(0.5, 0.0);
    let mut m = Mat4::zeros();
    m[(1, 1)] = h;
    m[(2, 2)] = h;
    m[(1, 2)] = -h;
    m[(2, 1)] = -h;
    m
}

/// Pauli matrices σ₀ = 𝟙, σ₁ = X, σ₂ = Y, σ₃ = Z.
pub fn pauli(index: usize) -> Mat2 {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match index {
        0 => Mat2::new(l, o, o, l),
        1 => Mat2::new(o, l, l, o),
        2 => Mat2::new(o, -i, i, o),
        3 => Mat2::new(l, o, o, -l),
        _ => panic!("pauli index {index} out of range"),
    }
}

pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// σ_μ ⊗ σ_ν.
pub fn pauli_pair(first: usize, second: usize) -> Mat4 {
    kron(&pauli(first), &pauli(second))
}

pub(crate) fn hermitian_eigenvalues(m: &Mat4) -> [f64; 4] {
    let h = (m + m.adjoint()).scale(0.5);
    let ev = h.symmetric_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2], ev[3]];
    out.sort_by(f64::total_cmp);
    out
}

pub(crate) fn min_eigenvalue(m: &Mat4) -> f64 {
    hermitian_eigenvalues(m)[0]
}

pub(crate) fn max_abs_diff(a: &Mat4, b: &Mat4) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
