//! Brute-force oracles working directly on the 4×4 matrix.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{hermitian_eigenvalues, pauli_pair, DensityMatrix, Mat4};

/// Partial transpose on the second qubit: ρ_{ik,jl} → ρ_{il,jk}.
pub fn partial_transpose(rho: &DensityMatrix) -> Mat4 {
    partial_transpose_matrix(rho.matrix())
}

pub(crate) fn partial_transpose_matrix(m: &Mat4) -> Mat4 {
    Mat4::from_fn(|r, c| {
        let (i, k) = (r / 2, r % 2);
        let (j, l) = (c / 2, c % 2);
        m[(2 * i + l, 2 * j + k)]
    })
}

/// N = 2·max(0, −λ_min(ρ^Γ)).
pub fn negativity_oracle(rho: &DensityMatrix) -> f64 {
    negativity_of_matrix(rho.matrix())
}

/// Same as [`negativity_oracle`] for any Hermitian matrix, e.g. an
/// unphysical linear-inversion estimate.
pub fn negativity_of_matrix(m: &Mat4) -> f64 {
    let min = hermitian_eigenvalues(&partial_transpose_matrix(m))[0];
    2.0 * (-min).max(0.0)
}

/// Horodecki measure: (sum of the two largest eigenvalues of βᵀβ) − 1.
pub fn horodecki_b_oracle(rho: &DensityMatrix) -> f64 {
    bloch_decompose(rho).bell_measure()
}

/// tr(ρ₁ρ₂).
pub fn fidelity_overlap(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    (a.matrix() * b.matrix()).trace().re
}

/// Local Bloch vectors and correlation tensor of a two-qubit operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochForm {
    pub s: [f64; 3],
    pub t: [f64; 3],
    pub beta: [[f64; 3]; 3],
}

/// Makhlin local-unitary invariants: I₁ = det β, I₂ = tr βᵀβ, I₃ = tr (βᵀβ)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Invariants {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

pub fn bloch_decompose(rho: &DensityMatrix) -> BlochForm {
    BlochForm::from_matrix(rho.matrix())
}

impl BlochForm {
    pub fn from_matrix(m: &Mat4) -> Self {
        let table = correlation_table(m);
        let mut out = BlochForm {
            s: [0.0; 3],
            t: [0.0; 3],
            beta: [[0.0; 3]; 3],
        };
        for i in 0..3 {
            out.s[i] = table[i + 1][0];
            out.t[i] = table[0][i + 1];
            for j in 0..3 {
                out.beta[i][j] = table[i + 1][j + 1];
            }
        }
        out
    }

    /// ρ = ¼ Σ_{μν} T_{μν} σ_μ⊗σ_ν with T₀₀ = 1.
    pub fn recompose(&self) -> Mat4 {
        let table = self.table();
        let mut m = Mat4::zeros();
        for (mu, row) in table.iter().enumerate() {
            for (nu, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    m += pauli_pair(mu, nu).scale(v);
                }
            }
        }
        m.scale(0.25)
    }

    /// Full 4×4 table T_{μν} = tr(ρ σ_μ⊗σ_ν), T₀₀ = 1.
    pub fn table(&self) -> [[f64; 4]; 4] {
        let mut t = [[0.0; 4]; 4];
        t[0][0] = 1.0;
        for i in 0..3 {
            t[i + 1][0] = self.s[i];
            t[0][i + 1] = self.t[i];
            for j in 0..3 {
                t[i + 1][j + 1] = self.beta[i][j];
            }
        }
        t
    }

    pub fn beta_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.beta[i][j])
    }

    /// Eigenvalues of βᵀβ in ascending order.
    pub fn correlation_spectrum(&self) -> [f64; 3] {
        let b = self.beta_matrix();
        let ev = SymmetricEigen::new(b.transpose() * b).eigenvalues;
        let mut out = [ev[0], ev[1], ev[2]];
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn bell_measure(&self) -> f64 {
        let ev = self.correlation_spectrum();
        ev[1] + ev[2] - 1.0
    }

    pub fn invariants(&self) -> Invariants {
        let b = self.beta_matrix();
        let m = b.transpose() * b;
        Invariants {
            i1: b.determinant(),
            i2: m.trace(),
            i3: (m * m).trace(),
        }
    }
}

pub(crate) fn correlation_table(m: &Mat4) -> [[f64; 4]; 4] {
    let mut t = [[0.0; 4]; 4];
    for (mu, row) in t.iter_mut().enumerate() {
        for (nu, v) in row.iter_mut().enumerate() {
            *v = (m * pauli_pair(mu, nu)).trace().re;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{horodecki, random_state, werner, Ensemble};

    fn pt_eigs(rho: &DensityMatrix) -> [f64; 4] {
        hermitian_eigenvalues(&partial_transpose(rho))
    }

    #[test]
    fn partial_transpose_of_identity() {
        let rho = DensityMatrix::maximally_mixed();
        assert!(crate::qcore::max_abs_diff(&partial_transpose(&rho), rho.matrix()) < 1e-15);
    }

    #[test]
    fn singlet_partial_transpose_spectrum() {
        let ev = pt_eigs(&DensityMatrix::singlet());
        let expected = [-0.5, 0.5, 0.5, 0.5];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_transpose_is_an_involution() {
        let rho = random_state(Ensemble::GinibreFull, 5).unwrap();
        let twice = partial_transpose_matrix(&partial_transpose(&rho));
        assert!(crate::qcore::max_abs_diff(&twice, rho.matrix()) <= 1e-15);
    }

    #[test]
    fn partial_transpose_keeps_frobenius_norm() {
        for seed in 0..1000 {
            let rho = random_state(Ensemble::GinibreFull, seed).unwrap();
            let pt = partial_transpose(&rho);
            assert!(((pt * pt).trace().re - rho.purity()).abs() < 1e-12);
            assert!((pt.trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn negativity_of_reference_states() {
        assert!((negativity_oracle(&DensityMatrix::singlet()) - 1.0).abs() < 1e-12);
        assert!(negativity_oracle(&werner(1.0 / 3.0).unwrap()).abs() < 1e-12);
        assert_eq!(negativity_oracle(&horodecki(0.0).unwrap()), 0.0);
    }

    #[test]
    fn werner_grid_closed_forms() {
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let rho = werner(p).unwrap();
            let n = negativity_oracle(&rho);
            assert!((n - ((3.0 * p - 1.0) / 2.0).max(0.0)).abs() < 1e-10, "p={p}");
            let b = horodecki_b_oracle(&rho);
            assert!((b - (2.0 * p * p - 1.0)).abs() < 1e-10, "p={p}");
        }
    }

    #[test]
    fn horodecki_negativity_closed_form() {
        let p: f64 = 0.5;
        let expected = ((1.0 - p).powi(2) + p * p).sqrt() - (1.0 - p);
        assert!((negativity_oracle(&horodecki(p).unwrap()) - expected).abs() < 1e-12);
    }

    #[test]
    fn bell_measure_reference_values() {
        assert!((horodecki_b_oracle(&DensityMatrix::singlet()) - 1.0).abs() < 1e-12);
        assert!((horodecki_b_oracle(&DensityMatrix::maximally_mixed()) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn bloch_of_reference_states() {
        let mixed = bloch_decompose(&DensityMatrix::maximally_mixed());
        assert_eq!(mixed.s, [0.0; 3]);
        assert_eq!(mixed.t, [0.0; 3]);
        assert_eq!(mixed.beta, [[0.0; 3]; 3]);

        let singlet = bloch_decompose(&DensityMatrix::singlet());
        for i in 0..3 {
            assert!(singlet.s[i].abs() < 1e-15 && singlet.t[i].abs() < 1e-15);
            for j in 0..3 {
                let e = if i == j { -1.0 } else { 0.0 };
                assert!((singlet.beta[i][j] - e).abs() < 1e-15);
            }
        }

        let ground = bloch_decompose(&DensityMatrix::basis(0));
        assert_eq!(ground.s, [0.0, 0.0, 1.0]);
        assert_eq!(ground.t, [0.0, 0.0, 1.0]);
        assert_eq!(ground.beta, [[0.0; 3], [0.0; 3], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn bloch_roundtrip_and_bounds() {
        for seed in 0..1000 {
            let rho = random_state(Ensemble::TrainingMix, seed).unwrap();
            let form = bloch_decompose(&rho);
            assert!(crate::qcore::max_abs_diff(&form.recompose(), rho.matrix()) < 1e-12);
            let table = form.table();
            assert!(table.iter().flatten().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn overlap_values() {
        let s = DensityMatrix::singlet();
        assert!((fidelity_overlap(&s, &s) - 1.0).abs() < 1e-15);
        let other = random_state(Ensemble::GinibreFull, 9).unwrap();
        assert!((fidelity_overlap(&DensityMatrix::maximally_mixed(), &other) - 0.25).abs() < 1e-15);
        assert!(fidelity_overlap(&s, &DensityMatrix::basis(0)).abs() < 1e-15);
        let a = random_state(Ensemble::GinibreFull, 1).unwrap();
        assert!((fidelity_overlap(&a, &other) - fidelity_overlap(&other, &a)).abs() < 1e-15);
    }
}
