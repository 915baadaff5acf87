use nalgebra::{DMatrix, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DensityMatrix, StateError, C64};

/// Random state ensembles. Ginibre states are GG†/tr(GG†) for a complex
/// Gaussian 4×r matrix G (Hilbert–Schmidt measure when r = 4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    GinibreFull,
    GinibreRank(usize),
    Pure,
    /// 80% full-rank Ginibre, 10% pure, 10% rank 2.
    TrainingMix,
}

pub fn random_state(ensemble: Ensemble, seed: u64) -> Result<DensityMatrix, StateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_state_with(ensemble, &mut rng)
}

pub fn random_state_with<R: Rng + ?Sized>(
    ensemble: Ensemble,
    rng: &mut R,
) -> Result<DensityMatrix, StateError> {
    let rank = match ensemble {
        Ensemble::GinibreFull => 4,
        Ensemble::Pure => 1,
        Ensemble::GinibreRank(r) if (1..=4).contains(&r) => r,
        Ensemble::GinibreRank(r) => return Err(StateError::BadRank(r)),
        Ensemble::TrainingMix => {
            let u: f64 = rng.random();
            if u < 0.1 {
                1
            } else if u < 0.2 {
                2
            } else {
                4
            }
        }
    };
    Ok(ginibre(rank, rng))
}

fn ginibre<R: Rng + ?Sized>(rank: usize, rng: &mut R) -> DensityMatrix {
    let g = DMatrix::<C64>::from_fn(4, rank, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let a = &g * g.adjoint();
    let tr = a.trace().re;
    DensityMatrix::from_trusted(Matrix4::from_fn(|r, c| a[(r, c)] / tr))
}
