use super::{check_unit, kron, DensityMatrix, Mat2, Mat4, StateError, C64};

/// (1−strength)·ρ + strength·𝟙/4.
pub fn depolarizing(rho: &DensityMatrix, strength: f64) -> Result<DensityMatrix, StateError> {
    let strength = check_unit("strength", strength)?;
    Ok(DensityMatrix::from_trusted(
        rho.matrix().scale(1.0 - strength) + Mat4::identity().scale(strength / 4.0),
    ))
}

/// Single-qubit amplitude damping with decay probability `gamma`, applied
/// independently to both qubits.
pub fn amplitude_damp(rho: &DensityMatrix, gamma: f64) -> Result<DensityMatrix, StateError> {
    let gamma = check_unit("gamma", gamma)?;
    let o = C64::new(0.0, 0.0);
    let kraus = [
        Mat2::new(C64::new(1.0, 0.0), o, o, C64::new((1.0 - gamma).sqrt(), 0.0)),
        Mat2::new(o, C64::new(gamma.sqrt(), 0.0), o, o),
    ];
    let mut out = Mat4::zeros();
    for ka in &kraus {
        for kb in &kraus {
            let k = kron(ka, kb);
            out += k * rho.matrix() * k.adjoint();
        }
    }
    Ok(DensityMatrix::from_trusted(out))
}
