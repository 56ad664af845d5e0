//! Single-spin Ramsey and Rabi signals under dephasing.

use num_complex::Complex64 as C64;

use super::lindblad::Lindbladian;
use super::{default_steps, NoiseModel, NoiseSpace, NoiseSpec};
use crate::error::{invalid, Error, Result};
use crate::nvmodel::{self, EigenSystem, NvParameters, ReferenceDcField, StaticField};
use crate::rabi::{self, MicrowaveDrive};
use crate::spinalg::{self, ComplexMatrix, I, ONE, ZERO};

/// `V^dagger S_z V` for eigenvector columns `V`.
pub fn sz_in_basis(vectors: &ComplexMatrix) -> ComplexMatrix {
    let (_, _, sz) = spinalg::spin1_operators();
    sz.change_basis(vectors)
}

/// Per-site collapse operator in the eigenbasis of `es`.
pub fn site_noise_operator(es: &EigenSystem, space: NoiseSpace) -> ComplexMatrix {
    let full = sz_in_basis(&es.vectors);
    match space {
        NoiseSpace::SpinOne => full,
        NoiseSpace::Subspace => full.leading_block(2),
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("interrogation time must be positive, got {tau}")))
    }
}

/// Evolves `rho0` for `t` with a fixed RK4 step applied as a powered map.
pub(crate) fn evolve(lind: &Lindbladian, rho0: &ComplexMatrix, t: f64, dt: Option<f64>) -> Result<ComplexMatrix> {
    let (steps, dt) = match dt {
        None => default_steps(lind.generator_bound(), t),
        Some(dt) => {
            let bound = lind.generator_bound();
            if bound * dt > super::STEP_LIMIT {
                return Err(Error::StepSize {
                    dt,
                    bound,
                    suggested: super::STEP_LIMIT / bound,
                });
            }
            let n = ((t / dt) - 1e-9).ceil().max(1.0) as usize;
            (n, t / n as f64)
        }
    };
    Ok(lind.step_map(dt).power(steps).apply(rho0))
}

/// `(lambda/2)(|g><e| + |e><g|)` on the leading two levels.
pub(crate) fn rabi_hamiltonian(lambda: f64, dim: usize) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(dim);
    h[(0, 1)] = C64::new(0.5 * lambda, 0.0);
    h[(1, 0)] = C64::new(0.5 * lambda, 0.0);
    h
}

/// `(delta_omega/2)(|e><e| - |g><g|)` on the leading two levels.
pub(crate) fn ramsey_hamiltonian(delta_omega: f64, dim: usize) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(dim);
    h[(0, 0)] = C64::new(-0.5 * delta_omega, 0.0);
    h[(1, 1)] = C64::new(0.5 * delta_omega, 0.0);
    h
}

fn basis_state(dim: usize, amps: &[C64]) -> Vec<C64> {
    let mut v = vec![ZERO; dim];
    v[..amps.len()].copy_from_slice(amps);
    v
}

/// Ground-state population after a Rabi drive of frequency `lambda` for
/// `tau`, starting in `|g>`. `noise_op` fixes the dimension (2 or 3).
pub fn rabi_signal(lambda: f64, noise_op: &ComplexMatrix, gamma: f64, tau: f64, dt: Option<f64>) -> Result<f64> {
    check_tau(tau)?;
    let dim = noise_op.dim();
    let noise = NoiseModel::new(gamma, vec![noise_op.clone()])?;
    let lind = Lindbladian::new(rabi_hamiltonian(lambda, dim), &noise)?;
    let rho0 = ComplexMatrix::projector(&basis_state(dim, &[ONE]));
    let rho = evolve(&lind, &rho0, tau, dt)?;
    Ok(rho[(0, 0)].re)
}

/// Probability of `|+_y> = (|e> + i|g>)/sqrt 2` after free precession with
/// splitting `delta_omega`, starting in `(|g> + |e>)/sqrt 2`.
pub fn ramsey_signal(delta_omega: f64, noise_op: &ComplexMatrix, gamma: f64, tau: f64, dt: Option<f64>) -> Result<f64> {
    check_tau(tau)?;
    let dim = noise_op.dim();
    let noise = NoiseModel::new(gamma, vec![noise_op.clone()])?;
    let lind = Lindbladian::new(ramsey_hamiltonian(delta_omega, dim), &noise)?;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let plus = basis_state(dim, &[C64::new(r, 0.0), C64::new(r, 0.0)]);
    let plus_y = basis_state(dim, &[I * r, C64::new(r, 0.0)]);
    let rho = evolve(&lind, &ComplexMatrix::projector(&plus), tau, dt)?;
    Ok(rho.sandwich(&plus_y, &plus_y).re)
}

/// Ramsey probability with the shift from the target and reference fields and
/// the noise operator taken in the eigenbasis of `H0 + H_r`.
pub fn ramsey_probability(
    field: &StaticField,
    reference: &ReferenceDcField,
    params: &NvParameters,
    noise: &NoiseSpec,
    tau: f64,
) -> Result<f64> {
    noise.validate()?;
    let es = nvmodel::eigensystem_with_reference(field, reference, params)?;
    let dw = nvmodel::ramsey_shift(field, reference, params);
    ramsey_signal(dw, &site_noise_operator(&es, noise.space), noise.gamma, tau, None)
}

/// Rabi-scheme ground population with the exact Rabi frequency.
pub fn rabi_probability(
    field: &StaticField,
    drive: &MicrowaveDrive,
    params: &NvParameters,
    noise: &NoiseSpec,
    tau: f64,
) -> Result<f64> {
    noise.validate()?;
    let es = nvmodel::eigensystem(field, params)?;
    let lambda = rabi::rabi_exact_with(&es, drive, params).lambda;
    rabi_signal(lambda, &site_noise_operator(&es, noise.space), noise.gamma, tau, None)
}
