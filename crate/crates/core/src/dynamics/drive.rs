//! Driven spin-1 without the rotating-wave approximation.
//!
//! `H(t) = H0 + gamma_e B_mw . S cos(omega t)` is integrated in the
//! interaction picture of `H0`, which is an exact change of frame: the
//! eigenbasis populations coincide with the lab-frame ones. Each step is the
//! fourth-order commutator-free Magnus product with two Gauss nodes.

use num_complex::Complex64 as C64;

use super::{DensityMatrix, SpaceTag, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::fit::linear_regression;
use crate::nvmodel::{self, NvParameters, StaticField};
use crate::rabi::{drive_operator, MicrowaveDrive};
use crate::spinalg::{hermitian_eigensystem, ComplexMatrix, ONE, ZERO};

/// Largest accepted `carrier * dt`.
pub const CARRIER_STEP_LIMIT: f64 = 0.2;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const A1: f64 = (3.0 - 2.0 * SQRT3) / 12.0;
const A2: f64 = (3.0 + 2.0 * SQRT3) / 12.0;
const C1: f64 = 0.5 - SQRT3 / 6.0;
const C2: f64 = 0.5 + SQRT3 / 6.0;

#[derive(Clone, Debug)]
pub struct FullDriveOptions {
    /// Record every n-th step (the last step is always recorded).
    pub record_every: usize,
    pub keep_states: bool,
}

impl Default for FullDriveOptions {
    fn default() -> Self {
        Self {
            record_every: 1,
            keep_states: false,
        }
    }
}

struct Driven {
    energies: [f64; 3],
    coupling: ComplexMatrix,
    carrier: f64,
}

impl Driven {
    /// Interaction-picture Hamiltonian at time `t`.
    fn at(&self, t: f64) -> ComplexMatrix {
        let c = (self.carrier * t).cos();
        let mut h = ComplexMatrix::zeros(3);
        for j in 0..3 {
            for k in 0..3 {
                let ph = C64::from_polar(1.0, (self.energies[j] - self.energies[k]) * t);
                h[(j, k)] = self.coupling[(j, k)] * ph * c;
            }
        }
        h
    }
}

/// `exp(-i dt H)` for Hermitian `H`.
fn unitary(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    let eig = hermitian_eigensystem(h)?;
    let n = h.dim();
    let mut u = ComplexMatrix::zeros(n);
    for k in 0..n {
        let v = eig.vector(k);
        let ph = C64::from_polar(1.0, -eig.energies[k] * dt);
        for i in 0..n {
            for j in 0..n {
                u[(i, j)] += v[i] * v[j].conj() * ph;
            }
        }
    }
    Ok(u)
}

fn cf4_step(sys: &Driven, t: f64, dt: f64, psi: &[C64]) -> Result<Vec<C64>> {
    let h1 = sys.at(t + C1 * dt);
    let h2 = sys.at(t + C2 * dt);
    let first = &h1.scale_real(A2) + &h2.scale_real(A1);
    let second = &h1.scale_real(A1) + &h2.scale_real(A2);
    let psi = unitary(&first, dt)?.matvec(psi);
    Ok(unitary(&second, dt)?.matvec(&psi))
}

/// Unitary propagation from `|g>` for `t_final` with step `dt`. Observables
/// `p_g`, `p_e`, `p_b` are the eigenbasis populations.
pub fn full_drive_propagation(
    field: &StaticField,
    drive: &MicrowaveDrive,
    params: &NvParameters,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    full_drive_propagation_with(field, drive, params, t_final, dt, &FullDriveOptions::default())
}

pub fn full_drive_propagation_with(
    field: &StaticField,
    drive: &MicrowaveDrive,
    params: &NvParameters,
    t_final: f64,
    dt: f64,
    opts: &FullDriveOptions,
) -> Result<Trajectory> {
    drive.validate()?;
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(invalid(format!("final time must be positive, got {t_final}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let es = nvmodel::eigensystem(field, params)?;
    let carrier = drive.carrier(&es);
    if carrier * dt > CARRIER_STEP_LIMIT {
        return Err(Error::StepSize {
            dt,
            bound: carrier,
            suggested: CARRIER_STEP_LIMIT / carrier,
        });
    }
    let sys = Driven {
        energies: es.energies,
        coupling: drive_operator(drive, params).change_basis(&es.vectors),
        carrier,
    };
    let steps = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = t_final / steps as f64;
    let every = opts.record_every.max(1);
    let names = ["p_g", "p_e", "p_b"];
    let mut traj = Trajectory {
        dt,
        steps,
        observables: names.iter().map(|n| (n.to_string(), Vec::new())).collect(),
        ..Default::default()
    };
    let mut psi = vec![ONE, ZERO, ZERO];
    let record = |traj: &mut Trajectory, t: f64, psi: &[C64]| -> Result<()> {
        traj.times.push(t);
        for (k, (_, v)) in traj.observables.iter_mut().enumerate() {
            v.push(psi[k].norm_sqr());
        }
        let drift = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs();
        traj.max_trace_drift = traj.max_trace_drift.max(drift);
        if opts.keep_states {
            traj.states.push(DensityMatrix::from_matrix_unchecked(
                ComplexMatrix::projector(psi),
                SpaceTag::SpinOne,
            ));
        }
        Ok(())
    };
    record(&mut traj, 0.0, &psi)?;
    for n in 0..steps {
        psi = cf4_step(&sys, n as f64 * dt, dt, &psi)?;
        if (n + 1) % every == 0 || n + 1 == steps {
            record(&mut traj, (n + 1) as f64 * dt, &psi)?;
        }
    }
    Ok(traj)
}

/// Rabi frequency from a sampled ground population: the carrier ripple is
/// removed with a one-period moving average, the `1/2` crossings are located
/// by linear interpolation, and the crossing times are regressed on their
/// index. Consecutive crossings are half a Rabi period apart.
pub fn extract_rabi_frequency(times: &[f64], p_g: &[f64], carrier: f64) -> Result<f64> {
    if times.len() != p_g.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            found: p_g.len(),
        });
    }
    if times.len() < 3 {
        return Err(Error::Empty("population samples"));
    }
    let step = times[1] - times[0];
    let window = if carrier > 0.0 {
        ((2.0 * std::f64::consts::PI / carrier) / step).round().max(1.0) as usize
    } else {
        1
    };
    if window >= times.len() {
        return Err(invalid("trace shorter than one carrier period"));
    }
    let mut smooth_t = Vec::with_capacity(times.len() - window + 1);
    let mut smooth_p = Vec::with_capacity(times.len() - window + 1);
    let mut acc: f64 = p_g[..window].iter().sum();
    for k in 0..=times.len() - window {
        if k > 0 {
            acc += p_g[k + window - 1] - p_g[k - 1];
        }
        smooth_p.push(acc / window as f64);
        smooth_t.push(0.5 * (times[k] + times[k + window - 1]));
    }
    let mut crossings = Vec::new();
    for k in 1..smooth_p.len() {
        let (a, b) = (smooth_p[k - 1] - 0.5, smooth_p[k] - 0.5);
        if a != 0.0 && a.signum() != b.signum() {
            let f = a / (a - b);
            crossings.push(smooth_t[k - 1] + f * (smooth_t[k] - smooth_t[k - 1]));
        }
    }
    if crossings.len() < 3 {
        return Err(Error::IllConditionedFit(format!(
            "{} half-population crossings, need at least 3",
            crossings.len()
        )));
    }
    let idx: Vec<f64> = (0..crossings.len()).map(|k| k as f64).collect();
    let fit = linear_regression(&idx, &crossings)?;
    Ok(std::f64::consts::PI / fit.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rabi;

    fn setup(theta_deg: f64, bmw: f64) -> (StaticField, MicrowaveDrive, NvParameters) {
        (
            StaticField::new(8.0, theta_deg.to_radians(), 0.0).unwrap(),
            MicrowaveDrive::new(bmw, 20f64.to_radians(), 0.0).unwrap(),
            NvParameters::default(),
        )
    }

    fn final_state(f: &StaticField, d: &MicrowaveDrive, p: &NvParameters, t: f64, dt: f64) -> Vec<f64> {
        let traj = full_drive_propagation_with(f, d, p, t, dt, &FullDriveOptions { record_every: usize::MAX, keep_states: true }).unwrap();
        let rho = traj.final_state().unwrap().matrix();
        vec![rho[(0, 0)].re, rho[(0, 1)].re, rho[(0, 1)].im, rho[(1, 2)].re]
    }

    #[test]
    fn magnus_step_is_fourth_order() {
        let (f, d, p) = setup(40.0, 5.0);
        let t = 0.004;
        let es = nvmodel::eigensystem(&f, &p).unwrap();
        let base = 0.2 / es.omega_minus;
        let reference = final_state(&f, &d, &p, t, base / 16.0);
        let err = |dt: f64| -> f64 {
            final_state(&f, &d, &p, t, dt)
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(base), err(base / 2.0));
        let order = (e1 / e2).log2();
        assert!(order > 3.5, "observed order {order} ({e1:e} -> {e2:e})");
    }

    #[test]
    fn norm_preserved() {
        let (f, d, p) = setup(40.0, 1.0);
        let es = nvmodel::eigensystem(&f, &p).unwrap();
        let traj = full_drive_propagation(&f, &d, &p, 0.02, 0.1 / es.omega_minus).unwrap();
        assert!(traj.max_trace_drift < 1e-10, "{}", traj.max_trace_drift);
    }

    #[test]
    fn coarse_step_refused() {
        let (f, d, p) = setup(40.0, 1.0);
        let es = nvmodel::eigensystem(&f, &p).unwrap();
        match full_drive_propagation(&f, &d, &p, 0.01, 0.3 / es.omega_minus) {
            Err(Error::StepSize { suggested, .. }) => {
                assert!((suggested * es.omega_minus - 0.2).abs() < 1e-12)
            }
            other => panic!("expected step-size error, got {other:?}"),
        }
    }

    #[test]
    fn extraction_recovers_synthetic_frequency() {
        let carrier = 500.0;
        let lambda = 13.0;
        let times: Vec<f64> = (0..20000).map(|k| k as f64 * 1e-4).collect();
        let p: Vec<f64> = times
            .iter()
            .map(|t| 0.5 * (1.0 + (lambda * t).cos()) + 0.01 * (carrier * t).sin())
            .collect();
        let got = extract_rabi_frequency(&times, &p, carrier).unwrap();
        assert!((got / lambda - 1.0).abs() < 1e-3, "{got}");
    }

    #[test]
    fn weak_drive_matches_exact_rabi_frequency() {
        let (f, d, p) = setup(40.0, 0.1);
        let es = nvmodel::eigensystem(&f, &p).unwrap();
        let lambda = rabi::rabi_exact_with(&es, &d, &p).lambda;
        let t = 2.2 * 2.0 * std::f64::consts::PI / lambda;
        let traj = full_drive_propagation(&f, &d, &p, t, 0.2 / es.omega_minus).unwrap();
        let got = extract_rabi_frequency(&traj.times, traj.observable("p_g").unwrap(), es.omega_minus).unwrap();
        assert!((got / lambda - 1.0).abs() < 0.005, "{got} vs {lambda}");
    }
}
