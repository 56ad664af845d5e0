//! GHZ parity signal of `L` independently dephased spins.
//!
//! The generator is a sum of commuting single-site terms and the GHZ state
//! `(|+>^L + |->^L)/sqrt 2` is a sum of four product operators, so
//! `<P_z>(t) = (1/2) sum_{a,b in {+,-}} f_ab(t)^L` with
//! `f_ab = Tr[P_1 exp(t L_1)(|a><b|)]`. [`ghz_parity_dense`] integrates the
//! full `d^L` space instead and serves as a cross-check.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::lindblad::{propagate_lindblad_with, Lindbladian, PropagateOptions};
use super::schemes::{rabi_hamiltonian, site_noise_operator};
use super::{default_steps, DensityMatrix, NoiseModel, NoiseSpec, SpaceTag};
use crate::error::{invalid, Error, Result};
use crate::fit::polyfit;
use crate::nvmodel::{self, NvParameters, StaticField};
use crate::rabi::{self, MicrowaveDrive};
use crate::spinalg::{kron, ComplexMatrix, ONE, ZERO};

pub const MAX_GHZ_SITES: usize = 10;
/// Largest Hilbert-space dimension accepted by [`ghz_parity_dense`].
pub const MAX_DENSE_DIM: usize = 1024;

fn check_sites(l: usize) -> Result<()> {
    if (1..=MAX_GHZ_SITES).contains(&l) {
        Ok(())
    } else {
        Err(invalid(format!("number of spins must be in 1..={MAX_GHZ_SITES}, got {l}")))
    }
}

fn local_plus_minus(dim: usize) -> [Vec<C64>; 2] {
    let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut p = vec![ZERO; dim];
    let mut m = vec![ZERO; dim];
    p[0] = r;
    p[1] = r;
    m[0] = r;
    m[1] = -r;
    [p, m]
}

fn local_parity(dim: usize) -> ComplexMatrix {
    let mut d = vec![0.0; dim];
    d[0] = 1.0;
    d[1] = -1.0;
    ComplexMatrix::from_real_diagonal(&d)
}

/// `f_ab(t)` for `a, b` in `{+, -}` (index 0 is `+`).
pub fn ghz_site_factors(
    lambda: f64,
    noise_op: &ComplexMatrix,
    gamma: f64,
    t: f64,
    dt: Option<f64>,
) -> Result<[[C64; 2]; 2]> {
    let dim = noise_op.dim();
    let states = local_plus_minus(dim);
    let parity = local_parity(dim);
    if t == 0.0 {
        let mut f = [[ZERO; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                f[a][b] = parity.trace_product(&ComplexMatrix::outer(&states[a], &states[b])?);
            }
        }
        return Ok(f);
    }
    let noise = NoiseModel::new(gamma, vec![noise_op.clone()])?;
    let lind = Lindbladian::new(rabi_hamiltonian(lambda, dim), &noise)?;
    let (steps, dt) = match dt {
        Some(dt) => {
            let n = ((t / dt) - 1e-9).ceil().max(1.0) as usize;
            (n, t / n as f64)
        }
        None => default_steps(lind.generator_bound(), t),
    };
    if lind.generator_bound() * dt > super::STEP_LIMIT {
        return Err(Error::StepSize {
            dt,
            bound: lind.generator_bound(),
            suggested: super::STEP_LIMIT / lind.generator_bound(),
        });
    }
    let map = lind.step_map(dt).power(steps);
    let mut f = [[ZERO; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let rho = map.apply(&ComplexMatrix::outer(&states[a], &states[b])?);
            f[a][b] = parity.trace_product(&rho);
        }
    }
    Ok(f)
}

fn parity_from_factors(f: &[[C64; 2]; 2], l: usize) -> f64 {
    let mut acc = ZERO;
    for row in f {
        for z in row {
            acc += z.powu(l as u32);
        }
    }
    0.5 * acc.re
}

/// Parity expectation of an `L`-spin GHZ state under the Rabi Hamiltonian
/// `sum_j (lambda/2)(|g><e| + h.c.)` with per-site noise `noise_op`.
pub fn ghz_parity_signal(l: usize, lambda: f64, noise_op: &ComplexMatrix, gamma: f64, t: f64, dt: Option<f64>) -> Result<f64> {
    check_sites(l)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be >= 0, got {t}")));
    }
    let f = ghz_site_factors(lambda, noise_op, gamma, t, dt)?;
    Ok(parity_from_factors(&f, l))
}

/// Parity expectation for the physical setup, with the exact Rabi frequency
/// and `S_z` taken in the eigenbasis of `H0`.
pub fn ghz_parity_expectation(
    l: usize,
    field: &StaticField,
    drive: &MicrowaveDrive,
    params: &NvParameters,
    noise: &NoiseSpec,
    t: f64,
) -> Result<f64> {
    check_sites(l)?;
    noise.validate()?;
    let es = nvmodel::eigensystem(field, params)?;
    let lambda = rabi::rabi_exact_with(&es, drive, params).lambda;
    ghz_parity_signal(l, lambda, &site_noise_operator(&es, noise.space), noise.gamma, t, None)
}

fn embed(local: &ComplexMatrix, site: usize, l: usize) -> Result<ComplexMatrix> {
    let id = ComplexMatrix::identity(local.dim());
    let parts: Vec<ComplexMatrix> = (0..l).map(|j| if j == site { local.clone() } else { id.clone() }).collect();
    kron(&parts)
}

fn kron_vectors(v: &[C64], l: usize) -> Vec<C64> {
    let mut acc = vec![ONE];
    for _ in 0..l {
        let mut next = Vec::with_capacity(acc.len() * v.len());
        for a in &acc {
            for b in v {
                next.push(a * b);
            }
        }
        acc = next;
    }
    acc
}

/// Parity expectation by integrating the full `d^L`-dimensional master
/// equation with local collapse operators.
pub fn ghz_parity_dense(l: usize, lambda: f64, noise_op: &ComplexMatrix, gamma: f64, t: f64, dt: Option<f64>) -> Result<f64> {
    check_sites(l)?;
    let d = noise_op.dim();
    let dim = d.pow(l as u32);
    if dim > MAX_DENSE_DIM {
        return Err(invalid(format!("dense GHZ space of dimension {dim} exceeds {MAX_DENSE_DIM}")));
    }
    let local_h = rabi_hamiltonian(lambda, d);
    let mut h = ComplexMatrix::zeros(dim);
    let mut ops = Vec::with_capacity(l);
    for j in 0..l {
        h += &embed(&local_h, j, l)?;
        ops.push(embed(noise_op, j, l)?);
    }
    let parity = kron(&vec![local_parity(d); l])?;
    let [p, m] = local_plus_minus(d);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let psi: Vec<C64> = kron_vectors(&p, l)
        .iter()
        .zip(kron_vectors(&m, l))
        .map(|(a, b)| (a + b) * r)
        .collect();
    let rho0 = DensityMatrix::pure(&psi, SpaceTag::MultiSpin { sites: l, local_dim: d })?;
    let lind = Lindbladian::new(h, &NoiseModel::new(gamma, ops)?)?;
    let opts = PropagateOptions {
        record_every: usize::MAX,
        observables: vec![("parity".into(), parity)],
        keep_states: false,
    };
    let traj = propagate_lindblad_with(&lind, &rho0, t, dt, &opts)?;
    Ok(*traj.observable("parity").and_then(|v| v.last()).expect("final sample"))
}

/// Closed form for the axial field, where the projected noise operator is
/// `diag(0, -1)` and each site reduces to a damped Bloch rotation.
pub fn ghz_parity_axial_analytic(l: usize, lambda: f64, gamma: f64, t: f64) -> Result<f64> {
    check_sites(l)?;
    if gamma < 0.0 || t < 0.0 {
        return Err(invalid("rate and time must be non-negative"));
    }
    // omega' = sqrt(lambda^2 - gamma^2/4), imaginary when overdamped
    let w = C64::new(lambda * lambda - 0.25 * gamma * gamma, 0.0).sqrt();
    let wt = w * t;
    let sinc_t = if wt.norm() < 1e-8 { C64::new(t, 0.0) } else { wt.sin() / w };
    let env = (-0.5 * gamma * t).exp();
    let m_zz = (wt.cos() + sinc_t * (0.5 * gamma)) * env;
    let m_zy = sinc_t * lambda * env;
    let f = m_zz + C64::new(0.0, 1.0) * m_zy;
    Ok(f.powu(l as u32).re)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayLaw {
    /// Axial field: `(1/6) L (3L-2) gamma lambda^2 t^3`.
    Cubic,
    /// Transverse field: `(1/2) L gamma t`.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortTimeFit {
    pub law: DecayLaw,
    /// Fitted `t^2` coefficient of `1 - <P>`.
    pub quadratic: f64,
    pub expected_quadratic: f64,
    /// Fitted decay coefficient: `+t^3` term for the cubic law, `-t` term
    /// for the linear law, of `<P> - cos(L lambda t)`.
    pub decay: f64,
    pub expected_decay: f64,
    pub rms_residual: f64,
    /// End of the fit window (µs).
    pub window: f64,
}

impl ShortTimeFit {
    pub fn decay_ratio(&self) -> f64 {
        self.decay / self.expected_decay
    }
}

/// Number of samples in the short-time window.
const FIT_SAMPLES: usize = 40;
/// Window edge in units of the fastest rate, `max(gamma, L lambda) * t`.
const FIT_WINDOW: f64 = 0.05;

/// Fits the early-time parity decay at an axial (`theta = 0`) or transverse
/// (`theta = pi/2`) field.
pub fn short_time_fit(
    l: usize,
    field: &StaticField,
    drive: &MicrowaveDrive,
    params: &NvParameters,
    noise: &NoiseSpec,
) -> Result<ShortTimeFit> {
    check_sites(l)?;
    noise.validate()?;
    let law = if field.theta.abs() < 1e-9 {
        DecayLaw::Cubic
    } else if (field.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-9 {
        DecayLaw::Linear
    } else {
        return Err(invalid("short-time expansion exists only for theta = 0 or 90 degrees"));
    };
    let es = nvmodel::eigensystem(field, params)?;
    let lambda = rabi::rabi_exact_with(&es, drive, params).lambda;
    let op = site_noise_operator(&es, noise.space);
    let gamma = noise.gamma;
    let lf = l as f64;
    let rate = gamma.max(lf * lambda);
    if rate == 0.0 {
        return Err(Error::IllConditionedFit("no time scale: lambda and gamma both vanish".into()));
    }
    let window = FIT_WINDOW / rate;
    let times: Vec<f64> = (1..=FIT_SAMPLES).map(|k| window * k as f64 / FIT_SAMPLES as f64).collect();
    let mut p = Vec::with_capacity(times.len());
    for &t in &times {
        p.push(ghz_parity_signal(l, lambda, &op, gamma, t, None)?);
    }
    let one_minus: Vec<f64> = p.iter().map(|v| v - 1.0).collect();
    let dev: Vec<f64> = p.iter().zip(&times).map(|(v, t)| v - (lf * lambda * t).cos()).collect();
    let (quad_powers, decay_powers): (&[i32], &[i32]) = match law {
        DecayLaw::Cubic => (&[2, 3, 4, 5, 6], &[3, 4, 5]),
        DecayLaw::Linear => (&[1, 2, 3, 4, 5], &[1, 2, 3, 4]),
    };
    let quad = polyfit(&times, &one_minus, quad_powers)?;
    let dfit = polyfit(&times, &dev, decay_powers)?;
    let (decay, expected_decay) = match law {
        DecayLaw::Cubic => (
            dfit.coefficient(3).unwrap_or(0.0),
            lf * (3.0 * lf - 2.0) * gamma * lambda * lambda / 6.0,
        ),
        DecayLaw::Linear => (-dfit.coefficient(1).unwrap_or(0.0), 0.5 * lf * gamma),
    };
    Ok(ShortTimeFit {
        law,
        quadratic: -quad.coefficient(2).unwrap_or(0.0),
        expected_quadratic: 0.5 * lf * lf * lambda * lambda,
        decay,
        expected_decay,
        rms_residual: dfit.rms_residual,
        window,
    })
}
