//! Open-system dynamics: dephasing master equations for the Ramsey, Rabi and
//! GHZ schemes, a lab-frame driven reference, and short-time decay fits.
//!
//! Single-spin problems live in the 3-dim spin-1 space written in the
//! eigenbasis of the static Hamiltonian (columns g, e, b). The noise operator
//! is `S_z` in that basis, optionally projected onto `{|g>, |e>}`.

mod drive;
mod ghz;
mod lindblad;
mod schemes;

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nvmodel::EigenSystem;
use crate::spinalg::{self, hermitian_eigensystem, ComplexMatrix};

pub use drive::{
    extract_rabi_frequency, full_drive_propagation, full_drive_propagation_with, FullDriveOptions, CARRIER_STEP_LIMIT,
};
pub use ghz::{
    ghz_parity_axial_analytic, ghz_parity_dense, ghz_parity_expectation, ghz_parity_signal,
    ghz_site_factors, short_time_fit, DecayLaw, ShortTimeFit, MAX_GHZ_SITES,
};
pub use lindblad::{propagate_lindblad, propagate_lindblad_with, Lindbladian, PropagateOptions, StepMap, STEP_LIMIT};
pub use schemes::{
    rabi_probability, rabi_signal, ramsey_probability, ramsey_signal, site_noise_operator, sz_in_basis,
};

/// Default `bound * dt` used when no step is given.
pub const DEFAULT_STEP_FRACTION: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpaceTag {
    SpinOne,
    QubitSubspace,
    MultiSpin { sites: usize, local_dim: usize },
}

impl SpaceTag {
    pub fn dim(&self) -> usize {
        match *self {
            SpaceTag::SpinOne => 3,
            SpaceTag::QubitSubspace => 2,
            SpaceTag::MultiSpin { sites, local_dim } => local_dim.pow(sites as u32),
        }
    }
}

/// Which per-site noise operator the simulation uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpace {
    /// Full 3x3 `S_z` in the eigenbasis.
    #[default]
    SpinOne,
    /// `S_z` projected onto `{|g>, |e>}`.
    Subspace,
}

impl NoiseSpace {
    pub fn local_dim(self) -> usize {
        match self {
            NoiseSpace::SpinOne => 3,
            NoiseSpace::Subspace => 2,
        }
    }
}

/// Serializable noise settings: a dephasing rate (1/µs) and the space of the
/// collapse operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub gamma: f64,
    #[serde(default)]
    pub space: NoiseSpace,
}

impl NoiseSpec {
    pub fn new(gamma: f64, space: NoiseSpace) -> Result<Self> {
        let n = Self { gamma, space };
        n.validate()?;
        Ok(n)
    }

    pub fn noiseless(space: NoiseSpace) -> Self {
        Self { gamma: 0.0, space }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(invalid(format!("dephasing rate must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Dephasing rate with one Hermitian collapse operator per site, written in
/// the simulation basis.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    pub gamma: f64,
    pub operators: Vec<ComplexMatrix>,
}

impl NoiseModel {
    pub fn new(gamma: f64, operators: Vec<ComplexMatrix>) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(invalid(format!("dephasing rate must be >= 0, got {gamma}")));
        }
        for op in &operators {
            op.check_hermitian()?;
        }
        Ok(Self { gamma, operators })
    }

    /// Single site, `S_z` in the eigenbasis of `es`.
    pub fn single_site(gamma: f64, es: &EigenSystem, space: NoiseSpace) -> Result<Self> {
        Self::new(gamma, vec![site_noise_operator(es, space)])
    }
}

/// Hermitian, unit-trace, positive operator tagged with its space.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    space: SpaceTag,
}

/// Tolerances checked on construction.
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix, space: SpaceTag) -> Result<Self> {
        if matrix.dim() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: matrix.dim(),
            });
        }
        let rho = Self { matrix, space };
        if rho.matrix.hermitian_asymmetry() > HERMITIAN_TOL {
            return Err(Error::NotHermitian {
                asymmetry: rho.matrix.hermitian_asymmetry(),
            });
        }
        if rho.trace_drift() > TRACE_TOL {
            return Err(invalid(format!("density matrix trace is {}", rho.matrix.trace().re)));
        }
        let min = rho.min_eigenvalue()?;
        if min < -POSITIVITY_TOL {
            return Err(invalid(format!("density matrix has eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    /// Wraps a matrix without validation; used for intermediate solver states.
    pub fn from_matrix_unchecked(matrix: ComplexMatrix, space: SpaceTag) -> Self {
        Self { matrix, space }
    }

    pub fn pure(state: &[C64], space: SpaceTag) -> Result<Self> {
        let norm = spinalg::vector_norm(state);
        if norm == 0.0 {
            return Err(invalid("zero state vector"));
        }
        let v: Vec<C64> = state.iter().map(|z| z / norm).collect();
        Self::new(ComplexMatrix::projector(&v), space)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn space(&self) -> SpaceTag {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `Re Tr[op rho]`
    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        op.trace_product(&self.matrix).re
    }

    pub fn trace_drift(&self) -> f64 {
        (self.matrix.trace() - C64::new(1.0, 0.0)).norm()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.trace_product(&self.matrix).re
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut m = self.matrix.clone();
        // eigenvalues of the Hermitian part; asymmetry is bounded separately
        let adj = m.adjoint();
        m += &adj;
        let m = m.scale_real(0.5);
        Ok(hermitian_eigensystem(&m)?.energies[0])
    }
}

/// Sampled time evolution with named observables.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub observables: Vec<(String, Vec<f64>)>,
    /// Step actually used (µs).
    pub dt: f64,
    pub steps: usize,
    /// Largest `|Tr rho - 1|` over every step.
    pub max_trace_drift: f64,
    /// Largest Hermitian asymmetry over every step.
    pub max_hermitian_asymmetry: f64,
}

impl Trajectory {
    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn final_state(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }

    /// Smallest eigenvalue over the recorded states.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut min = f64::INFINITY;
        for s in &self.states {
            min = min.min(s.min_eigenvalue()?);
        }
        Ok(min)
    }

    /// CSV with `time_us` followed by one column per observable, in order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time_us".to_string()];
        header.extend(self.observables.iter().map(|(n, _)| n.clone()));
        w.write_record(&header)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.observables.iter().map(|(_, v)| v[k].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `dt = DEFAULT_STEP_FRACTION / bound`, shrunk so an integer number of steps
/// lands on `t`.
pub fn default_steps(bound: f64, t: f64) -> (usize, f64) {
    let dt_max = if bound > 0.0 { DEFAULT_STEP_FRACTION / bound } else { t };
    let n = ((t / dt_max).ceil() as usize).max(1);
    (n, t / n as f64)
}
