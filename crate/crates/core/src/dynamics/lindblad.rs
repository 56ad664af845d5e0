//! `d rho/dt = -i[H, rho] - gamma * sum_j [L_j, [L_j, rho]]` with a classical
//! fourth-order Runge-Kutta step.

use num_complex::Complex64 as C64;

use super::{default_steps, DensityMatrix, NoiseModel, Trajectory};
use crate::error::{Error, Result};
use crate::spinalg::{matmul_into, ComplexMatrix, I, ZERO};

/// Largest accepted `bound * dt`.
pub const STEP_LIMIT: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct Lindbladian {
    h: ComplexMatrix,
    ops: Vec<ComplexMatrix>,
    ops_sq: Vec<ComplexMatrix>,
    gamma: f64,
}

fn infinity_norm(m: &ComplexMatrix) -> f64 {
    let n = m.dim();
    (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl Lindbladian {
    pub fn new(h: ComplexMatrix, noise: &NoiseModel) -> Result<Self> {
        h.check_hermitian()?;
        for op in &noise.operators {
            if op.dim() != h.dim() {
                return Err(Error::DimensionMismatch {
                    expected: h.dim(),
                    found: op.dim(),
                });
            }
        }
        let ops_sq = noise.operators.iter().map(|l| l.matmul(l)).collect();
        Ok(Self {
            h,
            ops: noise.operators.clone(),
            ops_sq,
            gamma: noise.gamma,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.h
    }

    /// `||H|| + gamma * sum ||L||^2` in the induced infinity norm.
    pub fn generator_bound(&self) -> f64 {
        infinity_norm(&self.h) + self.gamma * self.ops.iter().map(|l| infinity_norm(l).powi(2)).sum::<f64>()
    }

    /// Writes the generator applied to `rho` into `out`.
    pub fn apply(&self, rho: &ComplexMatrix, out: &mut ComplexMatrix, scratch: &mut Scratch) {
        let n = self.dim();
        matmul_into(&self.h, rho, &mut scratch.a);
        matmul_into(rho, &self.h, &mut scratch.b);
        {
            let o = out.as_mut_slice();
            let a = scratch.a.as_slice();
            let b = scratch.b.as_slice();
            for k in 0..n * n {
                o[k] = -I * (a[k] - b[k]);
            }
        }
        if self.gamma == 0.0 {
            return;
        }
        let g = self.gamma;
        for (l, l2) in self.ops.iter().zip(&self.ops_sq) {
            // [L,[L,rho]] = L^2 rho - 2 L rho L + rho L^2
            matmul_into(l2, rho, &mut scratch.a);
            matmul_into(rho, l2, &mut scratch.b);
            matmul_into(l, rho, &mut scratch.c);
            matmul_into(&scratch.c, l, &mut scratch.d);
            let o = out.as_mut_slice();
            let (a, b, d) = (scratch.a.as_slice(), scratch.b.as_slice(), scratch.d.as_slice());
            for k in 0..n * n {
                o[k] -= (a[k] + b[k] - d[k] * 2.0) * g;
            }
        }
    }

    /// Dense `d^2 x d^2` generator acting on row-major `vec(rho)`.
    pub fn superoperator(&self) -> ComplexMatrix {
        let n = self.dim();
        let nn = n * n;
        let mut sup = ComplexMatrix::zeros(nn);
        let mut scratch = Scratch::new(n);
        let mut basis = ComplexMatrix::zeros(n);
        let mut out = ComplexMatrix::zeros(n);
        for col in 0..nn {
            basis.as_mut_slice().iter_mut().for_each(|z| *z = ZERO);
            basis.as_mut_slice()[col] = C64::new(1.0, 0.0);
            self.apply(&basis, &mut out, &mut scratch);
            for (row, z) in out.as_slice().iter().enumerate() {
                sup[(row, col)] = *z;
            }
        }
        sup
    }

    /// One RK4 step as a linear map.
    pub fn step_map(&self, dt: f64) -> StepMap {
        let sup = self.superoperator().scale_real(dt);
        let nn = sup.dim();
        let mut acc = ComplexMatrix::identity(nn);
        let mut term = ComplexMatrix::identity(nn);
        for k in 1..=4 {
            term = term.matmul(&sup).scale_real(1.0 / k as f64);
            acc += &term;
        }
        StepMap {
            map: acc,
            dim: self.dim(),
            dt,
            steps: 1,
        }
    }

    fn check_step(&self, dt: f64) -> Result<()> {
        let bound = self.generator_bound();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(crate::error::invalid(format!("time step must be positive, got {dt}")));
        }
        if bound * dt > STEP_LIMIT {
            return Err(Error::StepSize {
                dt,
                bound,
                suggested: STEP_LIMIT / bound,
            });
        }
        Ok(())
    }
}

/// Preallocated work matrices for [`Lindbladian::apply`].
pub struct Scratch {
    a: ComplexMatrix,
    b: ComplexMatrix,
    c: ComplexMatrix,
    d: ComplexMatrix,
}

impl Scratch {
    pub fn new(n: usize) -> Self {
        Self {
            a: ComplexMatrix::zeros(n),
            b: ComplexMatrix::zeros(n),
            c: ComplexMatrix::zeros(n),
            d: ComplexMatrix::zeros(n),
        }
    }
}

/// RK4 propagator for a fixed step, raised to integer powers.
#[derive(Clone, Debug)]
pub struct StepMap {
    map: ComplexMatrix,
    dim: usize,
    dt: f64,
    steps: usize,
}

impl StepMap {
    /// Map for `steps * dt`.
    pub fn power(&self, steps: usize) -> StepMap {
        let nn = self.map.dim();
        let mut result = ComplexMatrix::identity(nn);
        let mut base = self.map.clone();
        let mut e = steps;
        while e > 0 {
            if e & 1 == 1 {
                result = result.matmul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.matmul(&base);
            }
        }
        StepMap {
            map: result,
            dim: self.dim,
            dt: self.dt,
            steps: self.steps * steps,
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(rho.dim(), self.dim, "step map dimension mismatch");
        let v = self.map.matvec(rho.as_slice());
        ComplexMatrix::from_vec(self.dim, v).expect("dimension preserved")
    }
}

#[derive(Clone, Debug, Default)]
pub struct PropagateOptions {
    /// Record every `record_every`-th step (the final step is always kept).
    pub record_every: usize,
    /// Named observables evaluated at each recorded time as `Re Tr[O rho]`.
    pub observables: Vec<(String, ComplexMatrix)>,
    /// Keep the density matrices at recorded times.
    pub keep_states: bool,
}

/// Propagates to `t_final` and records every step. The step is shrunk so an
/// integer number of steps lands on `t_final`.
pub fn propagate_lindblad(
    h_eff: &ComplexMatrix,
    noise: &NoiseModel,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let opts = PropagateOptions {
        record_every: 1,
        observables: Vec::new(),
        keep_states: true,
    };
    propagate_lindblad_with(&Lindbladian::new(h_eff.clone(), noise)?, rho0, t_final, Some(dt), &opts)
}

/// As [`propagate_lindblad`] with an explicit generator and recording options.
/// `dt = None` picks a step from the generator bound.
pub fn propagate_lindblad_with(
    lind: &Lindbladian,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: Option<f64>,
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    let n = lind.dim();
    if rho0.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rho0.dim(),
        });
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(crate::error::invalid(format!("final time must be >= 0, got {t_final}")));
    }
    for (_, o) in &opts.observables {
        if o.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: o.dim(),
            });
        }
    }
    let (steps, dt) = match dt {
        Some(dt) => {
            lind.check_step(dt)?;
            let steps = ((t_final / dt) - 1e-9).ceil().max(if t_final > 0.0 { 1.0 } else { 0.0 }) as usize;
            (steps, if steps > 0 { t_final / steps as f64 } else { dt })
        }
        None if t_final == 0.0 => (0, 0.0),
        None => default_steps(lind.generator_bound(), t_final),
    };
    let stride = opts.record_every.max(1);
    let space = rho0.space();

    let mut traj = Trajectory {
        dt,
        steps,
        observables: opts.observables.iter().map(|(name, _)| (name.clone(), Vec::new())).collect(),
        ..Default::default()
    };
    let mut rho = rho0.matrix().clone();
    let record = |traj: &mut Trajectory, t: f64, rho: &ComplexMatrix| {
        traj.times.push(t);
        for ((_, series), (_, op)) in traj.observables.iter_mut().zip(&opts.observables) {
            series.push(op.trace_product(rho).re);
        }
        if opts.keep_states {
            traj.states.push(DensityMatrix::from_matrix_unchecked(rho.clone(), space));
        }
    };
    record(&mut traj, 0.0, &rho);

    let mut scratch = Scratch::new(n);
    let mut k1 = ComplexMatrix::zeros(n);
    let mut k2 = ComplexMatrix::zeros(n);
    let mut k3 = ComplexMatrix::zeros(n);
    let mut k4 = ComplexMatrix::zeros(n);
    let mut tmp = ComplexMatrix::zeros(n);
    for step in 1..=steps {
        lind.apply(&rho, &mut k1, &mut scratch);
        axpy_into(&rho, &k1, 0.5 * dt, &mut tmp);
        lind.apply(&tmp, &mut k2, &mut scratch);
        axpy_into(&rho, &k2, 0.5 * dt, &mut tmp);
        lind.apply(&tmp, &mut k3, &mut scratch);
        axpy_into(&rho, &k3, dt, &mut tmp);
        lind.apply(&tmp, &mut k4, &mut scratch);
        {
            let r = rho.as_mut_slice();
            let (a, b, c, d) = (k1.as_slice(), k2.as_slice(), k3.as_slice(), k4.as_slice());
            for k in 0..n * n {
                r[k] += (a[k] + (b[k] + c[k]) * 2.0 + d[k]) * (dt / 6.0);
            }
        }
        traj.max_trace_drift = traj.max_trace_drift.max((rho.trace() - C64::new(1.0, 0.0)).norm());
        traj.max_hermitian_asymmetry = traj.max_hermitian_asymmetry.max(rho.hermitian_asymmetry());
        if step % stride == 0 || step == steps {
            record(&mut traj, dt * step as f64, &rho);
        }
    }
    Ok(traj)
}

fn axpy_into(x: &ComplexMatrix, y: &ComplexMatrix, a: f64, out: &mut ComplexMatrix) {
    let (xs, ys) = (x.as_slice(), y.as_slice());
    for (k, o) in out.as_mut_slice().iter_mut().enumerate() {
        *o = xs[k] + ys[k] * a;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SpaceTag;
    use crate::spinalg::{double_commutator, pauli_x, pauli_z, ONE};

    fn plus() -> DensityMatrix {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        DensityMatrix::pure(&[C64::new(r, 0.0), C64::new(r, 0.0)], SpaceTag::QubitSubspace).unwrap()
    }

    #[test]
    fn apply_matches_definition() {
        let h = pauli_x().scale_real(0.7);
        let noise = NoiseModel::new(0.3, vec![pauli_z()]).unwrap();
        let lind = Lindbladian::new(h.clone(), &noise).unwrap();
        let rho = plus().into_matrix();
        let mut out = ComplexMatrix::zeros(2);
        lind.apply(&rho, &mut out, &mut Scratch::new(2));
        let want = &h.commutator(&rho).scale(-I) - &double_commutator(&pauli_z(), &rho).unwrap().scale_real(0.3);
        assert!(out.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn pure_dephasing_closed_form() {
        let gamma = 0.8;
        let noise = NoiseModel::new(gamma, vec![pauli_z()]).unwrap();
        let traj = propagate_lindblad(&ComplexMatrix::zeros(2), &noise, &plus(), 1.0, 1e-3).unwrap();
        let rho = traj.final_state().unwrap().matrix();
        // off-diagonals decay at gamma * (z_0 - z_1)^2
        assert!((rho[(0, 1)].re - 0.5 * (-4.0 * gamma).exp()).abs() < 1e-10);
        assert!((rho[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!(traj.max_trace_drift < 1e-12);
        let purities: Vec<f64> = traj.states.iter().map(|s| s.purity()).collect();
        assert!(purities.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn oversized_step_refused_with_suggestion() {
        let noise = NoiseModel::new(0.0, vec![]).unwrap();
        let h = pauli_x().scale_real(100.0);
        match propagate_lindblad(&h, &noise, &plus(), 1.0, 0.01) {
            Err(Error::StepSize { suggested, .. }) => assert!((suggested - 5e-4).abs() < 1e-12),
            other => panic!("expected step-size error, got {other:?}"),
        }
    }

    #[test]
    fn step_map_agrees_with_direct_integration() {
        let h = pauli_x().scale_real(2.0);
        let noise = NoiseModel::new(0.4, vec![pauli_z().scale_real(0.5)]).unwrap();
        let lind = Lindbladian::new(h, &noise).unwrap();
        let dt = 1e-3;
        let traj = propagate_lindblad_with(&lind, &plus(), 0.5, Some(dt), &PropagateOptions { keep_states: true, ..Default::default() }).unwrap();
        let m = lind.step_map(dt).power(500);
        assert!((m.elapsed() - 0.5).abs() < 1e-12);
        let rho = m.apply(plus().matrix());
        assert!(rho.max_abs_diff(traj.final_state().unwrap().matrix()) < 1e-13);
    }

    #[test]
    fn unitary_limit_matches_exponential() {
        let omega = 5.0;
        let h = pauli_x().scale_real(omega / 2.0);
        let noise = NoiseModel::new(0.0, vec![]).unwrap();
        let rho0 = DensityMatrix::pure(&[ONE, ZERO], SpaceTag::QubitSubspace).unwrap();
        let t = 1.3;
        let traj = propagate_lindblad(&h, &noise, &rho0, t, 1e-4).unwrap();
        let psi = crate::spinalg::matrix_exponential_action(&h, t, &[ONE, ZERO]).unwrap();
        let rho = traj.final_state().unwrap().matrix();
        assert!((rho[(0, 0)].re - psi[0].norm_sqr()).abs() < 1e-8);
    }
}
