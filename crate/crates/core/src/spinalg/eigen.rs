//! Cyclic complex Jacobi diagonalization of Hermitian matrices.
//!
//! Jacobi is slow for large matrices but delivers eigenvalues with error close
//! to one ulp of the matrix norm, which the characteristic-equation inversion
//! depends on. The largest systems diagonalized here are 64x64 in tests.

use num_complex::Complex64 as C64;

use super::{ComplexMatrix, ZERO};
use crate::error::Result;

const MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Ascending.
    pub energies: Vec<f64>,
    /// Column `k` is the eigenvector of `energies[k]`.
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = ComplexMatrix::from_real_diagonal(&self.energies);
        self.vectors.matmul(&d).matmul(&self.vectors.adjoint())
    }
}

/// Eigenvalues ascending, eigenvectors as orthonormal columns. Each
/// eigenvector's largest-magnitude component (first one on ties) is made real
/// and positive.
pub fn hermitian_eigensystem(m: &ComplexMatrix) -> Result<EigenDecomposition> {
    m.check_hermitian()?;
    let n = m.dim();
    let mut a = m.clone();
    // symmetrize exactly so the rotations see a Hermitian matrix
    for i in 0..n {
        a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
    let mut v = ComplexMatrix::identity(n);

    let total: f64 = a.norm_frobenius();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = off_diagonal_norm(&a);
        if off <= f64::EPSILON * 1e-3 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let energies: Vec<f64> = order.iter().map(|&k| a[(k, k)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (col, &k) in order.iter().enumerate() {
        let mut vec = v.column(k);
        fix_phase(&mut vec);
        for (row, z) in vec.into_iter().enumerate() {
            vectors[(row, col)] = z;
        }
    }
    Ok(EigenDecomposition { energies, vectors })
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Zeroes `a[p][q]` with the unitary `J = diag(1, e^{-i alpha}) R(c, s)`.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let phase = apq / r; // e^{i alpha}
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta.is_infinite() {
        0.0
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let ph_conj = phase.conj();
    // J columns: J[p][p]=c, J[p][q]=s, J[q][p]=-s e^{-ia}, J[q][q]=c e^{-ia}
    let jpp = C64::new(c, 0.0);
    let jpq = C64::new(s, 0.0);
    let jqp = ph_conj * (-s);
    let jqq = ph_conj * c;

    let n = a.dim();
    // A <- A J (columns p, q)
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * jpp + akq * jqp;
        a[(k, q)] = akp * jpq + akq * jqq;
    }
    // A <- J^dagger A (rows p, q)
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
        a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * jpp + vkq * jqp;
        v[(k, q)] = vkp * jpq + vkq * jqq;
    }
}

fn fix_phase(vec: &mut [C64]) {
    let max = vec.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = vec
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-10))
        .unwrap_or(0);
    let ph = vec[pivot].conj() / vec[pivot].norm();
    for z in vec.iter_mut() {
        *z *= ph;
    }
    vec[pivot] = C64::new(vec[pivot].re, 0.0);
}

/// `exp(-i H t) v` through the eigendecomposition of `H`.
pub fn matrix_exponential_action(h: &ComplexMatrix, t: f64, v: &[C64]) -> Result<Vec<C64>> {
    if v.len() != h.dim() {
        return Err(crate::error::Error::DimensionMismatch {
            expected: h.dim(),
            found: v.len(),
        });
    }
    let eig = hermitian_eigensystem(h)?;
    let n = h.dim();
    let mut out = vec![ZERO; n];
    for k in 0..n {
        let col = eig.vector(k);
        let amp: C64 = super::inner(&col, v) * C64::from_polar(1.0, -eig.energies[k] * t);
        for (o, c) in out.iter_mut().zip(&col) {
            *o += c * amp;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinalg::{pauli_x, pauli_z, spin1_operators, vector_norm, ONE};
    use std::f64::consts::PI;

    fn residual(m: &ComplexMatrix, e: &EigenDecomposition) -> f64 {
        let mut worst = 0.0_f64;
        for k in 0..m.dim() {
            let v = e.vector(k);
            let mv = m.matvec(&v);
            for (x, y) in mv.iter().zip(&v) {
                worst = worst.max((x - y * e.energies[k]).norm());
            }
        }
        worst
    }

    #[test]
    fn diagonal_input_sorted() {
        let m = ComplexMatrix::from_real_diagonal(&[1.0, 0.0, -1.0]);
        let e = hermitian_eigensystem(&m).unwrap();
        assert_eq!(e.energies, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn spin1_sx_spectrum() {
        let (sx, sy, _) = spin1_operators();
        for m in [sx, sy] {
            let e = hermitian_eigensystem(&m).unwrap();
            for (got, want) in e.energies.iter().zip([-1.0, 0.0, 1.0]) {
                assert!((got - want).abs() < 1e-14);
            }
            assert!(residual(&m, &e) < 1e-14);
        }
    }

    #[test]
    fn phase_convention_largest_component_real_positive() {
        let (sx, sy, _) = spin1_operators();
        let m = &sx + &sy;
        let e = hermitian_eigensystem(&m).unwrap();
        for k in 0..3 {
            let v = e.vector(k);
            let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-10)).unwrap();
            assert!(v[pivot].im == 0.0 && v[pivot].re > 0.0);
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = ComplexMatrix::zeros(2);
        m[(0, 1)] = ONE;
        assert!(hermitian_eigensystem(&m).is_err());
        assert!(matrix_exponential_action(&m, 1.0, &[ONE, ZERO]).is_err());
    }

    #[test]
    fn exp_sigma_z_quarter_turn() {
        let out = matrix_exponential_action(&pauli_z(), PI / 2.0, &[ONE, ZERO]).unwrap();
        let want = C64::from_polar(1.0, -PI / 2.0);
        assert!((out[0] - want).norm() < 1e-14);
        assert!(out[1].norm() < 1e-14);
    }

    #[test]
    fn exp_pi_pulse_transfers_population() {
        let omega = 3.7;
        let h = pauli_x().scale_real(omega / 2.0);
        let out = matrix_exponential_action(&h, PI / omega, &[ONE, ZERO]).unwrap();
        assert!(out[0].norm() < 1e-14);
        assert!((out[1].norm() - 1.0).abs() < 1e-14);
        assert!((vector_norm(&out) - 1.0).abs() < 1e-14);
    }
}
