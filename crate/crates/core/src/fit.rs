//! Least-squares helpers shared by the dynamics and estimation modules.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::IllConditionedFit("need at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::IllConditionedFit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub powers: Vec<i32>,
    pub coefficients: Vec<f64>,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

impl PolyFit {
    pub fn coefficient(&self, power: i32) -> Option<f64> {
        self.powers
            .iter()
            .position(|&p| p == power)
            .map(|k| self.coefficients[k])
    }
}

/// Fits `y = sum_k c_k x^{p_k}`. The abscissa is rescaled to `[-1, 1]`-ish
/// magnitude internally so high powers stay well conditioned.
pub fn polyfit(x: &[f64], y: &[f64], powers: &[i32]) -> Result<PolyFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if powers.is_empty() {
        return Err(Error::Empty("fit powers"));
    }
    if x.len() < powers.len() + 1 {
        return Err(Error::IllConditionedFit(format!(
            "{} samples for {} coefficients",
            x.len(),
            powers.len()
        )));
    }
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::IllConditionedFit("abscissae are all zero".into()));
    }
    let a = DMatrix::from_fn(x.len(), powers.len(), |i, k| (x[i] / scale).powi(powers[k]));
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * smax {
        return Err(Error::IllConditionedFit(format!(
            "design matrix condition number {:.3e}",
            smax / smin
        )));
    }
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::IllConditionedFit(e.to_string()))?;
    let resid = &a * &sol - &b;
    let rms_residual = (resid.norm_squared() / x.len() as f64).sqrt();
    let coefficients = powers
        .iter()
        .zip(sol.iter())
        .map(|(&p, &c)| c / scale.powi(p))
        .collect();
    Ok(PolyFit {
        powers: powers.to_vec(),
        coefficients,
        rms_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..11).map(|k| k as f64 * 0.1 - 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let f = linear_regression(&x, &y).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-14 && (f.intercept + 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(linear_regression(&[1.0], &[2.0]).is_err());
        assert!(linear_regression(&[1.0, 1.0], &[2.0, 3.0]).is_err());
        assert!(polyfit(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &[1]).is_err());
    }

    #[test]
    fn polynomial_recovery_at_small_scale() {
        let x: Vec<f64> = (1..=40).map(|k| k as f64 * 1e-5).collect();
        let y: Vec<f64> = x.iter().map(|t| 2.0 * t.powi(3) - 7.0 * t.powi(4) + 0.5 * t.powi(5)).collect();
        let f = polyfit(&x, &y, &[3, 4, 5]).unwrap();
        assert!((f.coefficient(3).unwrap() - 2.0).abs() < 1e-9);
        assert!((f.coefficient(4).unwrap() + 7.0).abs() < 1e-3);
    }
}
