//! Cross-product parameter sweeps. Failing cells keep their row and carry the
//! error text.

use rayon::prelude::*;

use super::config::RunConfig;
use super::output::{Cell, Table};
use crate::error::Result;
use crate::estimation::{self, optimize_interrogation, OptimizeOptions, Reference, Scheme};
use crate::nvmodel::{self, ReferenceDcField, StaticField};
use crate::rabi::{self, MicrowaveDrive};

pub const SWEEP_COLUMNS: [&str; 17] = [
    "theta_deg",
    "magnitude_mt",
    "phi_deg",
    "b_mw_mt",
    "b_r_mt",
    "sites",
    "n",
    "lambda_exact",
    "lambda_qubit",
    "lambda_pert",
    "domega",
    "d_lambda_d_phi",
    "d_domega_d_phi",
    "delta_phi",
    "tau_us",
    "n_best",
    "error",
];

#[derive(Clone, Copy, Debug)]
struct Point {
    theta_deg: f64,
    magnitude_mt: f64,
    phi_deg: f64,
    b_mw_mt: f64,
    b_r_mt: f64,
    sites: Option<usize>,
    n: Option<usize>,
}

fn axis<T: Copy>(v: &Option<Vec<T>>, base: T) -> Vec<T> {
    v.clone().unwrap_or_else(|| vec![base])
}

fn points(cfg: &RunConfig) -> Vec<Point> {
    let s = &cfg.sweep;
    let sites: Vec<Option<usize>> = s.sites.as_ref().map_or(vec![None], |v| v.iter().copied().map(Some).collect());
    let ns: Vec<Option<usize>> = s.n.as_ref().map_or(vec![None], |v| v.iter().copied().map(Some).collect());
    let mut out = Vec::new();
    for theta_deg in axis(&s.theta_deg, cfg.field.theta_deg) {
        for magnitude_mt in axis(&s.magnitude_mt, cfg.field.magnitude_mt) {
            for phi_deg in axis(&s.phi_deg, cfg.field.phi_deg) {
                for b_mw_mt in axis(&s.b_mw_mt, cfg.drive.amplitude_mt) {
                    for b_r_mt in axis(&s.b_r_mt, cfg.reference.amplitude_mt) {
                        for &l in &sites {
                            for &n in &ns {
                                out.push(Point {
                                    theta_deg,
                                    magnitude_mt,
                                    phi_deg,
                                    b_mw_mt,
                                    b_r_mt,
                                    sites: l,
                                    n,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn opt_cell(v: Option<usize>) -> Cell {
    v.map_or(Cell::Text(String::new()), Cell::from)
}

fn evaluate(cfg: &RunConfig, pt: &Point) -> Vec<Cell> {
    let mut errors: Vec<String> = Vec::new();
    let mut note = |r: Result<f64>| match r {
        Ok(v) => v,
        Err(e) => {
            errors.push(e.to_string());
            f64::NAN
        }
    };
    let built = (|| -> Result<(StaticField, MicrowaveDrive, ReferenceDcField)> {
        let field = StaticField::new(pt.magnitude_mt, pt.theta_deg.to_radians(), pt.phi_deg.to_radians())?;
        let drive = MicrowaveDrive {
            amplitude: pt.b_mw_mt,
            ..cfg.drive()?
        };
        drive.validate()?;
        let reference = ReferenceDcField::new(pt.b_r_mt, cfg.reference.phi_r_deg.to_radians())?;
        Ok((field, drive, reference))
    })();
    let mut values = [f64::NAN; 8];
    let mut best_n = None;
    match built {
        Err(e) => errors.push(e.to_string()),
        Ok((field, drive, reference)) => {
            let p = &cfg.params;
            values[0] = note(rabi::rabi_exact(&field, &drive, p).map(|r| r.lambda));
            values[1] = note(rabi::rabi_qubit(&field, &drive, p).map(|r| r.lambda));
            values[2] = note(rabi::rabi_perturbative(&field, &drive, p).map(|r| r.lambda));
            values[3] = nvmodel::ramsey_shift(&field, &reference, p);
            values[4] = note(estimation::sensitivity_derivative(&field, &Reference::Mw(drive), p).map(f64::abs));
            values[5] = note(estimation::sensitivity_derivative(&field, &Reference::Dc(reference), p).map(f64::abs));
            if cfg.sweep.uncertainty {
                let scheme = match (pt.sites, cfg.scheme) {
                    (Some(l), _) => Scheme::GhzRabi(l),
                    (None, s) => s,
                };
                let noise = match scheme {
                    Scheme::GhzRabi(_) => cfg.ghz_noise(),
                    _ => cfg.noise,
                };
                let reference = match scheme {
                    Scheme::RamseyDc => Reference::Dc(reference),
                    _ => Reference::Mw(drive),
                };
                let opts = OptimizeOptions {
                    harmonic: pt.n,
                    ..cfg.optimize.clone()
                };
                match optimize_interrogation(scheme, &field, &reference, p, &noise, cfg.total_time_us, &opts) {
                    Ok(r) => {
                        values[6] = r.delta_phi;
                        values[7] = r.tau;
                        best_n = Some(r.n);
                    }
                    Err(e) => errors.push(e.to_string()),
                }
            }
        }
    }
    let mut row: Vec<Cell> = vec![
        pt.theta_deg.into(),
        pt.magnitude_mt.into(),
        pt.phi_deg.into(),
        pt.b_mw_mt.into(),
        pt.b_r_mt.into(),
        opt_cell(pt.sites),
        opt_cell(pt.n),
    ];
    row.extend(values.iter().map(|&v| Cell::Num(v)));
    row.push(opt_cell(best_n));
    row.push(Cell::Text(errors.join("; ")));
    row
}

/// Runs every cell of the cross product; cells are evaluated in parallel
/// and emitted in grid order.
pub fn run_sweep(cfg: &RunConfig) -> Result<Table> {
    cfg.validate()?;
    let rows: Vec<Vec<Cell>> = points(cfg).par_iter().map(|pt| evaluate(cfg, pt)).collect();
    let mut t = Table::new("sweep", &SWEEP_COLUMNS);
    for r in rows {
        t.push(r);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_order_and_failures() {
        let cfg = RunConfig::from_json(r#"{"sweep": {"theta_deg": [0.0, 40.0], "phi_deg": [0.0, 90.0]}}"#).unwrap();
        let t = run_sweep(&cfg).unwrap();
        assert_eq!(t.rows.len(), 4);
        let theta = t.column("theta_deg").unwrap();
        assert_eq!(theta, vec![0.0, 0.0, 40.0, 40.0]);
        let k = t.columns.iter().position(|c| c == "error").unwrap();
        match &t.rows[0][k] {
            Cell::Text(s) => assert!(!s.is_empty(), "axial cell should report the perturbative singularity"),
            other => panic!("{other:?}"),
        }
        match &t.rows[3][k] {
            Cell::Text(s) => assert!(s.is_empty(), "{s}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_axis_rejected_before_compute() {
        assert!(RunConfig::from_json(r#"{"sweep": {"phi_deg": []}}"#).is_err());
    }

    #[test]
    fn sensitivity_map_matches_figure_grid() {
        let cfg = RunConfig::from_json(
            r#"{"field": {"theta_deg": 10.0}, "sweep": {"b_mw_mt": [0.5, 1.0], "phi_deg": [30.0, 60.0]}}"#,
        )
        .unwrap();
        let t = run_sweep(&cfg).unwrap();
        let fig = crate::cli::figures::generate("fig4", &RunConfig::default()).unwrap();
        let map = fig.iter().find(|t| t.name == "fig4_rabi_theta10").unwrap();
        let (amps, phis, vals) = (
            map.column("b_mw_mt").unwrap(),
            map.column("phi_deg").unwrap(),
            map.column("d_lambda_d_phi").unwrap(),
        );
        let got = t.column("d_lambda_d_phi").unwrap();
        for (k, (a, p)) in t.column("b_mw_mt").unwrap().iter().zip(t.column("phi_deg").unwrap()).enumerate() {
            let j = (0..amps.len()).find(|&j| amps[j] == *a && phis[j] == p).unwrap();
            assert_eq!(got[k], vals[j]);
        }
    }

    #[test]
    fn noiseless_ghz_sweep_scales_as_inverse_l() {
        let cfg = RunConfig::from_json(
            r#"{"noise": {"gamma": 0.0}, "total_time_us": 1000.0, "sweep": {"sites": [1, 2, 3, 4, 5, 6], "uncertainty": true}}"#,
        )
        .unwrap();
        let t = run_sweep(&cfg).unwrap();
        let x: Vec<f64> = t.column("sites").unwrap().iter().map(|l| l.ln()).collect();
        let y: Vec<f64> = t.column("delta_phi").unwrap().iter().map(|d| d.ln()).collect();
        let fit = crate::fit::linear_regression(&x, &y).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.01, "{}", fit.slope);
    }
}
