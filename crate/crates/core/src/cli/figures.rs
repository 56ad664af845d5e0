//! Data behind each figure, one table per panel or curve family.

use rayon::prelude::*;

use super::config::RunConfig;
use super::output::{Cell, Table};
use crate::error::{invalid, Result};
use crate::estimation::{self, optimize_interrogation, OptimizeOptions, Reference, Scheme};
use crate::nvmodel::{self, NvParameters, ReferenceDcField, StaticField};
use crate::rabi::{self, MicrowaveDrive, PerturbativeModel, RabiMethod};

pub const FIGURE_IDS: [&str; 7] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

pub fn generate(id: &str, cfg: &RunConfig) -> Result<Vec<Table>> {
    match id {
        "fig2" => fig2(cfg),
        "fig3" => fig3(cfg),
        "fig4" => fig4(cfg),
        "fig5" => fig5(cfg),
        "fig6" => fig6(cfg),
        "fig7" => fig7(cfg),
        "fig8" => fig8(cfg),
        other => Err(invalid(format!("unknown figure `{other}`; expected one of {}", FIGURE_IDS.join(", ")))),
    }
}

/// `start, start + step, ...` up to and including `end`.
pub fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

/// Angle or amplitude as a file-name tag: `10`, `0p5`.
pub fn tag(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        v.to_string().replace('.', "p").replace('-', "m")
    }
}

fn with_theta(cfg: &RunConfig, theta_deg: f64) -> Result<StaticField> {
    StaticField::new(cfg.field.magnitude_mt, theta_deg.to_radians(), cfg.field.phi_deg.to_radians())
}

fn or_nan(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

fn warn_if_unreliable(field: &StaticField, params: &NvParameters, what: &str) {
    if let Ok(m) = PerturbativeModel::new(field, params) {
        if !m.reliable() {
            log::warn!("{what}: |c_db| = {:.3}, perturbative values are outside their regime", m.c_db.abs());
        }
    }
}

fn fig2(cfg: &RunConfig) -> Result<Vec<Table>> {
    let p = cfg.params;
    let drive = cfg.drive()?;
    let phis = grid(0.0, 360.0, cfg.figures.phi_step_deg);
    cfg.figures
        .fig2_theta_deg
        .par_iter()
        .map(|&theta| {
            let field = with_theta(cfg, theta)?;
            warn_if_unreliable(&field, &p, &format!("fig2 theta={theta}"));
            let es = nvmodel::eigensystem(&field, &p)?;
            let mut t = Table::new(format!("fig2_theta{}", tag(theta)), &["phi_deg", "lambda_exact", "lambda_qubit", "lambda_pert"]);
            for &phi in &phis {
                let d = drive.at_mismatch(&field, phi.to_radians());
                t.push(vec![
                    phi.into(),
                    rabi::rabi_exact_with(&es, &d, &p).lambda.into(),
                    or_nan(rabi::rabi_qubit(&field, &d, &p).map(|r| r.lambda)).into(),
                    or_nan(rabi::rabi_perturbative(&field, &d, &p).map(|r| r.lambda)).into(),
                ]);
            }
            Ok(t)
        })
        .collect()
}

fn fig3(cfg: &RunConfig) -> Result<Vec<Table>> {
    let p = cfg.params;
    let drive = cfg.drive()?;
    let phis = grid(0.0, 360.0, cfg.figures.phi_step_deg);
    let phis_rad: Vec<f64> = phis.iter().map(|v| v.to_radians()).collect();
    let mut tables = Vec::new();
    let mut geometry = Table::new(
        "fig3_ellipses",
        &["theta_deg", "method", "center_re", "center_im", "half_width", "half_height"],
    );
    for method in RabiMethod::ALL {
        let mut t = Table::new(format!("fig3_{}", method.name()), &["theta_deg", "phi_deg", "re", "im"]);
        for &theta in &cfg.figures.fig2_theta_deg {
            let field = with_theta(cfg, theta)?;
            let trace = rabi::ellipse_trace(method, &field, &drive, &p, &phis_rad)?;
            for (phi, z) in phis.iter().zip(trace) {
                t.push(vec![theta.into(), (*phi).into(), z.re.into(), z.im.into()]);
            }
            if method != RabiMethod::Exact {
                let e = rabi::ellipse_params(method, &field, &drive, &p)?;
                geometry.push(vec![
                    theta.into(),
                    method.name().into(),
                    e.center.re.into(),
                    e.center.im.into(),
                    e.half_width.into(),
                    e.half_height.into(),
                ]);
            }
        }
        tables.push(t);
    }
    tables.push(geometry);
    Ok(tables)
}

fn abs_derivative(field: &StaticField, reference: &Reference, p: &NvParameters) -> f64 {
    or_nan(estimation::sensitivity_derivative(field, reference, p).map(f64::abs))
}

fn fig4(cfg: &RunConfig) -> Result<Vec<Table>> {
    let p = cfg.params;
    let f = &cfg.figures;
    let phis = grid(0.0, 360.0, f.coarse_phi_step_deg);
    let base_drive = cfg.drive()?;
    let mut tables = Vec::new();
    for &theta in &f.curve_theta_deg {
        let field0 = with_theta(cfg, theta)?;
        let cells: Vec<(f64, f64, f64, f64)> = f
            .fig4_amplitude_mt
            .par_iter()
            .flat_map_iter(|&amp| {
                phis.iter().map(move |&phi| {
                    let field = field0.with_phi(phi.to_radians());
                    let d = MicrowaveDrive { amplitude: amp, phi_mw: 0.0, ..base_drive };
                    let r = ReferenceDcField { amplitude: amp, phi_r: 0.0 };
                    (amp, phi, abs_derivative(&field, &Reference::Mw(d), &p), abs_derivative(&field, &Reference::Dc(r), &p))
                })
            })
            .collect();
        let mut rabi_t = Table::new(format!("fig4_rabi_theta{}", tag(theta)), &["b_mw_mt", "phi_deg", "d_lambda_d_phi"]);
        let mut ramsey_t = Table::new(format!("fig4_ramsey_theta{}", tag(theta)), &["b_r_mt", "phi_deg", "d_domega_d_phi"]);
        for (amp, phi, a, b) in cells {
            rabi_t.push(vec![amp.into(), phi.into(), a.into()]);
            ramsey_t.push(vec![amp.into(), phi.into(), b.into()]);
        }
        tables.push(rabi_t);
        tables.push(ramsey_t);
    }
    Ok(tables)
}

/// Azimuths on `phis` ordered by decreasing `|derivative|`.
fn ranked_azimuths(field: &StaticField, reference: &Reference, p: &NvParameters, phis: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = phis
        .iter()
        .map(|&phi| (phi, abs_derivative(&field.with_phi(phi.to_radians()), reference, p)))
        .filter(|(_, d)| d.is_finite())
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    v
}

fn fig5(cfg: &RunConfig) -> Result<Vec<Table>> {
    let p = cfg.params;
    let f = &cfg.figures;
    let phis = grid(0.0, 180.0, f.phi_step_deg);
    let base_drive = cfg.drive()?;
    let cells: Vec<(f64, f64)> = f
        .fig5_magnitude_mt
        .iter()
        .flat_map(|&b| f.fig5_theta_deg.iter().map(move |&t| (b, t)))
        .collect();
    let mut tables = Vec::new();
    for &amp in &f.fig5_amplitudes_mt {
        let d = Reference::Mw(MicrowaveDrive { amplitude: amp, phi_mw: 0.0, ..base_drive });
        let r = Reference::Dc(ReferenceDcField { amplitude: amp, phi_r: 0.0 });
        for (name, reference, col) in [("rabi_bmw", d, "d_lambda_d_phi"), ("ramsey_br", r, "d_domega_d_phi")] {
            let rows: Vec<Result<Vec<Cell>>> = cells
                .par_iter()
                .map(|&(b, theta)| {
                    let field = StaticField::new(b, theta.to_radians(), 0.0)?;
                    let best = ranked_azimuths(&field, &reference, &p, &phis).first().copied().unwrap_or((f64::NAN, f64::NAN));
                    Ok(vec![b.into(), theta.into(), best.0.into(), best.1.into()])
                })
                .collect();
            let mut t = Table::new(format!("fig5_{name}{}", tag(amp)), &["b_mt", "theta_deg", "phi_deg", col]);
            for row in rows {
                t.push(row?);
            }
            tables.push(t);
        }
    }
    Ok(tables)
}

fn uncertainty(
    scheme: Scheme,
    field: &StaticField,
    reference: &Reference,
    cfg: &RunConfig,
    opts: &OptimizeOptions,
) -> (f64, f64, usize) {
    match optimize_interrogation(scheme, field, reference, &cfg.params, &cfg.noise, cfg.total_time_us, opts) {
        Ok(r) => (r.delta_phi, r.tau, r.n),
        Err(e) => {
            log::warn!("{} at theta={:.3} phi={:.3}: {e}", scheme.name(), field.theta, field.phi_s);
            (f64::NAN, f64::NAN, 0)
        }
    }
}

fn curve_drives(cfg: &RunConfig, theta_mw: &[f64]) -> Result<Vec<(f64, Reference, Reference)>> {
    let base_drive = cfg.drive()?;
    let base_ref = cfg.reference_field()?;
    cfg.figures
        .curve_theta_deg
        .iter()
        .zip(theta_mw)
        .map(|(&theta, &tmw)| {
            let d = MicrowaveDrive {
                theta_mw: tmw.to_radians(),
                phi_mw: 0.0,
                ..base_drive
            };
            d.validate()?;
            Ok((theta, Reference::Mw(d), Reference::Dc(ReferenceDcField { phi_r: 0.0, ..base_ref })))
        })
        .collect()
}

fn fig6(cfg: &RunConfig) -> Result<Vec<Table>> {
    let opts = &cfg.optimize;
    let phis = grid(0.0, 180.0, cfg.figures.coarse_phi_step_deg);
    let mut tables = Vec::new();
    for (theta, mw, dc) in curve_drives(cfg, &cfg.figures.fig6_theta_mw_deg)? {
        let field0 = with_theta(cfg, theta)?;
        let rows: Vec<Vec<Cell>> = phis
            .par_iter()
            .map(|&phi| {
                let field = field0.with_phi(phi.to_radians());
                let (a, ta, na) = uncertainty(Scheme::RamseyDc, &field, &dc, cfg, opts);
                let (b, tb, nb) = uncertainty(Scheme::RabiMw, &field, &mw, cfg, opts);
                vec![phi.into(), a.into(), b.into(), ta.into(), na.into(), tb.into(), nb.into()]
            })
            .collect();
        let mut t = Table::new(
            format!("fig6_theta{}", tag(theta)),
            &["phi_deg", "delta_phi_ramsey", "delta_phi_rabi", "tau_ramsey_us", "n_ramsey", "tau_rabi_us", "n_rabi"],
        );
        for r in rows {
            t.push(r);
        }
        tables.push(t);
    }
    Ok(tables)
}

/// Number of largest-derivative azimuths tried when minimizing over `phi`.
const AZIMUTH_CANDIDATES: usize = 3;

fn best_over_azimuth(scheme: Scheme, field: &StaticField, reference: &Reference, cfg: &RunConfig, phis: &[f64]) -> (f64, f64) {
    let mut best = (f64::NAN, f64::INFINITY);
    for (phi, _) in ranked_azimuths(field, reference, &cfg.params, phis).into_iter().take(AZIMUTH_CANDIDATES) {
        let (d, _, _) = uncertainty(scheme, &field.with_phi(phi.to_radians()), reference, cfg, &cfg.optimize);
        if d < best.1 {
            best = (phi, d);
        }
    }
    best
}

fn fig7(cfg: &RunConfig) -> Result<Vec<Table>> {
    let phis = grid(0.0, 180.0, cfg.figures.coarse_phi_step_deg);
    let mut tables = Vec::new();
    for (theta, mw, dc) in curve_drives(cfg, &cfg.figures.fig7_theta_mw_deg)? {
        let rows: Vec<Result<Vec<Cell>>> = cfg
            .figures
            .fig7_magnitude_mt
            .par_iter()
            .map(|&b| {
                let field = StaticField::new(b, theta.to_radians(), 0.0)?;
                let (pr, dr) = best_over_azimuth(Scheme::RabiMw, &field, &mw, cfg, &phis);
                let (pd, dd) = best_over_azimuth(Scheme::RamseyDc, &field, &dc, cfg, &phis);
                Ok(vec![b.into(), pd.into(), dd.into(), pr.into(), dr.into()])
            })
            .collect();
        let mut t = Table::new(
            format!("fig7_theta{}", tag(theta)),
            &["b_mt", "phi_ramsey_deg", "delta_phi_ramsey", "phi_rabi_deg", "delta_phi_rabi"],
        );
        for r in rows {
            t.push(r?);
        }
        tables.push(t);
    }
    Ok(tables)
}

fn fig8(cfg: &RunConfig) -> Result<Vec<Table>> {
    let f = &cfg.figures;
    let drive = MicrowaveDrive {
        phi_mw: 0.0,
        ..cfg.drive()?
    };
    let noise = cfg.ghz_noise();
    let sites: Vec<usize> = (1..=f.fig8_max_sites).collect();
    let mut columns = vec!["L".to_string()];
    columns.extend(f.fig8_theta_deg.iter().map(|t| format!("ratio_theta{}", tag(*t))));
    let per_theta: Vec<Vec<f64>> = f
        .fig8_theta_deg
        .par_iter()
        .map(|&theta| -> Result<Vec<f64>> {
            let field = StaticField::new(cfg.field.magnitude_mt, theta.to_radians(), f.fig8_phi_deg.to_radians())?;
            sites
                .iter()
                .map(|&l| estimation::entangled_advantage_ratio(l, &field, &drive, &cfg.params, &noise, cfg.total_time_us, &cfg.optimize))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut ratio = Table {
        name: "fig8".into(),
        columns,
        rows: Vec::new(),
    };
    for (k, &l) in sites.iter().enumerate() {
        let mut row: Vec<Cell> = vec![l.into()];
        row.extend(per_theta.iter().map(|v| Cell::Num(v[k])));
        ratio.push(row);
    }

    let axial = StaticField::new(cfg.field.magnitude_mt, 0.0, 0.0)?;
    let lambda = rabi::rabi_exact(&axial, &drive, &cfg.params)?.lambda;
    let single = estimation::optimize_axial_frequency(1, lambda, noise.gamma, cfg.total_time_us, &cfg.optimize)?;
    let rows: Vec<Result<Vec<Cell>>> = (1..=f.fig8_axial_max_sites)
        .into_par_iter()
        .map(|l| {
            let ent = estimation::optimize_axial_frequency(l, lambda, noise.gamma, cfg.total_time_us, &cfg.optimize)?;
            let sep = single.delta_phi / (l as f64).sqrt();
            Ok(vec![l.into(), ent.delta_phi.into(), sep.into(), (sep / ent.delta_phi).into(), ent.tau.into()])
        })
        .collect();
    let mut axial_t = Table::new(
        "fig8_axial",
        &["L", "delta_lambda_entangled", "delta_lambda_separable", "ratio", "tau_us"],
    );
    for r in rows {
        axial_t.push(r?);
    }
    Ok(vec![ratio, axial_t])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_end() {
        assert_eq!(grid(0.0, 1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(grid(0.0, 360.0, 1.0).len(), 361);
    }

    #[test]
    fn tags() {
        assert_eq!(tag(10.0), "10");
        assert_eq!(tag(0.5), "0p5");
    }

    #[test]
    fn fig2_layout() {
        let mut cfg = RunConfig::default();
        cfg.figures.phi_step_deg = 90.0;
        let t = fig2(&cfg).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t[0].name, "fig2_theta10");
        assert_eq!(t[0].columns, ["phi_deg", "lambda_exact", "lambda_qubit", "lambda_pert"]);
        assert_eq!(t[0].rows.len(), 5);
    }

    #[test]
    fn unknown_figure() {
        assert!(generate("fig9", &RunConfig::default()).unwrap_err().is_validation());
    }
}
