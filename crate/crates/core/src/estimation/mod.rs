//! Azimuth uncertainty: error propagation, sensitivity derivatives, the
//! interrogation-time search and the separable-versus-GHZ comparison.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::dynamics::{ghz_parity_axial_analytic, ghz_parity_signal, rabi_signal, ramsey_signal, site_noise_operator, NoiseSpec, MAX_GHZ_SITES};
use crate::error::{invalid, Error, Result};
use crate::fit::linear_regression;
use crate::nvmodel::{self, NvParameters, ReferenceDcField, StaticField};
use crate::rabi::{self, MicrowaveDrive};

/// Finite-difference step for the azimuth derivatives (rad).
pub const DERIVATIVE_STEP: f64 = 1e-4;
/// Relative agreement expected between steps `h` and `2h`.
pub const RICHARDSON_TOL: f64 = 1e-6;
/// Derivatives below this fraction of the differentiated quantity count as zero.
pub const ZERO_DERIVATIVE: f64 = 1e-9;

static RICHARDSON_WARNED: AtomicBool = AtomicBool::new(false);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingBudget {
    /// Total sensing time (µs).
    pub total_time: f64,
    /// Interrogation time per shot (µs).
    pub tau: f64,
}

impl SensingBudget {
    pub fn new(total_time: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid(format!("interrogation time must be positive, got {tau}")));
        }
        if !(total_time >= tau && total_time.is_finite()) {
            return Err(invalid(format!("total time {total_time} is shorter than tau {tau}")));
        }
        Ok(Self { total_time, tau })
    }

    /// `N = T / tau`, preparation and readout neglected.
    pub fn shots(&self) -> f64 {
        self.total_time / self.tau
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "sites")]
pub enum Scheme {
    RamseyDc,
    RabiMw,
    GhzRabi(usize),
}

impl Scheme {
    pub fn name(&self) -> String {
        match self {
            Scheme::RamseyDc => "ramsey_dc".into(),
            Scheme::RabiMw => "rabi_mw".into(),
            Scheme::GhzRabi(l) => format!("ghz_rabi_{l}"),
        }
    }

    fn sites(&self) -> usize {
        match self {
            Scheme::GhzRabi(l) => *l,
            _ => 1,
        }
    }
}

/// The field added on purpose to the unknown one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Dc(ReferenceDcField),
    Mw(MicrowaveDrive),
}

/// One interrogation time examined by [`optimize_interrogation`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub n: usize,
    pub tau: f64,
    pub coefficient: f64,
    pub r_squared: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyResult {
    pub scheme: Scheme,
    /// rad, or rad/µs when `derivative` is 1 (direct frequency estimation).
    pub delta_phi: f64,
    pub tau: f64,
    pub n: usize,
    /// Regression slope magnitude of the signal against the probed frequency.
    pub coefficient: f64,
    /// `|d lambda/d phi|` or `|d delta_omega/d phi|` (rad/µs per rad).
    pub derivative: f64,
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    /// Longest interrogation time considered (µs).
    pub tau_max: f64,
    pub probe_points: usize,
    /// Probe half-width as a fraction of the working-point frequency.
    pub probe_fraction: f64,
    /// Cap on the probe half-width as accumulated phase, `delta * L * tau`.
    pub probe_phase: f64,
    pub r_squared_min: f64,
    /// Stop once the coefficient falls below this fraction of its first value.
    pub cutoff: f64,
    pub max_harmonics: usize,
    /// Evaluate this harmonic only instead of scanning.
    pub harmonic: Option<usize>,
    /// Fixed integrator step (µs); chosen from the generator norm when absent.
    pub dt: Option<f64>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            tau_max: 20.0,
            probe_points: 11,
            probe_fraction: 0.01,
            probe_phase: 0.1,
            r_squared_min: 0.999,
            cutoff: 0.01,
            max_harmonics: 100_000,
            harmonic: None,
            dt: None,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_max > 0.0) {
            return Err(invalid("tau_max must be positive"));
        }
        if self.probe_points < 3 {
            return Err(invalid("need at least 3 probe points"));
        }
        if !(self.probe_fraction > 0.0 && self.probe_phase > 0.0) {
            return Err(invalid("probe window must be positive"));
        }
        if self.harmonic == Some(0) {
            return Err(invalid("harmonic index starts at 1"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid(format!("time step must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

fn probed_quantity(field: &StaticField, reference: &Reference, params: &NvParameters, dphi: f64) -> Result<f64> {
    let f = field.with_phi(field.phi_s + dphi);
    match reference {
        Reference::Dc(r) => Ok(nvmodel::ramsey_shift(&f, r, params)),
        Reference::Mw(d) => Ok(rabi::rabi_exact(&f, d, params)?.lambda),
    }
}

/// `d lambda/d phi` (microwave reference, exact Rabi frequency) or
/// `d delta_omega/d phi` (DC reference), where `phi` is the azimuth of the
/// unknown field relative to the reference. Values below `ZERO_DERIVATIVE`
/// times the differentiated quantity are returned as exactly 0.
pub fn sensitivity_derivative(field: &StaticField, reference: &Reference, params: &NvParameters) -> Result<f64> {
    let h = DERIVATIVE_STEP;
    let at = |x: f64| probed_quantity(field, reference, params, x);
    let center = at(0.0)?;
    let d1 = (at(h)? - at(-h)?) / (2.0 * h);
    let d2 = (at(2.0 * h)? - at(-2.0 * h)?) / (4.0 * h);
    if d1.abs() <= ZERO_DERIVATIVE * center.abs() {
        return Ok(0.0);
    }
    let richardson = (4.0 * d1 - d2) / 3.0;
    // Cancellation in the difference sets a floor below which the check is noise.
    let roundoff = 10.0 * f64::EPSILON * center.abs() / h;
    if (richardson - d1).abs() > (RICHARDSON_TOL * d1.abs()).max(roundoff) {
        if RICHARDSON_WARNED.swap(true, Ordering::Relaxed) {
            log::debug!("azimuth derivative {d1:e} disagrees with its extrapolation {richardson:e}");
        } else {
            log::warn!("azimuth derivative {d1:e} disagrees with its extrapolation {richardson:e}; further mismatches are logged at debug level");
        }
    }
    Ok(d1)
}

/// `sqrt(P(1-P)) / (|dP/dphi| sqrt N)`; infinite at `P` in `{0, 1}` or a
/// vanishing slope.
pub fn uncertainty_from_probability(p: f64, dp_dphi: f64, shots: f64) -> Result<f64> {
    check_shots(shots)?;
    if !(p > 0.0 && p < 1.0) || dp_dphi == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((p * (1.0 - p)).sqrt() / (dp_dphi.abs() * shots.sqrt()))
}

/// `sqrt(1 - <P>^2) / (|d<P>/dphi| sqrt N)` for a parity readout.
pub fn parity_uncertainty(parity: f64, dp_dphi: f64, shots: f64) -> Result<f64> {
    check_shots(shots)?;
    if !(parity.abs() < 1.0) || dp_dphi == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 - parity * parity).sqrt() / (dp_dphi.abs() * shots.sqrt()))
}

fn check_shots(shots: f64) -> Result<()> {
    if shots >= 1.0 && shots.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("shot count must be >= 1, got {shots}")))
    }
}

type Signal<'a> = Box<dyn Fn(f64, f64) -> Result<f64> + Sync + 'a>;

/// Everything the harmonic scan needs for one scheme.
struct Plan<'a> {
    scheme: Scheme,
    center: f64,
    tau_of: Box<dyn Fn(usize) -> f64 + 'a>,
    signal: Signal<'a>,
    /// 2 for a probability readout, 1 for parity.
    slope_scale: f64,
    derivative: f64,
}

fn scan(plan: &Plan, total_time: f64, opts: &OptimizeOptions) -> Result<UncertaintyResult> {
    let sites = plan.scheme.sites() as f64;
    let mut first = None;
    let mut candidates = Vec::new();
    let mut rejected = 0usize;
    let range = match opts.harmonic {
        Some(n) => n..=n,
        None => 1..=opts.max_harmonics,
    };
    for n in range {
        let tau = (plan.tau_of)(n);
        if opts.harmonic.is_none() && (tau > opts.tau_max || tau > total_time) {
            break;
        }
        if tau > total_time {
            return Err(invalid(format!("interrogation time {tau} exceeds the total time {total_time}")));
        }
        let half = (opts.probe_fraction * plan.center).min(opts.probe_phase / (sites * tau));
        let m = opts.probe_points;
        let mut xs = Vec::with_capacity(m);
        let mut ys = Vec::with_capacity(m);
        for k in 0..m {
            let dx = half * (2.0 * k as f64 / (m - 1) as f64 - 1.0);
            xs.push(dx);
            ys.push((plan.signal)(plan.center + dx, tau)?);
        }
        let fit = linear_regression(&xs, &ys)?;
        let coefficient = plan.slope_scale * fit.slope.abs();
        let c1 = *first.get_or_insert(coefficient);
        if opts.harmonic.is_none() && coefficient < opts.cutoff * c1 {
            break;
        }
        // A vanishing derivative makes every time diverge, so linearity is moot.
        if fit.r_squared < opts.r_squared_min && plan.derivative != 0.0 {
            rejected += 1;
            continue;
        }
        let delta = if plan.derivative == 0.0 || coefficient == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (coefficient * plan.derivative * (total_time / tau).sqrt())
        };
        log::debug!("{} n={n} tau={tau:.6} c={coefficient:.6e} delta={delta:.6e}", plan.scheme.name());
        candidates.push(Candidate {
            n,
            tau,
            coefficient,
            r_squared: fit.r_squared,
            delta,
        });
    }
    if rejected > 0 {
        log::warn!("{}: {rejected} interrogation times failed the linearity gate", plan.scheme.name());
    }
    let best = candidates
        .iter()
        .copied()
        .min_by(|a, b| a.delta.total_cmp(&b.delta))
        .ok_or_else(|| Error::IllConditionedFit(format!("{}: no interrogation time passed the linearity gate", plan.scheme.name())))?;
    Ok(UncertaintyResult {
        scheme: plan.scheme,
        delta_phi: best.delta,
        tau: best.tau,
        n: best.n,
        coefficient: best.coefficient,
        derivative: plan.derivative,
        candidates,
    })
}

fn check_working_point(value: f64, what: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Singular(format!("{what} working point {value} is not positive")))
    }
}

/// Scans the interrogation times of `scheme` and returns the one with the
/// smallest azimuth uncertainty. All examined times are kept in
/// `candidates`.
pub fn optimize_interrogation(
    scheme: Scheme,
    field: &StaticField,
    reference: &Reference,
    params: &NvParameters,
    noise: &NoiseSpec,
    total_time: f64,
    opts: &OptimizeOptions,
) -> Result<UncertaintyResult> {
    opts.validate()?;
    noise.validate()?;
    if !(total_time > 0.0 && total_time.is_finite()) {
        return Err(invalid(format!("total time must be positive, got {total_time}")));
    }
    let derivative = sensitivity_derivative(field, reference, params)?.abs();
    let gamma = noise.gamma;
    let dt = opts.dt;
    let plan = match (scheme, reference) {
        (Scheme::RamseyDc, Reference::Dc(r)) => {
            let es = nvmodel::eigensystem_with_reference(field, r, params)?;
            let op = site_noise_operator(&es, noise.space);
            let dw = nvmodel::ramsey_shift(field, r, params);
            check_working_point(dw, "Ramsey shift")?;
            Plan {
                scheme,
                center: dw,
                // even n keeps the slope of P against the shift positive
                tau_of: Box::new(move |n| (2 * n) as f64 * std::f64::consts::PI / dw),
                signal: Box::new(move |x, tau| ramsey_signal(x, &op, gamma, tau, dt)),
                slope_scale: 2.0,
                derivative,
            }
        }
        (Scheme::RabiMw, Reference::Mw(d)) => {
            let es = nvmodel::eigensystem(field, params)?;
            let op = site_noise_operator(&es, noise.space);
            let lambda = rabi::rabi_exact_with(&es, d, params).lambda;
            check_working_point(lambda, "Rabi frequency")?;
            Plan {
                scheme,
                center: lambda,
                tau_of: Box::new(move |n| (2 * n - 1) as f64 * std::f64::consts::PI / (2.0 * lambda)),
                signal: Box::new(move |x, tau| rabi_signal(x, &op, gamma, tau, dt)),
                slope_scale: 2.0,
                derivative,
            }
        }
        (Scheme::GhzRabi(l), Reference::Mw(d)) => {
            check_sites(l)?;
            let es = nvmodel::eigensystem(field, params)?;
            let op = site_noise_operator(&es, noise.space);
            let lambda = rabi::rabi_exact_with(&es, d, params).lambda;
            check_working_point(lambda, "Rabi frequency")?;
            Plan {
                scheme,
                center: lambda,
                tau_of: Box::new(move |n| (2 * n - 1) as f64 * std::f64::consts::PI / (2.0 * l as f64 * lambda)),
                signal: Box::new(move |x, tau| ghz_parity_signal(l, x, &op, gamma, tau, dt)),
                slope_scale: 1.0,
                derivative,
            }
        }
        _ => return Err(invalid(format!("scheme {} does not match the reference field", scheme.name()))),
    };
    scan(&plan, total_time, opts)
}

fn check_sites(l: usize) -> Result<()> {
    if (1..=MAX_GHZ_SITES).contains(&l) {
        Ok(())
    } else {
        Err(invalid(format!("number of spins must be in 1..={MAX_GHZ_SITES}, got {l}")))
    }
}

/// Uncertainty of the Rabi frequency itself for an axial field, where the
/// azimuth is undefined. Uses the closed-form axial parity signal.
pub fn optimize_axial_frequency(
    l: usize,
    lambda: f64,
    gamma: f64,
    total_time: f64,
    opts: &OptimizeOptions,
) -> Result<UncertaintyResult> {
    check_sites(l)?;
    opts.validate()?;
    check_working_point(lambda, "Rabi frequency")?;
    let plan = Plan {
        scheme: Scheme::GhzRabi(l),
        center: lambda,
        tau_of: Box::new(move |n| (2 * n - 1) as f64 * std::f64::consts::PI / (2.0 * l as f64 * lambda)),
        signal: Box::new(move |x, tau| ghz_parity_axial_analytic(l, x, gamma, tau)),
        slope_scale: 1.0,
        derivative: 1.0,
    };
    scan(&plan, total_time, opts)
}

/// Ratio of the uncertainty of `L` separable spins (single-spin result over
/// `sqrt L`) to that of an `L`-spin GHZ sensor. Both use the noise space of
/// `noise`. An axial field compares frequency uncertainties instead.
pub fn entangled_advantage_ratio(
    l: usize,
    field: &StaticField,
    drive: &MicrowaveDrive,
    params: &NvParameters,
    noise: &NoiseSpec,
    total_time: f64,
    opts: &OptimizeOptions,
) -> Result<f64> {
    check_sites(l)?;
    if l == 1 {
        return Ok(1.0);
    }
    let (single, entangled) = if field.theta.abs() < 1e-12 {
        let lambda = rabi::rabi_exact(field, drive, params)?.lambda;
        (
            optimize_axial_frequency(1, lambda, noise.gamma, total_time, opts)?,
            optimize_axial_frequency(l, lambda, noise.gamma, total_time, opts)?,
        )
    } else {
        let reference = Reference::Mw(*drive);
        (
            optimize_interrogation(Scheme::GhzRabi(1), field, &reference, params, noise, total_time, opts)?,
            optimize_interrogation(Scheme::GhzRabi(l), field, &reference, params, noise, total_time, opts)?,
        )
    };
    let separable = single.delta_phi / (l as f64).sqrt();
    if !separable.is_finite() || !entangled.delta_phi.is_finite() {
        return Err(Error::Singular("azimuth derivative vanishes; ratio undefined".into()));
    }
    Ok(separable / entangled.delta_phi)
}

/// Convenience accessor for the analytic Ramsey derivative.
pub fn ramsey_derivative_analytic(field: &StaticField, reference: &ReferenceDcField, params: &NvParameters) -> f64 {
    nvmodel::ramsey_shift_derivative(field, reference, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::NoiseSpace;

    fn setup(theta_deg: f64, phi_deg: f64) -> (StaticField, MicrowaveDrive, ReferenceDcField, NvParameters) {
        (
            StaticField::new(8.0, theta_deg.to_radians(), phi_deg.to_radians()).unwrap(),
            MicrowaveDrive::new(1.0, 20f64.to_radians(), 0.0).unwrap(),
            ReferenceDcField::new(1.0, 0.0).unwrap(),
            NvParameters::default(),
        )
    }

    #[test]
    fn substitution_example() {
        assert!((uncertainty_from_probability(0.5, 0.5, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let a = uncertainty_from_probability(0.3, 0.2, 10.0).unwrap();
        let b = uncertainty_from_probability(0.3, 0.2, 40.0).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!(uncertainty_from_probability(0.0, 0.5, 1.0).unwrap().is_infinite());
        assert!(uncertainty_from_probability(0.5, 0.0, 1.0).unwrap().is_infinite());
        assert!(uncertainty_from_probability(0.5, 0.5, 0.5).is_err());
        assert!((parity_uncertainty(0.0, 2.0, 4.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn budget_invariants() {
        assert_eq!(SensingBudget::new(10.0, 2.0).unwrap().shots(), 5.0);
        assert!(SensingBudget::new(1.0, 2.0).is_err());
        assert!(SensingBudget::new(1.0, 0.0).is_err());
    }

    #[test]
    fn ramsey_derivative_matches_closed_form() {
        for phi in [10.0, 47.0, 100.0, 250.0] {
            let (f, _, r, p) = setup(40.0, phi);
            let num = sensitivity_derivative(&f, &Reference::Dc(r), &p).unwrap();
            let exact = ramsey_derivative_analytic(&f, &r, &p);
            assert!((num / exact - 1.0).abs() < 1e-8, "{num} vs {exact}");
        }
    }

    #[test]
    fn derivatives_vanish_when_parallel() {
        for phi in [0.0, 180.0] {
            let (f, d, r, p) = setup(40.0, phi);
            assert_eq!(sensitivity_derivative(&f, &Reference::Dc(r), &p).unwrap(), 0.0);
            assert_eq!(sensitivity_derivative(&f, &Reference::Mw(d), &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn noiseless_rabi_reaches_tau_cap() {
        let (f, d, _, p) = setup(40.0, 60.0);
        let opts = OptimizeOptions {
            tau_max: 2.0,
            ..Default::default()
        };
        let res = optimize_interrogation(Scheme::RabiMw, &f, &Reference::Mw(d), &p, &NoiseSpec::noiseless(NoiseSpace::SpinOne), 100.0, &opts).unwrap();
        let expected = 1.0 / (res.derivative * (100.0 * res.tau).sqrt());
        // the regression over a finite window sees the curvature of the sine
        assert!((res.delta_phi / expected - 1.0).abs() < 5e-3, "{} vs {expected}", res.delta_phi);
        let lambda = rabi::rabi_exact(&f, &d, &p).unwrap().lambda;
        assert!(res.tau > 2.0 - std::f64::consts::PI / lambda);
    }

    #[test]
    fn single_site_ghz_matches_rabi() {
        let (f, d, _, p) = setup(40.0, 60.0);
        let noise = NoiseSpec::new(1.0, NoiseSpace::Subspace).unwrap();
        let opts = OptimizeOptions {
            tau_max: 3.0,
            ..Default::default()
        };
        let r = Reference::Mw(d);
        let a = optimize_interrogation(Scheme::RabiMw, &f, &r, &p, &noise, 100.0, &opts).unwrap();
        let b = optimize_interrogation(Scheme::GhzRabi(1), &f, &r, &p, &noise, 100.0, &opts).unwrap();
        assert!((a.delta_phi / b.delta_phi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn parallel_field_gives_infinite_uncertainty() {
        let (f, d, r, p) = setup(40.0, 0.0);
        let noise = NoiseSpec::new(1.0, NoiseSpace::SpinOne).unwrap();
        let opts = OptimizeOptions {
            tau_max: 1.0,
            ..Default::default()
        };
        let a = optimize_interrogation(Scheme::RabiMw, &f, &Reference::Mw(d), &p, &noise, 100.0, &opts).unwrap();
        let b = optimize_interrogation(Scheme::RamseyDc, &f, &Reference::Dc(r), &p, &noise, 100.0, &opts).unwrap();
        assert!(a.delta_phi.is_infinite() && b.delta_phi.is_infinite());
    }

    #[test]
    fn scheme_reference_mismatch_rejected() {
        let (f, _, r, p) = setup(40.0, 30.0);
        let e = optimize_interrogation(Scheme::RabiMw, &f, &Reference::Dc(r), &p, &NoiseSpec::noiseless(NoiseSpace::SpinOne), 10.0, &OptimizeOptions::default());
        assert!(e.is_err());
    }

    #[test]
    fn noiseless_advantage_is_sqrt_l() {
        let (f, d, _, p) = setup(40.0, 90.0);
        let opts = OptimizeOptions {
            tau_max: 1.0,
            ..Default::default()
        };
        let noise = NoiseSpec::noiseless(NoiseSpace::Subspace);
        let r = entangled_advantage_ratio(4, &f, &d, &p, &noise, 100.0, &opts).unwrap();
        assert!((r / 2.0 - 1.0).abs() < 0.02, "{r}");
        assert_eq!(entangled_advantage_ratio(1, &f, &d, &p, &noise, 100.0, &opts).unwrap(), 1.0);
    }
}
