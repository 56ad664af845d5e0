//! `nvvm` command line: single-point queries, figure data and sweeps.

pub mod config;
pub mod figures;
pub mod output;
pub mod sweep;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dynamics::NoiseSpace;
use crate::error::{invalid, Error, Result};
use crate::nvmodel;
use crate::rabi::{self, RabiMethod, Transition};

pub use config::RunConfig;
pub use output::{write_outputs, Cell, Table};

/// Environment variable capping the worker pool.
pub const WORKERS_ENV: &str = "NVVM_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "nvvm", version, about = "Vector DC magnetometry with NV centers")]
pub struct Cli {
    /// JSON run configuration, or a manifest written by an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that patch the loaded configuration. Angles in degrees.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Target field magnitude (mT).
    #[arg(long, global = true)]
    pub b: Option<f64>,
    #[arg(long, global = true)]
    pub theta_deg: Option<f64>,
    #[arg(long, global = true)]
    pub phi_deg: Option<f64>,
    /// Microwave amplitude (mT).
    #[arg(long, global = true)]
    pub b_mw: Option<f64>,
    #[arg(long, global = true)]
    pub theta_mw_deg: Option<f64>,
    #[arg(long, global = true)]
    pub phi_mw_deg: Option<f64>,
    /// Drive the g-b transition instead of g-e.
    #[arg(long, global = true)]
    pub second_transition: bool,
    /// Reference DC amplitude (mT).
    #[arg(long, global = true)]
    pub b_r: Option<f64>,
    #[arg(long, global = true)]
    pub phi_r_deg: Option<f64>,
    /// Dephasing rate (1/µs).
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Project the single-spin noise operator onto the driven pair.
    #[arg(long, global = true)]
    pub projected_noise: bool,
    /// Total sensing time (µs).
    #[arg(long, global = true)]
    pub total_time: Option<f64>,
    #[arg(long, global = true)]
    pub tau_max: Option<f64>,
    /// Fixed integrator step (µs).
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut cfg.field.magnitude_mt, self.b);
        set(&mut cfg.field.theta_deg, self.theta_deg);
        set(&mut cfg.field.phi_deg, self.phi_deg);
        set(&mut cfg.drive.amplitude_mt, self.b_mw);
        set(&mut cfg.drive.theta_mw_deg, self.theta_mw_deg);
        set(&mut cfg.drive.phi_mw_deg, self.phi_mw_deg);
        set(&mut cfg.reference.amplitude_mt, self.b_r);
        set(&mut cfg.reference.phi_r_deg, self.phi_r_deg);
        set(&mut cfg.noise.gamma, self.gamma);
        set(&mut cfg.total_time_us, self.total_time);
        set(&mut cfg.optimize.tau_max, self.tau_max);
        if self.second_transition {
            cfg.drive.transition = Transition::GroundSecond;
        }
        if self.projected_noise {
            cfg.noise.space = NoiseSpace::Subspace;
        }
        if self.dt.is_some() {
            cfg.optimize.dt = self.dt;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Field magnitude and polar angle from the two transition frequencies.
    Invert {
        /// rad/µs
        #[arg(long, allow_hyphen_values = true)]
        omega_plus: f64,
        /// rad/µs
        #[arg(long, allow_hyphen_values = true)]
        omega_minus: f64,
    },
    /// Labeled spectrum of the static Hamiltonian.
    Eig,
    /// Rabi frequency by each method.
    Rabi {
        /// exact, qubit or perturbative; all when omitted.
        #[arg(long)]
        method: Option<String>,
    },
    /// Closed-form ellipse of a method, or its sampled trace as CSV.
    Ellipse {
        #[arg(long, default_value = "qubit")]
        method: String,
        /// Print the trace over this many azimuths instead of the parameters.
        #[arg(long)]
        trace: Option<usize>,
    },
    /// Cross-product sweep described by a config file.
    Sweep { path: PathBuf },
    /// Data for one figure (fig2 .. fig8) or `all`.
    Figure { id: String },
}

/// Exit status for a finished command.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_validation() => 2,
        Err(_) => 1,
    }
}

fn load_config(path: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// Worker pool sized by `NVVM_WORKERS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| invalid(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn print_json(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Invert { omega_plus, omega_minus } => {
            let cfg = load_config(cli.config.as_ref(), &cli.overrides)?;
            let inv = nvmodel::invert_transitions(*omega_plus, *omega_minus, &cfg.params)?;
            print_json(
                out,
                &json!({
                    "x0": inv.x0,
                    "magnitude_mt": inv.magnitude,
                    "theta_deg": inv.theta.map(f64::to_degrees),
                }),
            )
        }
        Command::Eig => {
            let cfg = load_config(cli.config.as_ref(), &cli.overrides)?;
            let es = nvmodel::eigensystem(&cfg.field()?, &cfg.params)?;
            print_json(
                out,
                &json!({
                    "energies": es.energies,
                    "omega_minus": es.omega_minus,
                    "omega_plus": es.omega_plus,
                    "degenerate": es.degenerate,
                }),
            )
        }
        Command::Rabi { method } => {
            let cfg = load_config(cli.config.as_ref(), &cli.overrides)?;
            let methods = match method {
                Some(m) => vec![m.parse::<RabiMethod>()?],
                None => RabiMethod::ALL.to_vec(),
            };
            let (field, drive) = (cfg.field()?, cfg.drive()?);
            let mut rows = Vec::new();
            for m in methods {
                match rabi::rabi(m, &field, &drive, &cfg.params) {
                    Ok(r) => rows.push(json!({
                        "method": m.name(),
                        "lambda": r.lambda,
                        "re": r.matrix_element.re,
                        "im": r.matrix_element.im,
                    })),
                    Err(e) => rows.push(json!({"method": m.name(), "error": e.to_string()})),
                }
            }
            print_json(out, &json!(rows))
        }
        Command::Ellipse { method, trace } => {
            let cfg = load_config(cli.config.as_ref(), &cli.overrides)?;
            let m: RabiMethod = method.parse()?;
            let (field, drive) = (cfg.field()?, cfg.drive()?);
            match trace {
                Some(0) => Err(invalid("trace needs at least one point")),
                Some(n) => {
                    let phis: Vec<f64> = (0..*n).map(|k| 360.0 * k as f64 / *n as f64).collect();
                    let rad: Vec<f64> = phis.iter().map(|v| v.to_radians()).collect();
                    let z = rabi::ellipse_trace(m, &field, &drive, &cfg.params, &rad)?;
                    let mut t = Table::new("trace", &["phi_deg", "re", "im"]);
                    for (p, z) in phis.iter().zip(z) {
                        t.push(vec![(*p).into(), z.re.into(), z.im.into()]);
                    }
                    write!(out, "{}", t.to_csv()?)?;
                    Ok(())
                }
                None => {
                    let e = rabi::ellipse_params(m, &field, &drive, &cfg.params)?;
                    print_json(
                        out,
                        &json!({
                            "method": m.name(),
                            "center_re": e.center.re,
                            "center_im": e.center.im,
                            "half_width": e.half_width,
                            "half_height": e.half_height,
                            "aspect_ratio": e.aspect_ratio(),
                        }),
                    )
                }
            }
        }
        Command::Sweep { path } => {
            let cfg = load_config(Some(path), &cli.overrides)?;
            let start = Instant::now();
            let table = thread_pool()?.install(|| sweep::run_sweep(&cfg))?;
            let elapsed = (!cfg.deterministic).then(|| start.elapsed().as_secs_f64());
            write_outputs(&cfg.output_dir, "sweep", &[table], &cfg, elapsed)?;
            writeln!(out, "{}", cfg.output_dir.join("sweep.csv").display())?;
            Ok(())
        }
        Command::Figure { id } => {
            let cfg = load_config(cli.config.as_ref(), &cli.overrides)?;
            let ids: Vec<&str> = if id == "all" {
                figures::FIGURE_IDS.to_vec()
            } else {
                vec![id.as_str()]
            };
            let pool = thread_pool()?;
            for id in ids {
                let start = Instant::now();
                let tables = pool.install(|| figures::generate(id, &cfg))?;
                let elapsed = (!cfg.deterministic).then(|| start.elapsed().as_secs_f64());
                write_outputs(&cfg.output_dir, id, &tables, &cfg, elapsed)?;
                for t in &tables {
                    writeln!(out, "{}", cfg.output_dir.join(t.file_name()).display())?;
                }
            }
            Ok(())
        }
    }
}
