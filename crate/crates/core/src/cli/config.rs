//! JSON run configuration. Angles are in degrees here and converted to
//! radians when the domain types are built.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{NoiseSpace, NoiseSpec};
use crate::error::{invalid, Result};
use crate::estimation::{OptimizeOptions, Reference, Scheme};
use crate::nvmodel::{NvParameters, ReferenceDcField, StaticField};
use crate::rabi::{MicrowaveDrive, Transition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub magnitude_mt: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            magnitude_mt: 8.0,
            theta_deg: 40.0,
            phi_deg: 90.0,
        }
    }
}

impl FieldConfig {
    pub fn build(&self) -> Result<StaticField> {
        StaticField::new(self.magnitude_mt, self.theta_deg.to_radians(), self.phi_deg.to_radians())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub amplitude_mt: f64,
    pub theta_mw_deg: f64,
    pub phi_mw_deg: f64,
    pub transition: Transition,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            amplitude_mt: 1.0,
            theta_mw_deg: 20.0,
            phi_mw_deg: 0.0,
            transition: Transition::GroundExcited,
        }
    }
}

impl DriveConfig {
    pub fn build(&self) -> Result<MicrowaveDrive> {
        let mut d = MicrowaveDrive::new(self.amplitude_mt, self.theta_mw_deg.to_radians(), self.phi_mw_deg.to_radians())?;
        d.transition = self.transition;
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub amplitude_mt: f64,
    pub phi_r_deg: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            amplitude_mt: 1.0,
            phi_r_deg: 0.0,
        }
    }
}

impl ReferenceConfig {
    pub fn build(&self) -> Result<ReferenceDcField> {
        ReferenceDcField::new(self.amplitude_mt, self.phi_r_deg.to_radians())
    }
}

/// Grids for `sweep`. Absent axes keep the base value; present axes must be
/// nonempty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_deg: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub magnitude_mt: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_mw_mt: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_r_mt: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    /// Also run the interrogation-time search for `scheme` in every cell.
    pub uncertainty: bool,
}

impl SweepAxes {
    pub fn validate(&self) -> Result<()> {
        let lens = [
            ("phi_deg", self.phi_deg.as_ref().map(Vec::len)),
            ("theta_deg", self.theta_deg.as_ref().map(Vec::len)),
            ("magnitude_mt", self.magnitude_mt.as_ref().map(Vec::len)),
            ("b_mw_mt", self.b_mw_mt.as_ref().map(Vec::len)),
            ("b_r_mt", self.b_r_mt.as_ref().map(Vec::len)),
            ("sites", self.sites.as_ref().map(Vec::len)),
            ("n", self.n.as_ref().map(Vec::len)),
        ];
        for (name, len) in lens {
            if len == Some(0) {
                return Err(invalid(format!("sweep axis `{name}` is empty")));
            }
        }
        Ok(())
    }
}

/// Figure-specific knobs that are not part of the physical configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    /// Azimuth resolution of the curve figures.
    pub phi_step_deg: f64,
    /// Azimuth resolution of the derivative maps and uncertainty curves.
    pub coarse_phi_step_deg: f64,
    pub fig2_theta_deg: Vec<f64>,
    pub fig4_amplitude_mt: Vec<f64>,
    pub fig5_amplitudes_mt: Vec<f64>,
    pub fig5_magnitude_mt: Vec<f64>,
    pub fig5_theta_deg: Vec<f64>,
    pub curve_theta_deg: Vec<f64>,
    /// One microwave polar angle per curve of `curve_theta_deg`.
    pub fig6_theta_mw_deg: Vec<f64>,
    pub fig7_theta_mw_deg: Vec<f64>,
    pub fig7_magnitude_mt: Vec<f64>,
    pub fig8_theta_deg: Vec<f64>,
    /// Drive azimuth mismatch used for the GHZ comparison.
    pub fig8_phi_deg: f64,
    pub fig8_max_sites: usize,
    pub fig8_axial_max_sites: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            phi_step_deg: 1.0,
            coarse_phi_step_deg: 5.0,
            fig2_theta_deg: vec![10.0, 40.0, 70.0, 85.0, 87.0, 89.0],
            fig4_amplitude_mt: (1..=20).map(|k| k as f64 * 0.1).collect(),
            fig5_amplitudes_mt: vec![0.5, 1.0, 2.0],
            fig5_magnitude_mt: (1..=20).map(|k| k as f64 * 0.5).collect(),
            fig5_theta_deg: (0..=18).map(|k| k as f64 * 5.0).collect(),
            curve_theta_deg: vec![10.0, 40.0, 80.0],
            fig6_theta_mw_deg: vec![20.0, 20.0, 20.0],
            fig7_theta_mw_deg: vec![10.0, 20.0, 20.0],
            fig7_magnitude_mt: (1..=10).map(|k| k as f64).collect(),
            fig8_theta_deg: vec![0.0, 10.0, 40.0, 80.0],
            fig8_phi_deg: 90.0,
            fig8_max_sites: 6,
            fig8_axial_max_sites: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: NvParameters,
    pub field: FieldConfig,
    pub drive: DriveConfig,
    pub reference: ReferenceConfig,
    /// Dephasing of single-spin runs.
    pub noise: NoiseSpec,
    /// Per-site noise space of multi-spin runs.
    pub ghz_noise_space: NoiseSpace,
    pub scheme: Scheme,
    /// Total sensing time `T` (µs).
    pub total_time_us: f64,
    pub optimize: OptimizeOptions,
    pub sweep: SweepAxes,
    pub figures: FigureConfig,
    pub output_dir: PathBuf,
    /// When false the manifest also records wall-clock timing.
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: NvParameters::default(),
            field: FieldConfig::default(),
            drive: DriveConfig::default(),
            reference: ReferenceConfig::default(),
            noise: NoiseSpec {
                gamma: 1.0,
                space: NoiseSpace::SpinOne,
            },
            ghz_noise_space: NoiseSpace::Subspace,
            scheme: Scheme::RabiMw,
            total_time_us: 1e6,
            optimize: OptimizeOptions::default(),
            sweep: SweepAxes::default(),
            figures: FigureConfig::default(),
            output_dir: PathBuf::from("out"),
            deterministic: true,
        }
    }
}

impl RunConfig {
    /// Reads a config, or the `config` member of a manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let cfg: RunConfig = match value.get("config") {
            Some(inner) if value.get("config_sha256").is_some() => serde_json::from_value(inner.clone())?,
            _ => serde_json::from_str(text)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.field.build()?;
        self.drive.build()?;
        self.reference.build()?;
        self.noise.validate()?;
        self.optimize.validate()?;
        self.sweep.validate()?;
        if !(self.total_time_us > 0.0 && self.total_time_us.is_finite()) {
            return Err(invalid("total_time_us must be positive"));
        }
        let f = &self.figures;
        if !(f.phi_step_deg > 0.0 && f.coarse_phi_step_deg > 0.0) {
            return Err(invalid("figure azimuth steps must be positive"));
        }
        for (name, v) in [
            ("fig6_theta_mw_deg", &f.fig6_theta_mw_deg),
            ("fig7_theta_mw_deg", &f.fig7_theta_mw_deg),
        ] {
            if v.len() != f.curve_theta_deg.len() {
                return Err(invalid(format!("{name} needs one entry per curve_theta_deg entry")));
            }
        }
        Ok(())
    }

    pub fn field(&self) -> Result<StaticField> {
        self.field.build()
    }

    pub fn drive(&self) -> Result<MicrowaveDrive> {
        self.drive.build()
    }

    pub fn reference_field(&self) -> Result<ReferenceDcField> {
        self.reference.build()
    }

    /// Reference matching `scheme`.
    pub fn reference_for(&self, scheme: Scheme) -> Result<Reference> {
        Ok(match scheme {
            Scheme::RamseyDc => Reference::Dc(self.reference_field()?),
            _ => Reference::Mw(self.drive()?),
        })
    }

    pub fn ghz_noise(&self) -> NoiseSpec {
        NoiseSpec {
            gamma: self.noise.gamma,
            space: self.ghz_noise_space,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let mut cfg = RunConfig::default();
        cfg.field.theta_deg = 0.1 + 0.2;
        cfg.sweep.phi_deg = Some(vec![1.0 / 3.0, 90.0]);
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"drive": {"amplitude_mt": 2.0}}"#).unwrap();
        assert_eq!(cfg.drive.amplitude_mt, 2.0);
        assert_eq!(cfg.drive.theta_mw_deg, 20.0);
        assert!((cfg.drive().unwrap().theta_mw - 20f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_json(r#"{"sweep": {"theta_deg": []}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"field": {"magnitude_mt": -1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"unknown": 1}"#).is_err());
        let err = RunConfig::from_json("{\n  \"field\": {\n    \"magnitude_mt\": ,\n  }\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
