//! Run configuration: a TOML file whose physical quantities carry units.
//!
//! Unknown keys are rejected and every error names the offending key path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collective::{omega_for_single_period, EnsembleConfig, ProtocolDrive};
use crate::geometry::{Beam, BeamGeometry, BeamLayout, BeamSpec, WaveVector};
use crate::measurement::{DetectorModel, EndToEndModel};
use crate::open_system::{cancelling_weights, RamanLevelScheme};
use crate::repeater::{LinkConfig, SourceModel};
use crate::units::{Angle, Frequency, Length, Mass, Quantity, Temperature, Time, WaveNumber};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// The packaged default configuration.
pub const PAPER_DEFAULT_TOML: &str = include_str!("../configs/paper-default.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub simulation: SimulationSection,
    pub output: OutputSection,
    pub geometry: GeometrySection,
    pub ensemble: EnsembleSection,
    pub dynamics: DynamicsSection,
    pub raman: RamanSection,
    pub detection: DetectionSection,
    pub g2: G2Section,
    pub repeater: RepeaterSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamEntry {
    pub wavelength: Quantity<Length>,
    pub waist: Quantity<Length>,
    pub rabi: Quantity<Frequency>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Beams {
    #[serde(rename = "A")]
    pub a: BeamEntry,
    #[serde(rename = "B")]
    pub b: BeamEntry,
    #[serde(rename = "C")]
    pub c: BeamEntry,
    #[serde(rename = "D")]
    pub d: BeamEntry,
    #[serde(rename = "E")]
    pub e: BeamEntry,
    #[serde(rename = "Read")]
    pub read: BeamEntry,
}

impl Beams {
    fn entries(&self) -> [(Beam, &BeamEntry); 6] {
        [
            (Beam::A, &self.a),
            (Beam::B, &self.b),
            (Beam::C, &self.c),
            (Beam::D, &self.d),
            (Beam::E, &self.e),
            (Beam::Read, &self.read),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub delta_excitation: Quantity<Frequency>,
    pub delta_raman: Quantity<Frequency>,
    pub theta1: Quantity<Angle>,
    pub theta2: Quantity<Angle>,
    pub distinguishability_threshold: f64,
    pub beams: Beams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_eff: f64,
    pub temperature: Quantity<Temperature>,
    /// Gaussian rms radius across the beams.
    pub transverse_sigma: Quantity<Length>,
    /// Full thickness along the beams, taken as four rms widths.
    pub thickness: Quantity<Length>,
    pub free_rydberg_lifetime: Quantity<Time>,
    pub ground_spinwave_lifetime: Quantity<Time>,
    pub atomic_mass: Quantity<Mass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    /// Single-excitation Raman period; sets the Raman Rabi frequency.
    pub single_period: Quantity<Time>,
    pub pulse_area_errors: [f64; 3],
    pub t_max: Quantity<Time>,
    pub dt: Quantity<Time>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamanSection {
    pub intermediate_splitting: Quantity<Frequency>,
    pub gamma_e: Quantity<Frequency>,
    pub decay_to_ground: f64,
    pub k_ground: Quantity<WaveNumber>,
    pub k_rydberg: Quantity<WaveNumber>,
    pub t_max: Quantity<Time>,
    pub dt: Quantity<Time>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub detector_efficiency: f64,
    pub preparation: f64,
    pub retrieval: f64,
    pub collection: f64,
    pub target_g2: f64,
    pub channel_efficiency: [f64; 2],
    pub branch_entangled: f64,
    pub read_delay: Quantity<Time>,
    pub coincidences: u64,
    pub phi_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2Section {
    pub trials: u64,
    pub coherent_mean: f64,
    pub thermal_mean: f64,
    pub dlcz_p: f64,
    /// Per-gate background click probability; calibrated to `target_g2`
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepeaterSection {
    pub retrieval: f64,
    pub eta: f64,
    pub detector_efficiency: f64,
    pub background: f64,
    pub dlcz_p: f64,
    pub trials: u64,
    pub eta_grid: Vec<f64>,
    pub p_grid: Vec<f64>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let de = toml::de::Deserializer::parse(s)
            .map_err(|e| Error::config("<document>", e.message().trim()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.inner().message().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        Self::from_toml_str(&raw)
    }

    pub fn paper_default() -> Self {
        Self::from_toml_str(PAPER_DEFAULT_TOML).expect("packaged config is valid")
    }

    /// Semantic checks beyond the schema, each naming its key.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let prob = |path: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(path, format!("{v} is not a probability")))
            }
        };
        let positive = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(path, format!("{v} must be positive")))
            }
        };
        let g = &self.geometry;
        if !(g.distinguishability_threshold > 0.0 && g.distinguishability_threshold < 1.0) {
            return Err(Error::config("geometry.distinguishability_threshold", "must lie in (0, 1)"));
        }
        for (beam, e) in g.beams.entries() {
            positive(&format!("geometry.beams.{beam}.wavelength"), e.wavelength.value())?;
            positive(&format!("geometry.beams.{beam}.waist"), e.waist.value())?;
        }
        positive("geometry.delta_excitation", g.delta_excitation.value().abs())?;
        let e = &self.ensemble;
        positive("ensemble.n_eff", e.n_eff)?;
        positive("ensemble.temperature", e.temperature.value())?;
        positive("ensemble.transverse_sigma", e.transverse_sigma.value())?;
        positive("ensemble.thickness", e.thickness.value())?;
        positive("ensemble.atomic_mass", e.atomic_mass.value())?;
        let d = &self.dynamics;
        positive("dynamics.single_period", d.single_period.value())?;
        positive("dynamics.t_max", d.t_max.value())?;
        positive("dynamics.dt", d.dt.value())?;
        let r = &self.raman;
        positive("raman.t_max", r.t_max.value())?;
        positive("raman.dt", r.dt.value())?;
        prob("raman.decay_to_ground", r.decay_to_ground)?;
        if r.samples < 100 {
            return Err(Error::config("raman.samples", format!("{} is below the minimum of 100", r.samples)));
        }
        let det = &self.detection;
        prob("detection.detector_efficiency", det.detector_efficiency)?;
        prob("detection.preparation", det.preparation)?;
        prob("detection.retrieval", det.retrieval)?;
        prob("detection.collection", det.collection)?;
        prob("detection.branch_entangled", det.branch_entangled)?;
        for (i, c) in det.channel_efficiency.iter().enumerate() {
            prob(&format!("detection.channel_efficiency[{i}]"), *c)?;
        }
        if !(det.target_g2 > 0.0 && det.target_g2 < 1.0) {
            return Err(Error::config("detection.target_g2", "must lie in (0, 1)"));
        }
        if det.phi_points < 2 {
            return Err(Error::config("detection.phi_points", "need at least 2 points"));
        }
        if det.coincidences == 0 {
            return Err(Error::config("detection.coincidences", "must be positive"));
        }
        if self.g2.trials == 0 {
            return Err(Error::config("g2.trials", "must be positive"));
        }
        if let Some(b) = self.g2.background {
            prob("g2.background", b)?;
        }
        positive("g2.coherent_mean", self.g2.coherent_mean)?;
        positive("g2.thermal_mean", self.g2.thermal_mean)?;
        let rp = &self.repeater;
        prob("repeater.retrieval", rp.retrieval)?;
        prob("repeater.eta", rp.eta)?;
        prob("repeater.detector_efficiency", rp.detector_efficiency)?;
        prob("repeater.background", rp.background)?;
        for (i, eta) in rp.eta_grid.iter().enumerate() {
            prob(&format!("repeater.eta_grid[{i}]"), *eta)?;
        }
        for (i, p) in std::iter::once(&rp.dlcz_p).chain(&rp.p_grid).enumerate() {
            if !(*p > 0.0 && *p <= 0.2) {
                let path = if i == 0 { "repeater.dlcz_p".to_string() } else { format!("repeater.p_grid[{}]", i - 1) };
                return Err(Error::config(path, format!("{p} must lie in (0, 0.2]")));
            }
        }
        Ok(())
    }

    /// Seed for Monte Carlo stages.
    pub fn seed(&self) -> Result<u64> {
        self.simulation.seed.ok_or(Error::MissingSeed)
    }

    pub fn beam_geometry(&self) -> Result<BeamGeometry> {
        let g = &self.geometry;
        let layout = BeamLayout {
            theta1_deg: g.theta1.value(),
            theta2_deg: g.theta2.value(),
        };
        let mut beams = BTreeMap::new();
        for (beam, e) in g.beams.entries() {
            // Lengths are stored in μm.
            let spec = BeamSpec::new(
                e.wavelength.in_unit("nm"),
                layout.direction(beam),
                e.waist.value(),
                e.rabi.value(),
            )?;
            beams.insert(beam, spec);
        }
        BeamGeometry::new(
            beams,
            g.delta_excitation.value(),
            g.delta_raman.value(),
            g.distinguishability_threshold,
        )
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        let e = &self.ensemble;
        let t = e.transverse_sigma.value();
        EnsembleConfig {
            n_eff: e.n_eff,
            temperature_uk: e.temperature.value(),
            cloud_sigma_um: [t, t, e.thickness.value() / 4.0],
            free_rydberg_lifetime_us: e.free_rydberg_lifetime.in_unit("us"),
            ground_spinwave_lifetime_us: e.ground_spinwave_lifetime.in_unit("us"),
            atomic_mass_amu: e.atomic_mass.value(),
        }
    }

    /// Raman Rabi frequency (rad/s) implied by the single-excitation period.
    pub fn raman_rabi(&self) -> Result<f64> {
        omega_for_single_period(self.dynamics.single_period.value())
    }

    /// Two-photon excitation Rabi frequency Ω_A Ω_B / (2Δ), rad/s.
    pub fn excitation_rabi(&self) -> f64 {
        let g = &self.geometry;
        g.beams.a.rabi.value() * g.beams.b.rabi.value() / (2.0 * g.delta_excitation.value())
    }

    pub fn protocol_drive(&self) -> Result<ProtocolDrive> {
        Ok(ProtocolDrive {
            raman_rabi: self.raman_rabi()?,
            pulse_area_errors: self.dynamics.pulse_area_errors,
        })
    }

    /// Raman scheme from the C and D beams and the Raman detuning.
    pub fn raman_scheme(&self) -> RamanLevelScheme {
        let g = &self.geometry;
        let r = &self.raman;
        let delta_1 = g.delta_raman.value();
        let delta_2 = delta_1 - r.intermediate_splitting.value();
        let (c1, c2) = cancelling_weights(delta_1, delta_2);
        RamanLevelScheme {
            delta_1,
            delta_2,
            omega_ground: g.beams.c.rabi.value(),
            omega_rydberg: g.beams.d.rabi.value(),
            gamma_e: r.gamma_e.value(),
            decay_to_ground: r.decay_to_ground,
            c1,
            c2,
            waist_ground_um: g.beams.c.waist.value(),
            waist_rydberg_um: g.beams.d.waist.value(),
            k_ground: WaveVector::new(0.0, 0.0, r.k_ground.value()),
            k_rydberg: WaveVector::new(0.0, 0.0, r.k_rydberg.value()),
        }
    }

    /// Probability that one stored excitation reaches the detector.
    pub fn single_photon_presence(&self) -> f64 {
        let d = &self.detection;
        d.preparation * d.retrieval * d.collection
    }

    pub fn end_to_end(&self, background: f64) -> EndToEndModel {
        let d = &self.detection;
        EndToEndModel {
            branch_entangled: d.branch_entangled,
            channel_efficiency: d.channel_efficiency,
            background,
            delay_us: d.read_delay.in_unit("us"),
            tau_ground_us: self.ensemble.ground_spinwave_lifetime.in_unit("us"),
            phi: 0.0,
        }
    }

    pub fn detector(&self, background: f64) -> Result<DetectorModel> {
        DetectorModel::new(self.detection.detector_efficiency, background)
    }

    pub fn link(&self, eta: f64) -> LinkConfig {
        LinkConfig {
            eta,
            detector_efficiency: self.repeater.detector_efficiency,
            background: self.repeater.background,
        }
    }

    pub fn semi_source(&self) -> SourceModel {
        SourceModel::SemiDeterministic {
            retrieval: self.repeater.retrieval,
        }
    }

    pub fn dlcz_source(&self, p: f64) -> SourceModel {
        SourceModel::Dlcz { p }
    }
}
