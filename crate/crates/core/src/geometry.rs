//! Beam wave vectors and the momentum bookkeeping of spin waves and photons.
//!
//! Wave vectors are in rad/um. A [`ModeLabel`] keeps the exact integer
//! combination of beam vectors next to its numeric value so that relations
//! like k3 = k1 + dk can be checked symbolically.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default transverse-overlap threshold below which two modes count as
/// distinguishable.
pub const DEFAULT_DISTINGUISHABILITY_THRESHOLD: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WaveVector {
    pub kx: f64,
    pub ky: f64,
    pub kz: f64,
}

impl WaveVector {
    pub const ZERO: WaveVector = WaveVector {
        kx: 0.0,
        ky: 0.0,
        kz: 0.0,
    };

    pub fn new(kx: f64, ky: f64, kz: f64) -> Self {
        Self { kx, ky, kz }
    }

    pub fn from_array(k: [f64; 3]) -> Self {
        Self::new(k[0], k[1], k[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.kx, self.ky, self.kz]
    }

    pub fn dot(self, other: WaveVector) -> f64 {
        self.kx * other.kx + self.ky * other.ky + self.kz * other.kz
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.kx.is_finite() && self.ky.is_finite() && self.kz.is_finite()
    }

    /// Largest absolute component difference.
    pub fn max_diff(self, other: WaveVector) -> f64 {
        let d = self - other;
        d.kx.abs().max(d.ky.abs()).max(d.kz.abs())
    }
}

impl Add for WaveVector {
    type Output = WaveVector;
    fn add(self, o: WaveVector) -> WaveVector {
        WaveVector::new(self.kx + o.kx, self.ky + o.ky, self.kz + o.kz)
    }
}

impl Sub for WaveVector {
    type Output = WaveVector;
    fn sub(self, o: WaveVector) -> WaveVector {
        WaveVector::new(self.kx - o.kx, self.ky - o.ky, self.kz - o.kz)
    }
}

impl Neg for WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector::new(-self.kx, -self.ky, -self.kz)
    }
}

impl Mul<f64> for WaveVector {
    type Output = WaveVector;
    fn mul(self, s: f64) -> WaveVector {
        WaveVector::new(self.kx * s, self.ky * s, self.kz * s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Beam {
    A,
    B,
    C,
    D,
    E,
    Read,
}

impl Beam {
    pub const ALL: [Beam; 6] = [Beam::A, Beam::B, Beam::C, Beam::D, Beam::E, Beam::Read];
}

impl fmt::Display for Beam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Beam::A => "A",
            Beam::B => "B",
            Beam::C => "C",
            Beam::D => "D",
            Beam::E => "E",
            Beam::Read => "Read",
        };
        f.write_str(s)
    }
}

impl FromStr for Beam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Beam::A),
            "B" | "b" => Ok(Beam::B),
            "C" | "c" => Ok(Beam::C),
            "D" | "d" => Ok(Beam::D),
            "E" | "e" => Ok(Beam::E),
            "Read" | "read" | "Re" => Ok(Beam::Read),
            other => Err(Error::UnknownBeam(other.to_string())),
        }
    }
}

/// One laser beam at the atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub wavelength_nm: f64,
    direction: [f64; 3],
    pub waist_um: f64,
    /// Peak single-photon Rabi frequency, rad/s.
    pub rabi: f64,
}

impl BeamSpec {
    pub fn new(wavelength_nm: f64, direction: [f64; 3], waist_um: f64, rabi: f64) -> Result<Self> {
        if !(wavelength_nm > 0.0) || !wavelength_nm.is_finite() {
            return Err(Error::invalid(format!("wavelength must be positive, got {wavelength_nm}")));
        }
        if !(waist_um > 0.0) || !waist_um.is_finite() {
            return Err(Error::invalid(format!("waist must be positive, got {waist_um}")));
        }
        if !rabi.is_finite() {
            return Err(Error::invalid("Rabi frequency must be finite"));
        }
        let n = WaveVector::from_array(direction).norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid("beam direction must be a nonzero finite vector"));
        }
        Ok(Self {
            wavelength_nm,
            direction: [direction[0] / n, direction[1] / n, direction[2] / n],
            waist_um,
            rabi,
        })
    }

    pub fn direction(&self) -> [f64; 3] {
        self.direction
    }

    /// 2 pi / lambda, rad/um.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / (self.wavelength_nm * 1e-3)
    }

    pub fn wavevector(&self) -> WaveVector {
        WaveVector::from_array(self.direction) * self.wavenumber()
    }

    /// Relative intensity exp(-2 r^2 / w^2) at transverse distance `r_um`.
    pub fn relative_intensity(&self, r_um: f64) -> f64 {
        (-2.0 * r_um * r_um / (self.waist_um * self.waist_um)).exp()
    }
}

/// Beams plus the two intermediate-state detunings and the nominal angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    beams: BTreeMap<Beam, BeamSpec>,
    /// Detuning of the (A+B) excitation from |e1>, rad/s.
    pub delta_excitation: f64,
    /// Detuning of the (C+D), (C+E) Raman beams from |e1>, rad/s.
    pub delta_raman: f64,
    pub distinguishability_threshold: f64,
}

/// Angles of the default beam layout, degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamLayout {
    /// Between the A/D axis and the B/Read axis.
    pub theta1_deg: f64,
    /// Between D and E.
    pub theta2_deg: f64,
}

impl Default for BeamLayout {
    fn default() -> Self {
        Self {
            theta1_deg: 5.0,
            theta2_deg: 7.0,
        }
    }
}

impl BeamLayout {
    /// Unit vectors for each beam: B and Read along +z, A and D tilted by
    /// theta1 in the x-z plane, E tilted away from D by theta2 toward +y,
    /// C counter-propagating along -z.
    pub fn direction(&self, beam: Beam) -> [f64; 3] {
        let t1 = self.theta1_deg.to_radians();
        let t2 = self.theta2_deg.to_radians();
        let d = [t1.sin(), 0.0, t1.cos()];
        match beam {
            Beam::B | Beam::Read => [0.0, 0.0, 1.0],
            Beam::A | Beam::D => d,
            Beam::C => [0.0, 0.0, -1.0],
            Beam::E => [d[0], t2.tan(), d[2]],
        }
    }
}

fn mhz(f: f64) -> f64 {
    2.0 * PI * f * 1e6
}

impl BeamGeometry {
    pub fn new(
        beams: BTreeMap<Beam, BeamSpec>,
        delta_excitation: f64,
        delta_raman: f64,
        distinguishability_threshold: f64,
    ) -> Result<Self> {
        if !(distinguishability_threshold > 0.0 && distinguishability_threshold < 1.0) {
            return Err(Error::invalid("distinguishability threshold must lie in (0, 1)"));
        }
        Ok(Self {
            beams,
            delta_excitation,
            delta_raman,
            distinguishability_threshold,
        })
    }

    /// 795 nm for the ground-state legs (A, C), 474 nm for the Rydberg legs
    /// (B, D, E, Read); Rabi frequencies, detunings and waists as used in the
    /// experiment.
    pub fn paper_default() -> Self {
        let layout = BeamLayout::default();
        let spec = |beam, lambda, waist, rabi_mhz| {
            BeamSpec::new(lambda, layout.direction(beam), waist, mhz(rabi_mhz)).unwrap()
        };
        let mut beams = BTreeMap::new();
        beams.insert(Beam::A, spec(Beam::A, 795.0, 7.0, 3.0));
        beams.insert(Beam::B, spec(Beam::B, 474.0, 7.0, 6.0));
        beams.insert(Beam::C, spec(Beam::C, 795.0, 13.0, 33.0));
        beams.insert(Beam::D, spec(Beam::D, 474.0, 520.0, 23.0));
        beams.insert(Beam::E, spec(Beam::E, 474.0, 520.0, 23.0));
        beams.insert(Beam::Read, spec(Beam::Read, 474.0, 7.0, 6.0));
        Self::new(
            beams,
            mhz(40.0),
            mhz(610.0),
            DEFAULT_DISTINGUISHABILITY_THRESHOLD,
        )
        .unwrap()
    }

    pub fn beam(&self, beam: Beam) -> Result<&BeamSpec> {
        self.beams
            .get(&beam)
            .ok_or_else(|| Error::UnknownBeam(beam.to_string()))
    }

    pub fn set_beam(&mut self, beam: Beam, spec: BeamSpec) {
        self.beams.insert(beam, spec);
    }

    pub fn beams(&self) -> impl Iterator<Item = (Beam, &BeamSpec)> {
        self.beams.iter().map(|(b, s)| (*b, s))
    }

    /// Angle between two beams, degrees.
    pub fn angle_deg(&self, a: Beam, b: Beam) -> Result<f64> {
        let da = WaveVector::from_array(self.beam(a)?.direction());
        let db = WaveVector::from_array(self.beam(b)?.direction());
        Ok(da.dot(db).clamp(-1.0, 1.0).acos().to_degrees())
    }
}

pub fn beam_wavevector(beam: Beam, geo: &BeamGeometry) -> Result<WaveVector> {
    Ok(geo.beam(beam)?.wavevector())
}

/// Integer combination of beam wave vectors with its numeric value.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeLabel {
    coeffs: BTreeMap<Beam, i32>,
    numeric: WaveVector,
}

impl ModeLabel {
    pub fn zero() -> Self {
        Self {
            coeffs: BTreeMap::new(),
            numeric: WaveVector::ZERO,
        }
    }

    pub fn coeffs(&self) -> &BTreeMap<Beam, i32> {
        &self.coeffs
    }

    pub fn coeff(&self, beam: Beam) -> i32 {
        self.coeffs.get(&beam).copied().unwrap_or(0)
    }

    pub fn numeric(&self) -> WaveVector {
        self.numeric
    }

    /// Re-evaluates the numeric part from the coefficients.
    pub fn evaluate(&self, geo: &BeamGeometry) -> Result<WaveVector> {
        let mut k = WaveVector::ZERO;
        for (&beam, &c) in &self.coeffs {
            k = k + beam_wavevector(beam, geo)? * c as f64;
        }
        Ok(k)
    }

    fn combine(&self, other: &ModeLabel, sign: i32) -> ModeLabel {
        let mut coeffs = self.coeffs.clone();
        for (&beam, &c) in &other.coeffs {
            *coeffs.entry(beam).or_insert(0) += sign * c;
        }
        coeffs.retain(|_, c| *c != 0);
        ModeLabel {
            coeffs,
            numeric: self.numeric + other.numeric * sign as f64,
        }
    }

    pub fn plus(&self, other: &ModeLabel) -> ModeLabel {
        self.combine(other, 1)
    }

    pub fn minus(&self, other: &ModeLabel) -> ModeLabel {
        self.combine(other, -1)
    }

    pub fn negated(&self) -> ModeLabel {
        ModeLabel::zero().minus(self)
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (beam, &c) in &self.coeffs {
            let sign = if c < 0 { "-" } else if first { "" } else { "+" };
            let mag = c.abs();
            if mag == 1 {
                write!(f, "{sign}k_{beam}")?;
            } else {
                write!(f, "{sign}{mag}k_{beam}")?;
            }
            first = false;
        }
        Ok(())
    }
}

/// Builds sum(sign * k_beam). Signs are arbitrary integers.
pub fn compose_mode(terms: &[(Beam, i32)], geo: &BeamGeometry) -> Result<ModeLabel> {
    if terms.is_empty() {
        return Err(Error::invalid("mode needs at least one term"));
    }
    let mut mode = ModeLabel::zero();
    for &(beam, sign) in terms {
        let k = beam_wavevector(beam, geo)?;
        let single = ModeLabel {
            coeffs: BTreeMap::from([(beam, 1)]),
            numeric: k,
        };
        mode = mode.combine(&single, sign);
    }
    Ok(mode)
}

/// Photon momentum after phase-matched retrieval of `spinwave` by `read_beam`.
pub fn retrieval_direction(
    spinwave: &ModeLabel,
    read_beam: Beam,
    geo: &BeamGeometry,
) -> Result<WaveVector> {
    Ok(spinwave.numeric() - beam_wavevector(read_beam, geo)?)
}

/// Gaussian transverse overlap exp(-|dk_perp|^2 w^2 / 4).
///
/// The transverse direction is taken relative to the mean of the two mode
/// vectors; if that mean vanishes the full difference counts as transverse.
pub fn mode_overlap(m1: &ModeLabel, m2: &ModeLabel, waist_um: f64) -> Result<f64> {
    if !(waist_um > 0.0) {
        return Err(Error::invalid(format!("waist must be positive, got {waist_um}")));
    }
    let dk = m1.numeric() - m2.numeric();
    let mean = (m1.numeric() + m2.numeric()) * 0.5;
    let mean_norm = mean.norm();
    let dk_perp = if mean_norm > 1e-12 {
        let axis = mean * (1.0 / mean_norm);
        dk - axis * dk.dot(axis)
    } else {
        dk
    };
    let q2 = dk_perp.dot(dk_perp);
    Ok((-q2 * waist_um * waist_um / 4.0).exp())
}

/// All spin-wave and photon modes of the protocol, built from a geometry
/// that passed the distinguishability gate.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolModes {
    /// Ground-state spin wave after preparation.
    pub k1: ModeLabel,
    /// Rydberg spin wave after preparation.
    pub k2: ModeLabel,
    pub k3: ModeLabel,
    pub k4: ModeLabel,
    /// Raman momentum kick k_C + k_E.
    pub kick: ModeLabel,
    /// Photon from retrieving k2.
    pub k_up: WaveVector,
    /// Photon from retrieving k3.
    pub k_down: WaveVector,
    pub overlap_23: f64,
    pub overlap_14: f64,
}

impl ProtocolModes {
    /// Composes k1..k4 and the photon modes; refuses when k2/k3 or k1/k4
    /// overlap above the geometry's threshold. The overlap uses the
    /// excitation-beam waist (beam A) as the spin-wave transverse size.
    pub fn new(geo: &BeamGeometry) -> Result<Self> {
        use Beam::*;
        let k1 = compose_mode(&[(A, 1), (B, 1), (C, -1), (D, -1)], geo)?;
        let k2 = compose_mode(&[(A, 1), (B, 1)], geo)?;
        let kick = compose_mode(&[(C, 1), (E, 1)], geo)?;
        let k3 = k1.plus(&kick);
        let k4 = k2.minus(&kick);
        let waist = geo.beam(A)?.waist_um;
        let overlap_23 = mode_overlap(&k2, &k3, waist)?;
        let overlap_14 = mode_overlap(&k1, &k4, waist)?;
        let threshold = geo.distinguishability_threshold;
        if overlap_23 >= threshold || overlap_14 >= threshold {
            return Err(Error::ValidityGate(format!(
                "modes not distinguishable: overlap(k2,k3) = {overlap_23:.3e}, \
                 overlap(k1,k4) = {overlap_14:.3e}, threshold {threshold}"
            )));
        }
        let k_up = retrieval_direction(&k2, Read, geo)?;
        let k_down = retrieval_direction(&k3, Read, geo)?;
        Ok(Self {
            k1,
            k2,
            k3,
            k4,
            kick,
            k_up,
            k_down,
            overlap_23,
            overlap_14,
        })
    }
}
