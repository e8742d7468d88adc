//! Per-atom Monte Carlo of the Raman spin-wave oscillation with thermal
//! motion, Gaussian beam profiles and intermediate-state scattering.
//!
//! Each atom carries six levels: an uncoupled reference `ref`, the ground
//! spin-wave level `s`, two intermediate levels `e1`/`e2`, the Rydberg level
//! `r` and a sink `loss`. Atoms start in (|ref> + |r>)/√2 so that the
//! r-ref coherence tracks the collective spin-wave amplitude.
//!
//! Internal units are μs and rad/μs; public rates are rad/s.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collective::EnsembleConfig;
use crate::error::{Error, Result};
use crate::fit::{local_maxima, EnvelopeFit};
use crate::quantum::{
    vectorize, CMatrix, CVector, CollapseOperator, HermitianOperator, Liouvillian, C64,
};
use crate::geometry::WaveVector;

const REF: usize = 0;
const S: usize = 1;
const E1: usize = 2;
const E2: usize = 3;
const R: usize = 4;
const LOSS: usize = 5;
const LEVELS: usize = 6;

/// Samples per deterministic reduction chunk.
const CHUNK: usize = 32;

/// Peaks below this envelope value are ignored by the decay fit.
const FIT_FLOOR: f64 = 0.018_315_638_888_734_18; // e^-4

const PER_US: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomSample {
    /// μm
    pub position: [f64; 3],
    /// μm/μs
    pub velocity: [f64; 3],
}

impl AtomSample {
    pub fn draw<R: Rng + ?Sized>(ens: &EnsembleConfig, rng: &mut R) -> Self {
        let sv = ens.velocity_sigma();
        let mut pos = [0.0; 3];
        let mut vel = [0.0; 3];
        for a in 0..3 {
            pos[a] = gaussian(ens.cloud_sigma_um[a], rng);
        }
        for v in &mut vel {
            *v = gaussian(sv, rng);
        }
        Self {
            position: pos,
            velocity: vel,
        }
    }

    pub fn transverse_radius_sq(&self) -> f64 {
        self.position[0].powi(2) + self.position[1].powi(2)
    }
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("positive sigma").sample(rng)
    } else {
        0.0
    }
}

/// Two-path Raman coupling between the ground spin-wave level and the
/// Rydberg level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamanLevelScheme {
    /// Detuning of the first intermediate path, rad/s.
    pub delta_1: f64,
    /// Detuning of the second intermediate path, rad/s.
    pub delta_2: f64,
    /// Peak ground-leg Rabi frequency, rad/s.
    pub omega_ground: f64,
    /// Peak Rydberg-leg Rabi frequency, rad/s.
    pub omega_rydberg: f64,
    /// Intermediate-state decay rate, rad/s.
    pub gamma_e: f64,
    /// Fraction of intermediate decay that returns to `s`.
    pub decay_to_ground: f64,
    pub c1: f64,
    pub c2: f64,
    /// μm
    pub waist_ground_um: f64,
    /// μm
    pub waist_rydberg_um: f64,
    /// Wave vector of the ground spin wave, rad/μm.
    pub k_ground: WaveVector,
    /// Wave vector of the Rydberg spin wave, rad/μm.
    pub k_rydberg: WaveVector,
}

impl RamanLevelScheme {
    /// Defaults: δ1 = 2π×610 MHz, δ2 shifted by the 816.656 MHz intermediate
    /// splitting, weights chosen so the ground-level light shift vanishes.
    pub fn paper_default() -> Self {
        let two_pi = 2.0 * PI;
        let delta_1 = two_pi * 610e6;
        let delta_2 = two_pi * (610e6 - 816.656e6);
        let (c1, c2) = cancelling_weights(delta_1, delta_2);
        Self {
            delta_1,
            delta_2,
            omega_ground: two_pi * 33e6,
            omega_rydberg: two_pi * 23e6,
            gamma_e: two_pi * 5.75e6,
            decay_to_ground: 0.5,
            c1,
            c2,
            waist_ground_um: 13.0,
            waist_rydberg_um: 520.0,
            k_ground: WaveVector::new(0.0, 0.0, 0.3935),
            k_rydberg: WaveVector::new(0.0, 0.0, 7.38),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_1 == 0.0 || self.delta_2 == 0.0 {
            return Err(Error::invalid("intermediate detunings must be non-zero"));
        }
        if !(self.gamma_e > 0.0) {
            return Err(Error::invalid("gamma_e must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.decay_to_ground) {
            return Err(Error::invalid("decay_to_ground must lie in [0, 1]"));
        }
        if !(self.waist_ground_um > 0.0 && self.waist_rydberg_um > 0.0) {
            return Err(Error::invalid("beam waists must be > 0"));
        }
        let all = [
            self.delta_1,
            self.delta_2,
            self.omega_ground,
            self.omega_rydberg,
            self.c1,
            self.c2,
        ];
        if all.iter().any(|v| !v.is_finite()) || !self.k_ground.is_finite() || !self.k_rydberg.is_finite()
        {
            return Err(Error::invalid("Raman scheme contains non-finite values"));
        }
        Ok(())
    }

    fn inv_delta_sum(&self) -> f64 {
        1.0 / self.delta_1 + 1.0 / self.delta_2
    }

    /// Relative intensities (ground leg, Rydberg leg) at a transverse radius².
    pub fn intensity_scales(&self, r_sq: f64) -> (f64, f64) {
        (
            (-2.0 * r_sq / self.waist_ground_um.powi(2)).exp(),
            (-2.0 * r_sq / self.waist_rydberg_um.powi(2)).exp(),
        )
    }

    /// Peak-intensity two-photon Rabi frequency, rad/s.
    pub fn omega_eff(&self) -> f64 {
        raman_rabi_local(self, 1.0, 1.0).map(|(w, _)| w).unwrap_or(0.0)
    }
}

/// Weights (1, -√(-δ2/δ1)) that null Σ c_i²/δ_i. Falls back to (1, 0) when
/// both detunings share a sign.
pub fn cancelling_weights(delta_1: f64, delta_2: f64) -> (f64, f64) {
    let ratio = -delta_2 / delta_1;
    if ratio > 0.0 {
        (1.0, -ratio.sqrt())
    } else {
        (1.0, 0.0)
    }
}

/// Local two-photon Rabi frequency and residual differential light shift
/// (both rad/s) for relative intensities `scale_1` (ground leg) and
/// `scale_2` (Rydberg leg). The Rydberg-level shift at peak intensity is
/// taken as compensated by the drive detuning.
pub fn raman_rabi_local(scheme: &RamanLevelScheme, scale_1: f64, scale_2: f64) -> Result<(f64, f64)> {
    for s in [scale_1, scale_2] {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::invalid(format!("intensity scale must lie in [0, 1], got {s}")));
        }
    }
    let w1 = scheme.omega_ground * scale_1.sqrt();
    let w2 = scheme.omega_rydberg * scale_2.sqrt();
    let omega_eff = w1 * w2 / 2.0 * (scheme.c1 / scheme.delta_1 + scheme.c2 / scheme.delta_2);
    let shift_s = w1 * w1 / 4.0 * (scheme.c1.powi(2) / scheme.delta_1 + scheme.c2.powi(2) / scheme.delta_2);
    let shift_r = (w2 * w2 - scheme.omega_rydberg.powi(2)) / 4.0 * scheme.inv_delta_sum();
    Ok((omega_eff, shift_s - shift_r))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationFlags {
    pub motion: bool,
    pub inhomogeneity: bool,
    pub scattering: bool,
}

impl SimulationFlags {
    pub fn all() -> Self {
        Self {
            motion: true,
            inhomogeneity: true,
            scattering: true,
        }
    }

    pub fn motion_only() -> Self {
        Self {
            motion: true,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DephasingResult {
    pub t_us: Vec<f64>,
    pub population_r: Vec<f64>,
    pub spinwave_projection: Vec<f64>,
    /// 1/e² time of the fitted projection envelope.
    pub tau_osc_us: Option<f64>,
    /// 1/e time of the free Rydberg spin-wave envelope.
    pub tau_free_us: Option<f64>,
    /// RMS residual of the log-envelope fit.
    pub fit_rms: Option<f64>,
    /// ln C(t) ≈ slope·t + curvature·t² (t in μs) over the projection peaks.
    pub envelope_slope: Option<f64>,
    pub envelope_curvature: Option<f64>,
    /// Homogeneous two-photon Rabi frequency, rad/s.
    pub omega_eff: f64,
    pub n_samples: usize,
}

/// C(t) = exp(-(|Δk| σ_v t)² / 2) on a grid in μs, Δk in rad/μm.
pub fn free_spinwave_envelope(
    delta_k: WaveVector,
    temperature_uk: f64,
    mass_amu: f64,
    t_grid_us: &[f64],
) -> Result<Vec<f64>> {
    if !(temperature_uk > 0.0) {
        return Err(Error::invalid(format!("temperature must be > 0, got {temperature_uk}")));
    }
    let sv = thermal_sigma(temperature_uk, mass_amu)?;
    let rate = delta_k.norm() * sv;
    Ok(t_grid_us.iter().map(|t| (-(rate * t).powi(2) / 2.0).exp()).collect())
}

/// 1/e time of the free envelope, μs. None for a vanishing Δk.
pub fn free_envelope_time(delta_k: WaveVector, temperature_uk: f64, mass_amu: f64) -> Result<Option<f64>> {
    let sv = thermal_sigma(temperature_uk, mass_amu)?;
    let rate = delta_k.norm() * sv;
    Ok((rate > 0.0).then(|| std::f64::consts::SQRT_2 / rate))
}

/// Wave-vector magnitude (rad/μm) whose free envelope has 1/e time `tau_us`.
pub fn wavenumber_for_free_time(tau_us: f64, temperature_uk: f64, mass_amu: f64) -> Result<f64> {
    if !(tau_us > 0.0) {
        return Err(Error::invalid("free lifetime must be > 0"));
    }
    Ok(std::f64::consts::SQRT_2 / (tau_us * thermal_sigma(temperature_uk, mass_amu)?))
}

fn thermal_sigma(temperature_uk: f64, mass_amu: f64) -> Result<f64> {
    if !(mass_amu > 0.0) || !(temperature_uk >= 0.0) {
        return Err(Error::invalid("temperature must be >= 0 and mass > 0"));
    }
    let ens = EnsembleConfig {
        temperature_uk,
        atomic_mass_amu: mass_amu,
        ..EnsembleConfig::paper_default()
    };
    Ok(ens.velocity_sigma())
}

/// Uniform grid from 0 to `t_max_us` inclusive with step `dt_us`.
pub fn uniform_grid(t_max_us: f64, dt_us: f64) -> Result<Vec<f64>> {
    if !(dt_us > 0.0) || !(t_max_us >= 0.0) {
        return Err(Error::invalid("grid needs dt > 0 and t_max >= 0"));
    }
    let n = (t_max_us / dt_us + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * dt_us).collect())
}

struct AtomModel {
    h: HermitianOperator,
    ops: Vec<CollapseOperator>,
}

fn atom_model(
    scheme: &RamanLevelScheme,
    flags: SimulationFlags,
    atom: &AtomSample,
    with_scattering: bool,
) -> Result<AtomModel> {
    let (s1, s2) = if flags.inhomogeneity {
        scheme.intensity_scales(atom.transverse_radius_sq())
    } else {
        (1.0, 1.0)
    };
    let wg = scheme.omega_ground * s1.sqrt() * PER_US;
    let wr = scheme.omega_rydberg * s2.sqrt() * PER_US;
    let d1 = scheme.delta_1 * PER_US;
    let d2 = scheme.delta_2 * PER_US;
    let (dop_s, dop_r) = if flags.motion {
        let v = WaveVector::from_array(atom.velocity);
        (scheme.k_ground.dot(v), scheme.k_rydberg.dot(v))
    } else {
        (0.0, 0.0)
    };
    let r_comp = -(scheme.omega_rydberg * PER_US).powi(2) / 4.0 * (1.0 / d1 + 1.0 / d2);

    let mut h = CMatrix::zeros(LEVELS, LEVELS);
    let c = |x: f64| C64::new(x, 0.0);
    h[(S, S)] = c(dop_s);
    h[(E1, E1)] = c(-d1 + dop_s);
    h[(E2, E2)] = c(-d2 + dop_s);
    h[(R, R)] = c(r_comp + dop_r);
    for (e, ci) in [(E1, scheme.c1), (E2, scheme.c2)] {
        h[(e, S)] = c(wg * ci / 2.0);
        h[(S, e)] = c(wg * ci / 2.0);
        h[(e, R)] = c(wr / 2.0);
        h[(R, e)] = c(wr / 2.0);
    }
    let h = HermitianOperator::new(h)?;
    let mut ops = Vec::new();
    if with_scattering {
        let g = scheme.gamma_e * PER_US;
        for e in [E1, E2] {
            ops.push(CollapseOperator::transition(LEVELS, e, S, g * scheme.decay_to_ground)?);
            ops.push(CollapseOperator::transition(
                LEVELS,
                e,
                LOSS,
                g * (1.0 - scheme.decay_to_ground),
            )?);
        }
    }
    Ok(AtomModel { h, ops })
}

fn initial_amplitudes() -> CVector {
    let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut psi = CVector::zeros(LEVELS);
    psi[REF] = a;
    psi[R] = a;
    psi
}

/// Per-time (ρ_rr, ρ_r,ref) of a single atom.
fn atom_trace(model: &AtomModel, t_grid: &[f64], out: &mut [(f64, C64)]) {
    let psi0 = initial_amplitudes();
    if model.ops.is_empty() {
        let spec = model.h.spectrum();
        let v = spec.vectors();
        let coeffs = v.adjoint() * &psi0;
        let e = spec.energies();
        let mut scratch = CVector::zeros(LEVELS);
        for (slot, &t) in out.iter_mut().zip(t_grid) {
            for k in 0..LEVELS {
                scratch[k] = coeffs[k] * C64::from_polar(1.0, -e[k] * t);
            }
            let psi = v * &scratch;
            *slot = (psi[R].norm_sqr(), psi[R] * psi[REF].conj());
        }
        return;
    }
    let l = Liouvillian::new(&model.h, &model.ops).expect("dimensions agree");
    let rho0 = &psi0 * psi0.adjoint();
    let mut x = vectorize(&rho0);
    let mut t_prev = 0.0;
    let mut step: Option<(f64, CMatrix)> = None;
    let idx = |i: usize, j: usize| i + j * LEVELS;
    for (slot, &t) in out.iter_mut().zip(t_grid) {
        let dt = t - t_prev;
        if dt > 0.0 {
            let reuse = matches!(&step, Some((d, _)) if (d - dt).abs() <= 1e-12 * dt.max(1.0));
            if !reuse {
                step = Some((dt, l.propagator(dt)));
            }
            x = &step.as_ref().expect("propagator set").1 * &x;
        }
        t_prev = t;
        *slot = (x[idx(R, R)].re, x[idx(R, REF)]);
    }
}

/// Monte Carlo over `n_samples` atoms. Sample `i` draws from
/// ChaCha8(seed) on stream `i`, so results do not depend on scheduling.
pub fn simulate_single_excitation(
    ens: &EnsembleConfig,
    scheme: &RamanLevelScheme,
    flags: SimulationFlags,
    n_samples: usize,
    seed: Option<u64>,
    t_grid_us: &[f64],
) -> Result<DephasingResult> {
    let seed = seed.ok_or(Error::MissingSeed)?;
    ens.validate()?;
    scheme.validate()?;
    if n_samples < 100 {
        return Err(Error::invalid(format!("n_samples must be >= 100, got {n_samples}")));
    }
    if t_grid_us.is_empty() || t_grid_us[0] < 0.0 || t_grid_us.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("time grid must be non-empty, non-negative and sorted"));
    }
    let nt = t_grid_us.len();
    let chunks: Vec<(Vec<f64>, Vec<C64>)> = (0..n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| -> Result<(Vec<f64>, Vec<C64>)> {
            let mut pop = vec![0.0; nt];
            let mut coh = vec![C64::new(0.0, 0.0); nt];
            let mut buf = vec![(0.0, C64::new(0.0, 0.0)); nt];
            for i in (c * CHUNK)..((c + 1) * CHUNK).min(n_samples) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let atom = AtomSample::draw(ens, &mut rng);
                let model = atom_model(scheme, flags, &atom, flags.scattering)?;
                atom_trace(&model, t_grid_us, &mut buf);
                for (k, (p, z)) in buf.iter().enumerate() {
                    pop[k] += p;
                    coh[k] += z;
                }
            }
            Ok((pop, coh))
        })
        .collect::<Result<_>>()?;

    let mut pop = vec![0.0; nt];
    let mut coh = vec![C64::new(0.0, 0.0); nt];
    for (p, z) in &chunks {
        for k in 0..nt {
            pop[k] += p[k];
            coh[k] += z[k];
        }
    }
    let n = n_samples as f64;
    // Normalized so that both equal 1 at t = 0.
    let population_r: Vec<f64> = pop.iter().map(|p| 2.0 * p / n).collect();
    let spinwave_projection: Vec<f64> = coh.iter().map(|z| (2.0 * z / n).norm_sqr()).collect();

    let peaks = local_maxima(t_grid_us, &spinwave_projection);
    let fit = EnvelopeFit::fit(&peaks, FIT_FLOOR).ok();
    let tau_osc_us = fit.and_then(|f| f.time_to(-2.0));
    let tau_free_us = free_envelope_time(scheme.k_rydberg, ens.temperature_uk, ens.atomic_mass_amu)?;

    Ok(DephasingResult {
        t_us: t_grid_us.to_vec(),
        population_r,
        spinwave_projection,
        tau_osc_us,
        tau_free_us,
        fit_rms: fit.map(|f| f.rms_residual),
        envelope_slope: fit.map(|f| f.linear),
        envelope_curvature: fit.map(|f| f.quadratic),
        omega_eff: scheme.omega_eff(),
        n_samples,
    })
}

impl DephasingResult {
    /// Peak-to-trough contrast of population_r inside [t0, t1] μs.
    pub fn contrast(&self, t0: f64, t1: f64) -> f64 {
        let vals: Vec<f64> = self
            .t_us
            .iter()
            .zip(&self.population_r)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .map(|(_, p)| *p)
            .collect();
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if vals.is_empty() {
            0.0
        } else {
            max - min
        }
    }
}
