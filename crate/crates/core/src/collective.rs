//! Blockaded super-atom dynamics: collective Rabi oscillation, the
//! two-excitation Raman pair evolution and the entangling pulse sequence.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{BeamGeometry, ProtocolModes, WaveVector};
use crate::quantum::{evolve_unitary, CMatrix, CVector, HermitianOperator, StateVector, C64, I};

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub n_eff: f64,
    /// μK
    pub temperature_uk: f64,
    /// μm
    pub cloud_sigma_um: [f64; 3],
    /// μs
    pub free_rydberg_lifetime_us: f64,
    /// μs
    pub ground_spinwave_lifetime_us: f64,
    pub atomic_mass_amu: f64,
}

impl EnsembleConfig {
    pub fn paper_default() -> Self {
        Self {
            n_eff: 150.0,
            temperature_uk: 150.0,
            cloud_sigma_um: [2.47, 2.47, 3.25],
            free_rydberg_lifetime_us: 1.6,
            ground_spinwave_lifetime_us: 30.0,
            atomic_mass_amu: 86.909,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_eff >= 1.0) || !self.n_eff.is_finite() {
            return Err(Error::invalid(format!("N_e must be >= 1, got {}", self.n_eff)));
        }
        let positive = [
            ("free_rydberg_lifetime", self.free_rydberg_lifetime_us),
            ("ground_spinwave_lifetime", self.ground_spinwave_lifetime_us),
            ("atomic_mass", self.atomic_mass_amu),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.temperature_uk >= 0.0) {
            return Err(Error::invalid("temperature must be >= 0"));
        }
        if self.cloud_sigma_um.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("cloud sigma must be >= 0"));
        }
        Ok(())
    }

    /// One-dimensional thermal velocity spread in μm/μs.
    pub fn velocity_sigma(&self) -> f64 {
        const KB: f64 = 1.380_649e-23;
        const AMU: f64 = 1.660_539_066_60e-27;
        (KB * self.temperature_uk * 1e-6 / (self.atomic_mass_amu * AMU)).sqrt()
    }
}

/// Population of the singly excited collective state, sin²(√N Ω t / 2).
pub fn collective_rabi_population(n_eff: f64, omega: f64, t: f64) -> Result<f64> {
    if !(n_eff >= 1.0) {
        return Err(Error::invalid(format!("N_e must be >= 1, got {n_eff}")));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("t must be >= 0, got {t}")));
    }
    Ok((n_eff.sqrt() * omega * t / 2.0).sin().powi(2))
}

/// Two-excitation state over (|R2,S1>, |R3,S4>, |S1,S4>).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairState {
    pub amplitudes: [C64; 3],
}

impl PairState {
    pub const R2S1: usize = 0;
    pub const R3S4: usize = 1;
    pub const S1S4: usize = 2;

    /// Closed-form amplitudes at time t for drive Ω (rad/s).
    pub fn analytic(omega: f64, t: f64) -> Self {
        let phase = std::f64::consts::SQRT_2 * omega * t / 2.0;
        let (s, c) = phase.sin_cos();
        Self {
            amplitudes: [
                C64::new((1.0 + c) / 2.0, 0.0),
                C64::new((c - 1.0) / 2.0, 0.0),
                -I * (s * FRAC_1_SQRT_2),
            ],
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn population(&self, index: usize) -> f64 {
        self.amplitudes[index].norm_sqr()
    }

    /// Amplitude on (|R2,S1> - |R3,S4>)/√2.
    pub fn psi_minus(&self) -> C64 {
        (self.amplitudes[0] - self.amplitudes[1]) * FRAC_1_SQRT_2
    }

    /// Amplitude on (|R2,S1> + |R3,S4>)/√2.
    pub fn psi_plus(&self) -> C64 {
        (self.amplitudes[0] + self.amplitudes[1]) * FRAC_1_SQRT_2
    }

    /// Probability of the Rydberg-containing subspace.
    pub fn rydberg_probability(&self) -> f64 {
        self.population(Self::R2S1) + self.population(Self::R3S4)
    }

    /// |<self|other>|².
    pub fn overlap(&self, other: &PairState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .norm_sqr()
    }
}

/// Pair evolution under the Raman drive. The validated `modes` carry the
/// labels k1..k4; constructing them already enforces the distinguishability
/// gate.
pub fn pair_evolution(omega: f64, t: f64, modes: &ProtocolModes) -> Result<PairState> {
    let _ = modes;
    if !(t >= 0.0) || !t.is_finite() || !omega.is_finite() {
        return Err(Error::invalid("pair evolution needs finite Ω and t >= 0"));
    }
    Ok(PairState::analytic(omega, t))
}

pub fn single_excitation_period(omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::invalid(format!("Ω must be > 0, got {omega}")));
    }
    Ok(2.0 * PI / omega)
}

pub fn pair_oscillation_period(omega: f64) -> Result<f64> {
    Ok(single_excitation_period(omega)? / std::f64::consts::SQRT_2)
}

/// Rabi frequency for which the single-excitation period equals `period`.
pub fn omega_for_single_period(period: f64) -> Result<f64> {
    if !(period > 0.0) {
        return Err(Error::invalid(format!("period must be > 0, got {period}")));
    }
    Ok(2.0 * PI / period)
}

/// Atom-photon state over (|k_up>|S1>, |k_down>|S4>).
#[derive(Clone, Debug, PartialEq)]
pub struct AtomPhotonState {
    pub amplitudes: [C64; 2],
    pub k_up: WaveVector,
    pub k_down: WaveVector,
}

impl AtomPhotonState {
    pub fn new(a: C64, b: C64, k_up: WaveVector, k_down: WaveVector) -> Result<Self> {
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidState("atom-photon state has zero norm".into()));
        }
        Ok(Self {
            amplitudes: [a / n, b / n],
            k_up,
            k_down,
        })
    }

    /// Wootters concurrence of a two-term Schmidt state.
    pub fn concurrence(&self) -> f64 {
        2.0 * (self.amplitudes[0] * self.amplitudes[1]).norm()
    }

    /// Entanglement entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .filter(|p| *p > 0.0)
            .map(|p| -p * p.log2())
            .sum()
    }

    /// Fidelity with (|k_up>|S1> - |k_down>|S4>)/√2.
    pub fn fidelity_psi_minus(&self) -> f64 {
        ((self.amplitudes[0] - self.amplitudes[1]) * FRAC_1_SQRT_2).norm_sqr()
    }
}

/// Drive settings for the pulse sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolDrive {
    /// Raman Rabi frequency, rad/s.
    pub raman_rabi: f64,
    /// Fractional pulse-area errors of the (A+B), (C+D), (A+B) π pulses.
    pub pulse_area_errors: [f64; 3],
}

impl ProtocolDrive {
    pub fn ideal(raman_rabi: f64) -> Self {
        Self {
            raman_rabi,
            pulse_area_errors: [0.0; 3],
        }
    }

    /// Probability that all three preparation pulses transfer.
    pub fn preparation_probability(&self) -> f64 {
        self.pulse_area_errors
            .iter()
            .map(|e| ((1.0 + e) * PI / 2.0).sin().powi(2))
            .product()
    }

    /// Raman duration of the 50% entangling point, π/(√2 Ω).
    pub fn entangling_duration(&self) -> Result<f64> {
        Ok(pair_oscillation_period(self.raman_rabi)? / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolOutcome {
    pub state: AtomPhotonState,
    /// Probability that a first photon is emitted, including preparation.
    pub success_probability: f64,
    pub preparation_probability: f64,
    pub pair: PairState,
    pub modes: ProtocolModes,
}

/// Runs the (A+B) -> (C+D) -> (A+B) preparation, the Raman pair evolution
/// for `raman_duration` seconds and the Rydberg read-out, conditioned on the
/// Rydberg-containing branch.
pub fn run_protocol(
    geo: &BeamGeometry,
    ens: &EnsembleConfig,
    drive: &ProtocolDrive,
    raman_duration: f64,
) -> Result<ProtocolOutcome> {
    ens.validate()?;
    if !(raman_duration >= 0.0) {
        return Err(Error::invalid(format!(
            "raman duration must be >= 0, got {raman_duration}"
        )));
    }
    let modes = ProtocolModes::new(geo)?;
    let pair = pair_evolution(drive.raman_rabi, raman_duration, &modes)?;
    let prep = drive.preparation_probability();
    let p_ryd = pair.rydberg_probability();
    if !(p_ryd > 0.0) {
        return Err(Error::InvalidState(
            "no amplitude left in the Rydberg branch".into(),
        ));
    }
    let state = AtomPhotonState::new(
        pair.amplitudes[PairState::R2S1],
        pair.amplitudes[PairState::R3S4],
        modes.k_up,
        modes.k_down,
    )?;
    Ok(ProtocolOutcome {
        state,
        success_probability: (prep * p_ryd).clamp(0.0, 1.0),
        preparation_probability: prep,
        pair,
        modes,
    })
}

/// Gaussian random positions (μm) with per-axis spread.
pub fn random_positions<R: Rng + ?Sized>(n: usize, sigma_um: [f64; 3], rng: &mut R) -> Vec<[f64; 3]> {
    let axes: Vec<Normal<f64>> = sigma_um
        .iter()
        .map(|s| Normal::new(0.0, s.max(0.0)).expect("finite sigma"))
        .collect();
    (0..n)
        .map(|_| [axes[0].sample(rng), axes[1].sample(rng), axes[2].sample(rng)])
        .collect()
}

/// Projection of an explicit N-atom evolution onto the collective kets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteForceProjection {
    pub state: PairState,
    /// Norm of the part of the N-atom state outside the collective span.
    pub residual: f64,
    /// Hilbert-space dimension used.
    pub dim: usize,
}

fn phase(k: WaveVector, x: &[f64; 3]) -> f64 {
    k.dot(WaveVector::from_array(*x))
}

/// Evolves N explicit atoms (2 <= N <= 6) from the phased |R2,S1> spin
/// wave with uniform Ω/2 s-r couplings, no double-Rydberg kets, and projects
/// the result back onto the three collective kets.
pub fn brute_force_pair(
    omega: f64,
    t: f64,
    k1: WaveVector,
    k2: WaveVector,
    positions: &[[f64; 3]],
) -> Result<BruteForceProjection> {
    let n = positions.len();
    if !(2..=6).contains(&n) {
        return Err(Error::invalid(format!("brute force supports 2..=6 atoms, got {n}")));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid("t must be >= 0"));
    }
    // Basis: |s_j r_k> for ordered j != k, then |s_j s_k> for j < k.
    let mut sr = vec![vec![usize::MAX; n]; n];
    let mut idx = 0;
    for j in 0..n {
        for k in 0..n {
            if j != k {
                sr[j][k] = idx;
                idx += 1;
            }
        }
    }
    let mut ss = vec![vec![usize::MAX; n]; n];
    for j in 0..n {
        for k in (j + 1)..n {
            ss[j][k] = idx;
            ss[k][j] = idx;
            idx += 1;
        }
    }
    let dim = idx;

    let half = C64::new(omega / 2.0, 0.0);
    let mut h = CMatrix::zeros(dim, dim);
    for j in 0..n {
        for k in 0..n {
            if j != k {
                // r on atom k lowers to s.
                h[(sr[j][k], ss[j][k])] = half;
                h[(ss[j][k], sr[j][k])] = half;
            }
        }
    }
    let h = HermitianOperator::new(h)?;

    let m = 1.0 / ((n * (n - 1)) as f64).sqrt();
    let mut r2s1 = CVector::zeros(dim);
    let mut r1s2 = CVector::zeros(dim);
    let mut s1s2 = CVector::zeros(dim);
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            let a = C64::from_polar(m, phase(k1, &positions[j]) + phase(k2, &positions[k]));
            let b = C64::from_polar(m, phase(k2, &positions[j]) + phase(k1, &positions[k]));
            r2s1[sr[j][k]] = a;
            r1s2[sr[j][k]] = b;
            s1s2[ss[j][k]] += a;
        }
    }
    let psi0 = StateVector::new(r2s1.clone())?;
    let psi = evolve_unitary(&h, &psi0, t)?;
    let psi = psi.amplitudes();

    let kets = [&r2s1, &r1s2, &s1s2];
    let gram = DMatrix::from_fn(3, 3, |a, b| kets[a].dotc(kets[b]));
    let rhs = DVector::from_fn(3, |a, _| kets[a].dotc(psi));
    let coeffs = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NonConvergence("collective kets are linearly dependent".into()))?;
    let mut recon = CVector::zeros(dim);
    for (c, ket) in coeffs.iter().zip(kets) {
        recon += ket * *c;
    }
    let residual = (psi - &recon).norm();
    let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    Ok(BruteForceProjection {
        state: PairState {
            amplitudes: [coeffs[0] / norm, coeffs[1] / norm, coeffs[2] / norm],
        },
        residual,
        dim,
    })
}

/// N explicit two-level atoms, each driven with Ω/2 on g-r, restricted to at
/// most one Rydberg excitation by projecting the 2^N Hamiltonian.
#[derive(Clone, Debug)]
pub struct BlockadedEnsemble {
    n: usize,
    spectrum: crate::quantum::Spectrum,
    excitation: Vec<u32>,
}

impl BlockadedEnsemble {
    pub fn new(n: usize, omega: f64) -> Result<Self> {
        if !(1..=10).contains(&n) {
            return Err(Error::invalid(format!("blockaded ensemble supports 1..=10 atoms, got {n}")));
        }
        let dim = 1usize << n;
        let excitation: Vec<u32> = (0..dim).map(|s: usize| s.count_ones()).collect();
        let mut h = CMatrix::zeros(dim, dim);
        for s in 0..dim {
            for a in 0..n {
                let t = s ^ (1 << a);
                if excitation[s] <= 1 && excitation[t] <= 1 {
                    h[(s, t)] += C64::new(omega / 2.0, 0.0);
                }
            }
        }
        let h = HermitianOperator::new(h)?;
        Ok(Self {
            n,
            spectrum: h.spectrum(),
            excitation,
        })
    }

    pub fn atoms(&self) -> usize {
        self.n
    }

    /// Total Rydberg population at t, starting from all atoms in g.
    pub fn rydberg_population(&self, t: f64) -> f64 {
        let psi0 = StateVector::basis(1 << self.n, 0).expect("ground state");
        let psi = self.spectrum.evolve(&psi0, t);
        (0..psi.dim())
            .map(|s| f64::from(self.excitation[s]) * psi.population(s))
            .sum()
    }

    /// Population in kets with two or more excitations.
    pub fn multi_excitation_population(&self, t: f64) -> f64 {
        let psi0 = StateVector::basis(1 << self.n, 0).expect("ground state");
        let psi = self.spectrum.evolve(&psi0, t);
        (0..psi.dim())
            .filter(|&s| self.excitation[s] >= 2)
            .map(|s| psi.population(s))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::angular_frequency_of;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const OMEGA: f64 = 2.0 * PI * 1.0e6;

    fn modes() -> ProtocolModes {
        ProtocolModes::new(&BeamGeometry::paper_default()).unwrap()
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn rabi_population_examples() {
        assert!((collective_rabi_population(1.0, OMEGA, PI / OMEGA).unwrap() - 1.0).abs() < 1e-15);
        let t = PI / (150f64.sqrt() * OMEGA);
        assert!((collective_rabi_population(150.0, OMEGA, t).unwrap() - 1.0).abs() < 1e-15);
        assert!(collective_rabi_population(0.5, OMEGA, 0.0).is_err());
        assert!(collective_rabi_population(2.0, OMEGA, -1.0).is_err());
    }

    #[test]
    fn rabi_matches_four_atom_blockade_oracle() {
        let ens = BlockadedEnsemble::new(4, OMEGA).unwrap();
        for i in 0..200 {
            let t = i as f64 * 5e-9;
            let a = collective_rabi_population(4.0, OMEGA, t).unwrap();
            assert!((a - ens.rydberg_population(t)).abs() < 1e-9);
            assert!(ens.multi_excitation_population(t) < 1e-24);
        }
    }

    #[test]
    fn pair_evolution_examples() {
        let m = modes();
        let s0 = pair_evolution(OMEGA, 0.0, &m).unwrap();
        assert_eq!(s0.amplitudes, [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, -0.0)]);
        let t = PI / (std::f64::consts::SQRT_2 * OMEGA);
        let s = pair_evolution(OMEGA, t, &m).unwrap();
        assert!(close(s.amplitudes[0], C64::new(0.5, 0.0), 1e-15));
        assert!(close(s.amplitudes[1], C64::new(-0.5, 0.0), 1e-15));
        assert!(close(s.amplitudes[2], C64::new(0.0, -FRAC_1_SQRT_2), 1e-15));
        assert!((s.psi_minus().norm_sqr() - 0.5).abs() < 1e-12);
        let s = pair_evolution(OMEGA, 2.0 * t, &m).unwrap();
        assert!(close(s.amplitudes[0], C64::new(0.0, 0.0), 1e-15));
        assert!(close(s.amplitudes[1], C64::new(-1.0, 0.0), 1e-15));
        assert!(pair_evolution(OMEGA, -1.0, &m).is_err());
    }

    #[test]
    fn pair_evolution_refuses_degenerate_modes() {
        let mut geo = BeamGeometry::paper_default();
        geo.distinguishability_threshold = 0.0;
        assert!(ProtocolModes::new(&geo).is_err());
    }

    #[test]
    fn dark_state_amplitude_is_constant_and_norm_preserved() {
        for i in 0..500 {
            let s = PairState::analytic(OMEGA, i as f64 * 3.7e-9);
            assert!((s.psi_minus() - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn periods() {
        assert!((single_excitation_period(OMEGA).unwrap() - 1e-6).abs() < 1e-18);
        assert!((pair_oscillation_period(OMEGA).unwrap() - 707.106_781e-9).abs() < 1e-15);
        let w = omega_for_single_period(492e-9).unwrap();
        assert!((pair_oscillation_period(w).unwrap() * 1e9 - 347.897).abs() < 1e-3);
        for e in -3..=3 {
            let w = OMEGA * 10f64.powi(e);
            let r = pair_oscillation_period(w).unwrap() / single_excitation_period(w).unwrap();
            assert!((r - FRAC_1_SQRT_2).abs() < 1e-15);
        }
        assert!(single_excitation_period(0.0).is_err());
    }

    #[test]
    fn sqrt_two_law_from_fitted_traces() {
        let t_max = 10.0 / 1e6;
        let single = angular_frequency_of(
            |t| PairState::analytic(OMEGA, 0.0).population(0) * (OMEGA * t / 2.0).sin().powi(2),
            0.5,
            t_max,
            500,
        )
        .unwrap();
        let pair = angular_frequency_of(
            |t| PairState::analytic(OMEGA, t).population(PairState::S1S4),
            0.25,
            t_max,
            500,
        )
        .unwrap();
        assert!((pair / single - std::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn protocol_examples() {
        let geo = BeamGeometry::paper_default();
        let ens = EnsembleConfig::paper_default();
        let drive = ProtocolDrive::ideal(OMEGA);
        let t = drive.entangling_duration().unwrap();
        let out = run_protocol(&geo, &ens, &drive, t).unwrap();
        assert!((out.success_probability - 0.5).abs() < 1e-12);
        assert!((out.state.concurrence() - 1.0).abs() < 1e-9);
        assert!((out.state.entropy_bits() - 1.0).abs() < 1e-9);
        assert!((out.state.fidelity_psi_minus() - 1.0).abs() < 1e-12);

        let out = run_protocol(&geo, &ens, &drive, 0.0).unwrap();
        assert!((out.success_probability - 1.0).abs() < 1e-15);
        assert!(out.state.concurrence() < 1e-15);
        assert!((out.state.amplitudes[0].norm() - 1.0).abs() < 1e-15);

        let out = run_protocol(&geo, &ens, &drive, 2.0 * t).unwrap();
        assert!((out.success_probability - 1.0).abs() < 1e-12);
        assert!((out.state.amplitudes[1].norm() - 1.0).abs() < 1e-12);
        assert!(run_protocol(&geo, &ens, &drive, -1.0).is_err());
    }

    #[test]
    fn pulse_errors_reduce_preparation() {
        let geo = BeamGeometry::paper_default();
        let ens = EnsembleConfig::paper_default();
        let drive = ProtocolDrive {
            raman_rabi: OMEGA,
            pulse_area_errors: [0.15, -0.15, 0.1],
        };
        let t = drive.entangling_duration().unwrap();
        let out = run_protocol(&geo, &ens, &drive, t).unwrap();
        let prep = (1.15 * PI / 2.0).sin().powi(2)
            * (0.85 * PI / 2.0).sin().powi(2)
            * (1.1 * PI / 2.0).sin().powi(2);
        assert!((out.preparation_probability - prep).abs() < 1e-15);
        assert!((out.success_probability - 0.5 * prep).abs() < 1e-12);
        assert!(out.preparation_probability > 0.8);
    }

    #[test]
    fn ensemble_validation() {
        let mut e = EnsembleConfig::paper_default();
        assert!(e.validate().is_ok());
        assert!((e.velocity_sigma() - 0.1198).abs() < 1e-3);
        e.n_eff = 0.5;
        assert!(e.validate().is_err());
        e = EnsembleConfig::paper_default();
        e.free_rydberg_lifetime_us = 0.0;
        assert!(e.validate().is_err());
    }

    #[test]
    fn brute_force_two_atoms_is_exact() {
        let m = modes();
        let k1 = m.k1.numeric();
        let k2 = m.k2.numeric();
        let pos = [[0.3, -1.2, 2.0], [-0.7, 0.4, -1.1]];
        for i in 0..20 {
            let t = i as f64 * 61e-9;
            let bf = brute_force_pair(OMEGA, t, k1, k2, &pos).unwrap();
            let an = PairState::analytic(OMEGA, t);
            assert!(bf.state.overlap(&an) > 1.0 - 1e-10);
            assert!(bf.residual < 1e-10);
        }
        let t0 = brute_force_pair(OMEGA, 0.0, k1, k2, &pos).unwrap();
        assert!(close(t0.state.amplitudes[0], C64::new(1.0, 0.0), 1e-12));
    }

    #[test]
    fn brute_force_random_clouds() {
        let m = modes();
        let (k1, k2) = (m.k1.numeric(), m.k2.numeric());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = PI / (std::f64::consts::SQRT_2 * OMEGA);
        for n in 2..=6 {
            for _ in 0..5 {
                let pos = random_positions(n, [2.47, 2.47, 3.25], &mut rng);
                let bf = brute_force_pair(OMEGA, t, k1, k2, &pos).unwrap();
                assert_eq!(bf.dim, n * (n - 1) + n * (n - 1) / 2);
                assert!(bf.state.overlap(&PairState::analytic(OMEGA, t)) > 1.0 - 1e-9);
            }
        }
        assert!(brute_force_pair(OMEGA, t, k1, k2, &[[0.0; 3]]).is_err());
        assert!(brute_force_pair(OMEGA, t, k1, k2, &[[0.0; 3]; 7]).is_err());
    }

    #[test]
    fn blockaded_frequency_scales_as_sqrt_n() {
        let single = BlockadedEnsemble::new(1, OMEGA).unwrap();
        let w1 = angular_frequency_of(|t| single.rydberg_population(t), 0.5, 6e-6, 600).unwrap();
        for n in [2usize, 3] {
            let e = BlockadedEnsemble::new(n, OMEGA).unwrap();
            let wn = angular_frequency_of(|t| e.rydberg_population(t), 0.5, 6e-6, 600).unwrap();
            assert!((wn / w1 - (n as f64).sqrt()).abs() < 1e-6);
        }
    }
}
