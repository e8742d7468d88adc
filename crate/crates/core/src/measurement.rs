//! Polarization analysis of the photon pair, coincidence statistics with a
//! click-detector noise model, and g²(0) of the read-out fields.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collective::AtomPhotonState;
use crate::error::{Error, Result};
use crate::quantum::{CVector, DensityMatrix, C64, I};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    #[serde(rename = "hv")]
    HV,
    #[serde(rename = "pm")]
    PlusMinus,
    #[serde(rename = "circular")]
    Circular,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::HV, Basis::PlusMinus, Basis::Circular];

    /// The two analyzer states (x, y) as (H, V) amplitudes.
    /// Circular: σ+ = (H + iV)/√2, σ- = (H - iV)/√2.
    pub fn states(self) -> [[C64; 2]; 2] {
        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        match self {
            Basis::HV => [
                [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
                [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            ],
            Basis::PlusMinus => [[r, r], [r, -r]],
            Basis::Circular => [[r, I * r], [r, -I * r]],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Basis::HV => "hv",
            Basis::PlusMinus => "pm",
            Basis::Circular => "circular",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub basis: Basis,
    /// Phase applied to V of the first photon, radians in [0, 2π).
    pub phi: f64,
}

impl AnalyzerConfig {
    pub fn new(basis: Basis, phi: f64) -> Result<Self> {
        if !(0.0..2.0 * PI).contains(&phi) {
            return Err(Error::invalid(format!("phase must lie in [0, 2π), got {phi}")));
        }
        Ok(Self { basis, phi })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Background click probability per gate.
    pub background: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64, background: f64) -> Result<Self> {
        let d = Self {
            efficiency,
            background,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            background: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid(format!("efficiency must lie in [0, 1], got {}", self.efficiency)));
        }
        if !(0.0..1.0).contains(&self.background) {
            return Err(Error::invalid(format!("background must lie in [0, 1), got {}", self.background)));
        }
        Ok(())
    }

    /// Probability that a channel reports outcome `x` when a photon arrives
    /// in outcome `o`. A background click lands on either detector; double
    /// clicks are assigned at random.
    fn report_given_photon(&self, same: bool) -> f64 {
        let (eta, b) = (self.efficiency, self.background);
        let d = if same { 1.0 } else { 0.0 };
        eta * (1.0 - b) * d + (1.0 - eta) * b / 2.0 + eta * b * (0.75 * d + 0.25 * (1.0 - d))
    }

    fn report_without_photon(&self) -> f64 {
        self.background / 2.0
    }
}

/// Two-photon polarization state, ordered |HH>, |HV>, |VH>, |VV> with the
/// first-read photon as the left factor.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPhotonState {
    rho: DensityMatrix,
}

impl TwoPhotonState {
    pub fn from_amplitudes(amps: [C64; 4]) -> Result<Self> {
        let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("two-photon state has norm² {n}")));
        }
        let v = CVector::from_column_slice(&amps);
        Ok(Self {
            rho: DensityMatrix::new(&v * v.adjoint())?,
        })
    }

    pub fn from_density(rho: DensityMatrix) -> Result<Self> {
        if rho.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: rho.dim(),
            });
        }
        Ok(Self { rho })
    }

    /// (|HV> - e^{iφ}|VH>)/√2.
    pub fn ideal(phi: f64) -> Self {
        let r = FRAC_1_SQRT_2;
        Self::from_amplitudes([
            C64::new(0.0, 0.0),
            C64::new(r, 0.0),
            -C64::from_polar(r, phi),
            C64::new(0.0, 0.0),
        ])
        .expect("normalized")
    }

    pub fn density(&self) -> &DensityMatrix {
        &self.rho
    }

    /// Multiplies every off-diagonal element by `factor` in [0, 1].
    pub fn dephased(&self, factor: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&factor) {
            return Err(Error::invalid(format!("dephasing factor must lie in [0, 1], got {factor}")));
        }
        let mut m = self.rho.entries().clone();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    m[(i, j)] *= factor;
                }
            }
        }
        Ok(Self {
            rho: DensityMatrix::new(m)?,
        })
    }

    /// Ground spin-wave decoherence exp(-delay/τ) over the read-out delay.
    pub fn after_storage(&self, delay_us: f64, tau_ground_us: f64) -> Result<Self> {
        if !(delay_us >= 0.0) || !(tau_ground_us > 0.0) {
            return Err(Error::invalid("storage needs delay >= 0 and τ > 0"));
        }
        self.dephased((-delay_us / tau_ground_us).exp())
    }

    /// Born probabilities over (xx, yy, xy, yx) in `basis`.
    pub fn outcome_probabilities(&self, basis: Basis) -> [f64; 4] {
        let st = basis.states();
        let p = |a: usize, b: usize| {
            let v = CVector::from_fn(4, |k, _| st[a][k / 2] * st[b][k % 2]);
            (v.adjoint() * self.rho.entries() * &v)[(0, 0)].re.max(0.0)
        };
        [p(0, 0), p(1, 1), p(0, 1), p(1, 0)]
    }

    fn outcome_matrix(&self, basis: Basis) -> [[f64; 2]; 2] {
        let [xx, yy, xy, yx] = self.outcome_probabilities(basis);
        [[xx, xy], [yx, yy]]
    }
}

/// Maps (|k_up>|S1>, |k_down>|S4>) through the second read-out (S1 -> k_down,
/// S4 -> k_up), k_up -> H, k_down -> V, and the phase diag(1, e^{iφ}) on the
/// first photon.
pub fn momentum_to_polarization(aps: &AtomPhotonState, phi: f64) -> Result<TwoPhotonState> {
    let [a, b] = aps.amplitudes;
    let n = a.norm_sqr() + b.norm_sqr();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidState(format!("atom-photon state has norm² {n}")));
    }
    TwoPhotonState::from_amplitudes([
        C64::new(0.0, 0.0),
        a,
        b * C64::from_polar(1.0, phi),
        C64::new(0.0, 0.0),
    ])
}

/// Maps a two-photon momentum state over (|k_up k_up>, |k_up k_down>,
/// |k_down k_up>, |k_down k_down>) to polarization.
pub fn momentum_pair_to_polarization(amps: [C64; 4], phi: f64) -> Result<TwoPhotonState> {
    let e = C64::from_polar(1.0, phi);
    TwoPhotonState::from_amplitudes([amps[0], amps[1], amps[2] * e, amps[3] * e])
}

/// Unnormalized coincidence weights over (xx, yy, xy, yx).
pub fn coincidence_weights(state: &TwoPhotonState, basis: Basis, d1: &DetectorModel, d2: &DetectorModel) -> [f64; 4] {
    let p = state.outcome_matrix(basis);
    let w = |x: usize, y: usize| {
        let mut s = 0.0;
        for o1 in 0..2 {
            for o2 in 0..2 {
                s += p[o1][o2] * d1.report_given_photon(x == o1) * d2.report_given_photon(y == o2);
            }
        }
        s
    };
    [w(0, 0), w(1, 1), w(0, 1), w(1, 0)]
}

fn normalized(w: [f64; 4]) -> Result<[f64; 4]> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("no coincidence events are possible"));
    }
    Ok(w.map(|x| x / total))
}

/// Outcome probabilities renormalized over coincidence events.
pub fn coincidence_probabilities(state: &TwoPhotonState, basis: Basis, det: &DetectorModel) -> Result<[f64; 4]> {
    det.validate()?;
    normalized(coincidence_weights(state, basis, det, det))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceRecord {
    /// (xx, yy, xy, yx)
    pub counts: [u64; 4],
    pub trials: u64,
}

impl CoincidenceRecord {
    pub fn parallel(&self) -> u64 {
        self.counts[0] + self.counts[1]
    }

    pub fn perpendicular(&self) -> u64 {
        self.counts[2] + self.counts[3]
    }
}

/// Multinomial draw of `trials` events.
pub fn sample_counts(probs: [f64; 4], trials: u64, seed: Option<u64>) -> Result<CoincidenceRecord> {
    let seed = seed.ok_or(Error::MissingSeed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_counts_with(probs, trials, &mut rng)
}

pub fn sample_counts_with<R: Rng + ?Sized>(probs: [f64; 4], trials: u64, rng: &mut R) -> Result<CoincidenceRecord> {
    if trials == 0 {
        return Err(Error::invalid("trials must be > 0"));
    }
    if probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid("probabilities must be >= 0"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("probabilities sum to {total}")));
    }
    let mut counts = [0u64; 4];
    let mut left = trials;
    let mut mass = 1.0;
    for i in 0..3 {
        if left == 0 {
            break;
        }
        let q = if mass > 0.0 { (probs[i] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(left, q)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(rng);
        counts[i] = k;
        left -= k;
        mass -= probs[i];
    }
    counts[3] = if probs[3] > 0.0 { left } else { 0 };
    Ok(CoincidenceRecord { counts, trials })
}

/// |(C_perp - C_par)/(C_perp + C_par)|
pub fn visibility(record: &CoincidenceRecord) -> Result<f64> {
    visibility_from(record.parallel() as f64, record.perpendicular() as f64)
}

pub fn visibility_from(par: f64, perp: f64) -> Result<f64> {
    let den = par + perp;
    if !(den > 0.0) {
        return Err(Error::invalid("visibility needs C_perp + C_par > 0"));
    }
    Ok(((perp - par) / den).abs())
}

/// Binomial standard error of the visibility.
pub fn visibility_error(record: &CoincidenceRecord) -> f64 {
    let n = (record.parallel() + record.perpendicular()) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = record.parallel() as f64 / n;
    2.0 * (p * (1.0 - p) / n).sqrt()
}

/// (1 + V_hv + V_pm + V_circ)/4
pub fn fidelity_bound(v_hv: f64, v_pm: f64, v_circ: f64) -> Result<f64> {
    for v in [v_hv, v_pm, v_circ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("visibility must lie in [0, 1], got {v}")));
        }
    }
    Ok((1.0 + v_hv + v_pm + v_circ) / 4.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurementResult {
    pub v_hv: f64,
    pub v_pm: f64,
    pub v_circ: f64,
    pub fidelity: f64,
    pub v_hv_err: f64,
    pub v_pm_err: f64,
    pub v_circ_err: f64,
    pub fidelity_err: f64,
    pub records: Vec<(Basis, CoincidenceRecord)>,
}

impl MeasurementResult {
    pub fn from_records(records: Vec<(Basis, CoincidenceRecord)>) -> Result<Self> {
        let find = |b: Basis| {
            records
                .iter()
                .find(|(x, _)| *x == b)
                .map(|(_, r)| *r)
                .ok_or_else(|| Error::invalid(format!("missing {} record", b.label())))
        };
        let (hv, pm, ci) = (find(Basis::HV)?, find(Basis::PlusMinus)?, find(Basis::Circular)?);
        let (v_hv, v_pm, v_circ) = (visibility(&hv)?, visibility(&pm)?, visibility(&ci)?);
        let errs = [visibility_error(&hv), visibility_error(&pm), visibility_error(&ci)];
        Ok(Self {
            v_hv,
            v_pm,
            v_circ,
            fidelity: fidelity_bound(v_hv, v_pm, v_circ)?,
            v_hv_err: errs[0],
            v_pm_err: errs[1],
            v_circ_err: errs[2],
            fidelity_err: errs.iter().map(|e| e * e).sum::<f64>().sqrt() / 4.0,
            records,
        })
    }
}

/// Noise and loss budget of the full entanglement verification run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndToEndModel {
    /// Probability of the branch that emits a first photon.
    pub branch_entangled: f64,
    /// Overall detection efficiency per channel (first, second photon).
    pub channel_efficiency: [f64; 2],
    /// Background click probability per detector gate.
    pub background: f64,
    pub delay_us: f64,
    pub tau_ground_us: f64,
    pub phi: f64,
}

impl EndToEndModel {
    pub fn paper_default(background: f64) -> Self {
        Self {
            branch_entangled: 0.5,
            channel_efficiency: [0.002, 0.002],
            background,
            delay_us: 0.3,
            tau_ground_us: 30.0,
            phi: 0.0,
        }
    }

    fn detectors(&self) -> Result<[DetectorModel; 2]> {
        Ok([
            DetectorModel::new(self.channel_efficiency[0], self.background)?,
            DetectorModel::new(self.channel_efficiency[1], self.background)?,
        ])
    }

    /// Coincidence probabilities over (xx, yy, xy, yx). The entangled branch
    /// carries the stored pair; the other branch has no first photon and an
    /// unpolarized second photon.
    pub fn probabilities(&self, aps: &AtomPhotonState, basis: Basis) -> Result<[f64; 4]> {
        if !(0.0..=1.0).contains(&self.branch_entangled) {
            return Err(Error::invalid("branch probability must lie in [0, 1]"));
        }
        let [d1, d2] = self.detectors()?;
        let pol = momentum_to_polarization(aps, self.phi)?.after_storage(self.delay_us, self.tau_ground_us)?;
        let ent = coincidence_weights(&pol, basis, &d1, &d2);
        let unpol = 0.5 * (d2.report_given_photon(true) + d2.report_given_photon(false));
        let noise = d1.report_without_photon() * unpol;
        let pe = self.branch_entangled;
        normalized(ent.map(|w| pe * w + (1.0 - pe) * noise))
    }

    pub fn expected(&self, aps: &AtomPhotonState) -> Result<(f64, [f64; 3])> {
        let mut v = [0.0; 3];
        for (slot, b) in v.iter_mut().zip(Basis::ALL) {
            let p = self.probabilities(aps, b)?;
            *slot = visibility_from(p[0] + p[1], p[2] + p[3])?;
        }
        Ok((fidelity_bound(v[0], v[1], v[2])?, v))
    }

    /// Draws `coincidences` events per basis; basis i uses stream i.
    pub fn simulate(&self, aps: &AtomPhotonState, coincidences: u64, seed: Option<u64>) -> Result<MeasurementResult> {
        let seed = seed.ok_or(Error::MissingSeed)?;
        let mut records = Vec::new();
        for (i, b) in Basis::ALL.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            records.push((b, sample_counts_with(self.probabilities(aps, b)?, coincidences, &mut rng)?));
        }
        MeasurementResult::from_records(records)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub phi: f64,
    /// (xx, yy, xy, yx)
    pub probabilities: [f64; 4],
    pub c_parallel: f64,
    pub c_perpendicular: f64,
    pub visibility: f64,
}

/// Coincidence fractions of the ideal (|HV> - e^{iφ}|VH>)/√2 pair over a
/// phase sweep.
pub fn phase_sweep(basis: Basis, det: &DetectorModel, phis: &[f64]) -> Result<Vec<SweepPoint>> {
    phis.iter()
        .map(|&phi| {
            let p = coincidence_probabilities(&TwoPhotonState::ideal(phi), basis, det)?;
            let (par, perp) = (p[0] + p[1], p[2] + p[3]);
            Ok(SweepPoint {
                phi,
                probabilities: p,
                c_parallel: par,
                c_perpendicular: perp,
                visibility: visibility_from(par, perp)?,
            })
        })
        .collect()
}

// ---- photon statistics -------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// One photon with probability `retrieval`, else vacuum.
    SinglePhoton { retrieval: f64 },
    Coherent { mean: f64 },
    Thermal { mean: f64 },
    /// Marginal of a two-mode squeezed pair source, P(n) = (1-p) p^n.
    DlczPair { p: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonFieldModel {
    pub field: FieldKind,
    pub detector: DetectorModel,
}

const TAIL: f64 = 1e-16;
const N_MAX: usize = 400;

impl FieldKind {
    /// Photon-number distribution truncated where the tail drops below
    /// 1e-16, renormalized.
    pub fn distribution(&self) -> Result<Vec<f64>> {
        let mut p = match *self {
            FieldKind::SinglePhoton { retrieval } => {
                if !(0.0..=1.0).contains(&retrieval) {
                    return Err(Error::invalid("retrieval must lie in [0, 1]"));
                }
                vec![1.0 - retrieval, retrieval]
            }
            FieldKind::Coherent { mean } => {
                if !(mean >= 0.0) {
                    return Err(Error::invalid("mean photon number must be >= 0"));
                }
                let mut out = vec![(-mean).exp()];
                let mut cum = out[0];
                while 1.0 - cum > TAIL && out.len() < N_MAX {
                    let n = out.len() as f64;
                    let next = out[out.len() - 1] * mean / n;
                    cum += next;
                    out.push(next);
                }
                out
            }
            FieldKind::Thermal { mean } => {
                if !(mean >= 0.0) {
                    return Err(Error::invalid("mean photon number must be >= 0"));
                }
                geometric(mean / (1.0 + mean))
            }
            FieldKind::DlczPair { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::invalid("excitation probability must lie in [0, 1)"));
                }
                geometric(p)
            }
        };
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        Ok(p)
    }
}

fn geometric(q: f64) -> Vec<f64> {
    let mut out = vec![1.0 - q];
    let mut cum = out[0];
    while 1.0 - cum > TAIL && out.len() < N_MAX && q > 0.0 {
        let next = out[out.len() - 1] * q;
        cum += next;
        out.push(next);
    }
    out
}

/// Click probabilities of a balanced HBT setup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HbtProbabilities {
    pub p1: f64,
    pub p2: f64,
    pub p12: f64,
}

impl HbtProbabilities {
    pub fn g2(&self) -> Result<f64> {
        let den = self.p1 * self.p2;
        if !(den > 0.0) {
            return Err(Error::invalid("g2 undefined: a detector never clicks"));
        }
        Ok(self.p12 / den)
    }
}

/// Per photon: detected at detector 1 or 2 with q = η/2 each, lost with
/// w = 1 - η. Probabilities are built from recurrences over non-negative
/// terms so that P12 stays exact near zero.
pub fn hbt_probabilities(model: &PhotonFieldModel) -> Result<HbtProbabilities> {
    model.detector.validate()?;
    let dist = model.field.distribution()?;
    let (eta, b) = (model.detector.efficiency, model.detector.background);
    let q = eta / 2.0;
    let w = 1.0 - eta;
    let (mut p1, mut p12) = (0.0, 0.0);
    // Photon-induced outcomes for n photons: none = w^n, only1 (= only2),
    // both, and click1 = 1 - (1 - q)^n.
    let (mut none, mut only1, mut both, mut click1) = (1.0, 0.0, 0.0, 0.0);
    for (n, p) in dist.iter().enumerate() {
        if n > 0 {
            both += 2.0 * q * only1;
            only1 = only1 * (q + w) + q * none;
            click1 += q * (1.0 - click1);
            none *= w;
        }
        p1 += p * (b + (1.0 - b) * click1);
        p12 += p * (both + 2.0 * b * only1 + b * b * none);
    }
    Ok(HbtProbabilities { p1, p2: p1, p12 })
}

/// Exact g²(0) = P12/(P1 P2) from the photon-number distribution.
pub fn g2_analytic(model: &PhotonFieldModel) -> Result<f64> {
    hbt_probabilities(model)?.g2()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct G2Estimate {
    pub g2: f64,
    pub sigma: f64,
    pub trials: u64,
    pub n1: u64,
    pub n2: u64,
    pub n12: u64,
}

const G2_CHUNK: u64 = 1 << 16;

/// Monte Carlo g²(0). Chunk `c` of 65536 trials uses stream `c`.
pub fn g2_monte_carlo(model: &PhotonFieldModel, trials: u64, seed: Option<u64>) -> Result<G2Estimate> {
    let seed = seed.ok_or(Error::MissingSeed)?;
    model.detector.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trials must be > 0"));
    }
    let dist = model.field.distribution()?;
    let mut cdf = Vec::with_capacity(dist.len());
    let mut acc = 0.0;
    for p in &dist {
        acc += p;
        cdf.push(acc);
    }
    let (eta, b) = (model.detector.efficiency, model.detector.background);
    let chunks = trials.div_ceil(G2_CHUNK);
    let tallies: Vec<[u64; 3]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let n_here = G2_CHUNK.min(trials - c * G2_CHUNK);
            let mut t = [0u64; 3];
            for _ in 0..n_here {
                let u: f64 = rng.random();
                let n = cdf.partition_point(|&x| x < u).min(dist.len() - 1);
                let (mut c1, mut c2) = (false, false);
                for _ in 0..n {
                    let x: f64 = rng.random();
                    if x < eta / 2.0 {
                        c1 = true;
                    } else if x < eta {
                        c2 = true;
                    }
                }
                c1 |= rng.random::<f64>() < b;
                c2 |= rng.random::<f64>() < b;
                t[0] += c1 as u64;
                t[1] += c2 as u64;
                t[2] += (c1 && c2) as u64;
            }
            t
        })
        .collect();
    let [n1, n2, n12] = tallies.iter().fold([0u64; 3], |a, t| [a[0] + t[0], a[1] + t[1], a[2] + t[2]]);
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("g2 undefined: a detector never clicked"));
    }
    let n = trials as f64;
    let (q1, q2, q12) = (n1 as f64 / n, n2 as f64 / n, n12 as f64 / n);
    let g2 = q12 / (q1 * q2);
    // Delta method over the cells (both, only 1, only 2, none).
    let cells = [q12, q1 - q12, q2 - q12];
    let grads = if q12 > 0.0 {
        [1.0 / q12 - 1.0 / q1 - 1.0 / q2, -1.0 / q1, -1.0 / q2]
    } else {
        [0.0, -1.0 / q1, -1.0 / q2]
    };
    let m1: f64 = cells.iter().zip(&grads).map(|(q, g)| q * g * g).sum();
    let m0: f64 = cells.iter().zip(&grads).map(|(q, g)| q * g).sum();
    let sigma = if q12 > 0.0 {
        g2 * ((m1 - m0 * m0) / n).max(0.0).sqrt()
    } else {
        // Zero coincidences: one-count upper scale.
        1.0 / (n * q1 * q2)
    };
    Ok(G2Estimate {
        g2,
        sigma,
        trials,
        n1,
        n2,
        n12,
    })
}

/// Background probability b for which a single-photon field reaches
/// `target` g²(0), by bisection on [0, 1).
pub fn calibrate_background(target: f64, retrieval: f64, efficiency: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(format!("target g2 must lie in (0, 1), got {target}")));
    }
    let g = |b: f64| {
        g2_analytic(&PhotonFieldModel {
            field: FieldKind::SinglePhoton { retrieval },
            detector: DetectorModel {
                efficiency,
                background: b,
            },
        })
    };
    let hi_b = 1.0 - 1e-12;
    let asymptote = g(hi_b)?;
    if target >= asymptote {
        return Err(Error::invalid(format!(
            "target g2 {target} is not reachable (asymptote {asymptote:.6})"
        )));
    }
    let (mut lo, mut hi) = (0.0, hi_b);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Default single-excitation chain: preparation 0.8, retrieval 0.03,
/// transmission and collection 0.5, detector 0.6.
pub const SINGLE_PHOTON_PRESENCE: f64 = 0.8 * 0.03 * 0.5;
pub const DETECTOR_EFFICIENCY: f64 = 0.6;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collective::AtomPhotonState;
    use crate::geometry::WaveVector;

    fn singlet_aps() -> AtomPhotonState {
        let r = FRAC_1_SQRT_2;
        AtomPhotonState::new(C64::new(r, 0.0), C64::new(-r, 0.0), WaveVector::default(), WaveVector::default()).unwrap()
    }

    fn close4(a: [f64; 4], b: [f64; 4], tol: f64) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn mapping_examples() {
        let s = momentum_to_polarization(&singlet_aps(), 0.0).unwrap();
        assert_eq!(s, TwoPhotonState::ideal(0.0));
        let t = momentum_to_polarization(&singlet_aps(), PI).unwrap();
        let amp = t.density().entries()[(1, 2)];
        assert!((amp - C64::new(0.5, 0.0)).norm() < 1e-15);
        // Product input |k_up>|k_down> -> |HV>.
        let p = momentum_pair_to_polarization(
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
            1.3,
        )
        .unwrap();
        assert!((p.density().population(1) - 1.0).abs() < 1e-15);
        let bad = AtomPhotonState {
            amplitudes: [C64::new(1.0, 0.0), C64::new(1.0, 0.0)],
            k_up: WaveVector::default(),
            k_down: WaveVector::default(),
        };
        assert!(momentum_to_polarization(&bad, 0.0).is_err());
    }

    #[test]
    fn coincidence_examples() {
        let ideal = DetectorModel::ideal();
        let singlet = TwoPhotonState::ideal(0.0);
        for b in Basis::ALL {
            let p = coincidence_probabilities(&singlet, b, &ideal).unwrap();
            assert!(close4(p, [0.0, 0.0, 0.5, 0.5], 1e-12), "{b:?} {p:?}");
        }
        let triplet = TwoPhotonState::ideal(PI);
        let p = coincidence_probabilities(&triplet, Basis::PlusMinus, &ideal).unwrap();
        assert!(close4(p, [0.5, 0.5, 0.0, 0.0], 1e-12));
        for k in 0..16 {
            let s = TwoPhotonState::ideal(k as f64 * 0.39);
            let p = coincidence_probabilities(&s, Basis::HV, &ideal).unwrap();
            assert!(p[0] < 1e-15 && p[1] < 1e-15);
        }
    }

    #[test]
    fn noisy_detector_matches_enumeration() {
        // Enumerate photon detection and background clicks per channel.
        let det = DetectorModel::new(0.3, 0.2).unwrap();
        let enumerate = |o: Option<usize>, x: usize| {
            let (eta, b) = (det.efficiency, det.background);
            let mut total = 0.0;
            for photon in [false, true] {
                let pp = match (o, photon) {
                    (None, true) => continue,
                    (None, false) => 1.0,
                    (Some(_), true) => eta,
                    (Some(_), false) => 1.0 - eta,
                };
                for bg in [None, Some(0usize), Some(1usize)] {
                    let pb = if bg.is_none() { 1.0 - b } else { b / 2.0 };
                    let mut clicks = [false; 2];
                    if photon {
                        clicks[o.unwrap()] = true;
                    }
                    if let Some(d) = bg {
                        clicks[d] = true;
                    }
                    let report = match clicks {
                        [true, true] => 0.5,
                        c if c[x] => 1.0,
                        _ => 0.0,
                    };
                    total += pp * pb * report;
                }
            }
            total
        };
        for o in 0..2 {
            for x in 0..2 {
                assert!((enumerate(Some(o), x) - det.report_given_photon(o == x)).abs() < 1e-15);
            }
            assert!((enumerate(None, o) - det.report_without_photon()).abs() < 1e-15);
        }
    }

    #[test]
    fn visibility_and_fidelity() {
        let r = CoincidenceRecord { counts: [0, 0, 500, 500], trials: 1000 };
        assert_eq!(visibility(&r).unwrap(), 1.0);
        let r = CoincidenceRecord { counts: [7, 7, 7, 7], trials: 28 };
        assert_eq!(visibility(&r).unwrap(), 0.0);
        // C_par fraction (1 - 0.828)/2 reproduces V = 0.828.
        let r = CoincidenceRecord { counts: [43, 43, 457, 457], trials: 1000 };
        assert!((visibility(&r).unwrap() - 0.828).abs() < 1e-12);
        assert!(visibility(&CoincidenceRecord { counts: [0; 4], trials: 1 }).is_err());
        assert!((fidelity_bound(0.897, 0.828, 0.879).unwrap() - 0.901).abs() < 5e-4);
        assert_eq!(fidelity_bound(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(fidelity_bound(0.0, 0.0, 0.0).unwrap(), 0.25);
        assert!(fidelity_bound(1.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn sampling() {
        let r = sample_counts([0.0, 0.0, 0.5, 0.5], 10_000, Some(1)).unwrap();
        assert_eq!(r.parallel(), 0);
        assert_eq!(r.counts.iter().sum::<u64>(), 10_000);
        let r = sample_counts([0.25; 4], 4_000_000, Some(2)).unwrap();
        let sigma = (4e6f64 * 0.25 * 0.75).sqrt();
        for c in r.counts {
            assert!((c as f64 - 1e6).abs() < 5.0 * sigma);
        }
        assert_eq!(sample_counts([0.25; 4], 1000, Some(9)).unwrap(), sample_counts([0.25; 4], 1000, Some(9)).unwrap());
        assert!(matches!(sample_counts([0.25; 4], 10, None), Err(Error::MissingSeed)));
    }

    #[test]
    fn phase_sweep_is_complementary() {
        let phis: Vec<f64> = (0..64).map(|i| i as f64 * 2.0 * PI / 64.0).collect();
        let pm = phase_sweep(Basis::PlusMinus, &DetectorModel::ideal(), &phis).unwrap();
        for s in &pm {
            assert!((s.c_parallel + s.c_perpendicular - 1.0).abs() < 1e-12);
            assert!((s.c_parallel - (1.0 - s.phi.cos()) / 2.0).abs() < 1e-12);
        }
        let hv = phase_sweep(Basis::HV, &DetectorModel::ideal(), &phis).unwrap();
        assert!(hv.iter().all(|s| s.c_parallel == 0.0 && (s.c_perpendicular - 1.0).abs() < 1e-15));
    }

    #[test]
    fn visibility_drops_with_background() {
        let s = TwoPhotonState::ideal(0.0);
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let det = DetectorModel::new(0.05, k as f64 * 0.002).unwrap();
            let p = coincidence_probabilities(&s, Basis::PlusMinus, &det).unwrap();
            let v = visibility_from(p[0] + p[1], p[2] + p[3]).unwrap();
            assert!(v <= last + 1e-15);
            last = v;
        }
    }

    #[test]
    fn storage_dephasing_scales_visibility() {
        let s = TwoPhotonState::ideal(0.0).after_storage(0.3, 30.0).unwrap();
        let p = coincidence_probabilities(&s, Basis::PlusMinus, &DetectorModel::ideal()).unwrap();
        let v = visibility_from(p[0] + p[1], p[2] + p[3]).unwrap();
        assert!((v - (-0.01f64).exp()).abs() < 1e-12);
        let p = coincidence_probabilities(&s, Basis::HV, &DetectorModel::ideal()).unwrap();
        assert_eq!(visibility_from(p[0] + p[1], p[2] + p[3]).unwrap(), 1.0);
    }

    fn field(kind: FieldKind, eta: f64, b: f64) -> PhotonFieldModel {
        PhotonFieldModel { field: kind, detector: DetectorModel { efficiency: eta, background: b } }
    }

    #[test]
    fn g2_analytic_cases() {
        let single = field(FieldKind::SinglePhoton { retrieval: 0.3 }, 0.6, 0.0);
        assert!(g2_analytic(&single).unwrap().abs() < 1e-12);
        for eta in [0.1, 0.5, 1.0] {
            let c = field(FieldKind::Coherent { mean: 0.7 }, eta, 0.0);
            assert!((g2_analytic(&c).unwrap() - 1.0).abs() < 1e-12);
        }
        for (mean, eta) in [(0.01, 1.0), (0.3, 0.5)] {
            let t = field(FieldKind::Thermal { mean }, eta, 0.0);
            let a = eta * mean / 2.0;
            assert!((g2_analytic(&t).unwrap() - 2.0 * (1.0 + a) / (1.0 + 2.0 * a)).abs() < 1e-10);
        }
        let d = FieldKind::DlczPair { p: 0.05 }.distribution().unwrap();
        assert!((d[2] / d[1] - 0.05).abs() < 1e-12);
        for k in [FieldKind::Coherent { mean: 2.0 }, FieldKind::Thermal { mean: 2.0 }] {
            assert!((k.distribution().unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(g2_analytic(&field(FieldKind::SinglePhoton { retrieval: 0.0 }, 0.6, 0.0)).is_err());
    }

    #[test]
    fn thermal_matches_fock_sampling_oracle() {
        // Independent Fock enumeration up to n = 20 with binomial splitting.
        let (mean, eta): (f64, f64) = (0.4, 0.7);
        let q = mean / (1.0 + mean);
        let (mut none1, mut none12) = (0.0, 0.0);
        for n in 0..=20 {
            let p = (1.0 - q) * q.powi(n);
            for k1 in 0..=n {
                for k2 in 0..=(n - k1) {
                    let lost = n - k1 - k2;
                    let ways = binom(n, k1) * binom(n - k1, k2);
                    let w = p * ways * (eta / 2.0).powi(k1 + k2) * (1.0 - eta).powi(lost);
                    if k1 == 0 {
                        none1 += w;
                    }
                    if k1 == 0 && k2 == 0 {
                        none12 += w;
                    }
                }
            }
        }
        let g = (1.0 - 2.0 * none1 + none12) / (1.0 - none1).powi(2);
        let m = field(FieldKind::Thermal { mean }, eta, 0.0);
        assert!((g2_analytic(&m).unwrap() - g).abs() < 1e-9);
    }

    fn binom(n: i32, k: i32) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn g2_monte_carlo_agrees_with_analytic() {
        for (kind, eta, b) in [
            (FieldKind::Coherent { mean: 0.5 }, 0.6, 0.001),
            (FieldKind::Thermal { mean: 0.2 }, 0.8, 0.0),
            (FieldKind::SinglePhoton { retrieval: 0.5 }, 0.6, 0.01),
        ] {
            let m = field(kind, eta, b);
            let est = g2_monte_carlo(&m, 200_000, Some(4)).unwrap();
            let exact = g2_analytic(&m).unwrap();
            assert!((est.g2 - exact).abs() < 4.0 * est.sigma, "{kind:?} {} {} {}", est.g2, exact, est.sigma);
        }
        let m = field(FieldKind::Coherent { mean: 0.5 }, 0.6, 0.0);
        assert_eq!(g2_monte_carlo(&m, 70_000, Some(3)).unwrap(), g2_monte_carlo(&m, 70_000, Some(3)).unwrap());
        assert!(matches!(g2_monte_carlo(&m, 10, None), Err(Error::MissingSeed)));
    }

    #[test]
    fn background_calibration() {
        let b = calibrate_background(0.062, SINGLE_PHOTON_PRESENCE, DETECTOR_EFFICIENCY).unwrap();
        let m = field(FieldKind::SinglePhoton { retrieval: SINGLE_PHOTON_PRESENCE }, DETECTOR_EFFICIENCY, b);
        assert!((g2_analytic(&m).unwrap() - 0.062).abs() < 1e-4);
        let small = calibrate_background(1e-6, SINGLE_PHOTON_PRESENCE, DETECTOR_EFFICIENCY).unwrap();
        assert!(small < 1e-8);
        assert!(calibrate_background(1.0, 0.01, 0.6).is_err());
        assert!(calibrate_background(0.0, 0.01, 0.6).is_err());
        // g2 rises monotonically with b for a single-photon field.
        let mut last = -1.0;
        for k in 0..50 {
            let g = g2_analytic(&field(FieldKind::SinglePhoton { retrieval: 0.01 }, 0.6, k as f64 * 1e-4)).unwrap();
            assert!(g > last);
            last = g;
        }
    }

    #[test]
    fn end_to_end_band() {
        let b = calibrate_background(0.062, SINGLE_PHOTON_PRESENCE, DETECTOR_EFFICIENCY).unwrap();
        let model = EndToEndModel::paper_default(b);
        let (f, v) = model.expected(&singlet_aps()).unwrap();
        assert!((0.87..=0.93).contains(&f), "F = {f}, V = {v:?}");
        let sim = model.simulate(&singlet_aps(), 200_000, Some(8)).unwrap();
        assert!((sim.fidelity - f).abs() < 5.0 * sim.fidelity_err);
        let noiseless = EndToEndModel { background: 0.0, delay_us: 0.0, ..model };
        assert!((noiseless.expected(&singlet_aps()).unwrap().0 - 1.0).abs() < 1e-12);
    }
}
