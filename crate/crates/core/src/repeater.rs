//! Entanglement swapping between two memory nodes through a linear-optics
//! Bell-state measurement, comparing the blockaded source with a DLCZ pair
//! source.
//!
//! Photons carry an H/V polarization and travel from the left (a) and right
//! (b) nodes to a 50/50 beam splitter with outputs c and d, each followed by
//! a polarizing splitter and two click detectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest DLCZ photon number kept.
pub const DLCZ_TRUNCATION: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceModel {
    /// Entangled photon with probability 1/2, then retrieval `retrieval`.
    SemiDeterministic { retrieval: f64 },
    /// Pair source with P(n) ∝ p^n (1-p), n <= 4; each photon H or V at
    /// random.
    Dlcz { p: f64 },
}

impl SourceModel {
    pub const P_ENTANGLED: f64 = 0.5;

    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceModel::SemiDeterministic { retrieval } if !(0.0..=1.0).contains(&retrieval) => {
                Err(Error::invalid(format!("retrieval must lie in [0, 1], got {retrieval}")))
            }
            SourceModel::Dlcz { p } if !(p > 0.0 && p <= 0.2) => {
                Err(Error::invalid(format!("dlcz excitation p must lie in (0, 0.2], got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// Emitted photon-number distribution.
    pub fn photon_number_distribution(&self) -> Vec<f64> {
        match *self {
            SourceModel::SemiDeterministic { .. } => vec![1.0 - Self::P_ENTANGLED, Self::P_ENTANGLED],
            SourceModel::Dlcz { p } => {
                let raw: Vec<f64> = (0..=DLCZ_TRUNCATION).map(|n| (1.0 - p) * p.powi(n as i32)).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / s).collect()
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SourceModel::SemiDeterministic { .. } => "semi_deterministic",
            SourceModel::Dlcz { .. } => "dlcz",
        }
    }
}

/// State of a memory after an emission attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemoryTag {
    /// One excitation entangled with the emitted photon.
    Entangled,
    /// Blockaded source branch with no photon and two ground excitations.
    GroundPair,
    /// DLCZ memory holding `n` excitations.
    Excitations(u8),
}

impl MemoryTag {
    fn is_single(self) -> bool {
        matches!(self, MemoryTag::Entangled | MemoryTag::Excitations(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Emission {
    /// Photons leaving the node as (H, V) counts.
    pub photons: [u8; 2],
    pub memory: MemoryTag,
}

impl Emission {
    pub fn photon_number(&self) -> u8 {
        self.photons[0] + self.photons[1]
    }
}

fn random_polarizations<R: Rng + ?Sized>(n: usize, rng: &mut R) -> [u8; 2] {
    let mut out = [0u8; 2];
    for _ in 0..n {
        out[rng.random_range(0..2usize)] += 1;
    }
    out
}

pub fn attempt_emission<R: Rng + ?Sized>(src: &SourceModel, rng: &mut R) -> Result<Emission> {
    src.validate()?;
    Ok(match *src {
        SourceModel::SemiDeterministic { retrieval } => {
            if rng.random::<f64>() < SourceModel::P_ENTANGLED {
                let photons = if rng.random::<f64>() < retrieval {
                    random_polarizations(1, rng)
                } else {
                    [0, 0]
                };
                Emission {
                    photons,
                    memory: MemoryTag::Entangled,
                }
            } else {
                Emission {
                    photons: [0, 0],
                    memory: MemoryTag::GroundPair,
                }
            }
        }
        SourceModel::Dlcz { .. } => {
            let dist = src.photon_number_distribution();
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut n = dist.len() - 1;
            for (k, p) in dist.iter().enumerate() {
                acc += p;
                if u < acc {
                    n = k;
                    break;
                }
            }
            Emission {
                photons: random_polarizations(n, rng),
                memory: MemoryTag::Excitations(n as u8),
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Channel transmission per photon.
    pub eta: f64,
    pub detector_efficiency: f64,
    /// Background click probability per detector.
    pub background: f64,
}

impl LinkConfig {
    /// Ceiling on Bell-state discrimination with linear optics.
    pub const BSM_CEILING: f64 = 0.5;

    pub fn lossless() -> Self {
        Self {
            eta: 1.0,
            detector_efficiency: 1.0,
            background: 0.0,
        }
    }

    pub fn with_eta(eta: f64) -> Self {
        Self {
            eta,
            ..Self::lossless()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) || !(0.0..=1.0).contains(&self.detector_efficiency) {
            return Err(Error::invalid("transmission and detector efficiency must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.background) {
            return Err(Error::invalid("background must lie in [0, 1)"));
        }
        Ok(())
    }

    fn survival(&self) -> f64 {
        self.eta * self.detector_efficiency
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Herald {
    None,
    PsiPlus,
    PsiMinus,
}

/// Detector order (cH, cV, dH, dV).
pub fn classify(clicks: [bool; 4]) -> Herald {
    match clicks {
        [true, false, false, true] | [false, true, true, false] => Herald::PsiMinus,
        [true, true, false, false] | [false, false, true, true] => Herald::PsiPlus,
        _ => Herald::None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BellOutcome {
    pub herald: Herald,
    /// Photons reaching the splitter from (left, right).
    pub arrived: [u8; 2],
    /// Exactly one photon arrived from each side.
    pub one_from_each: bool,
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, k| a * k as f64)
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// P(k photons exit port c) for n_a, n_b photons of one polarization
/// entering a 50/50 splitter (c = (a + b)/√2, d = (a - b)/√2).
pub fn splitter_distribution(n_a: usize, n_b: usize) -> Vec<f64> {
    let n = n_a + n_b;
    let norm = 2f64.powi(n as i32).sqrt() * (factorial(n_a) * factorial(n_b)).sqrt();
    (0..=n)
        .map(|k| {
            let mut amp = 0.0;
            for i in 0..=n_a.min(k) {
                let j = k - i;
                if j > n_b {
                    continue;
                }
                let sign = if (n_b - j) % 2 == 0 { 1.0 } else { -1.0 };
                amp += sign * binomial(n_a, i) * binomial(n_b, j);
            }
            let a = amp * (factorial(k) * factorial(n - k)).sqrt() / norm;
            a * a
        })
        .collect()
}

fn thin<R: Rng + ?Sized>(photons: [u8; 2], p: f64, rng: &mut R) -> [u8; 2] {
    let mut out = [0u8; 2];
    for (o, &n) in out.iter_mut().zip(&photons) {
        for _ in 0..n {
            if rng.random::<f64>() < p {
                *o += 1;
            }
        }
    }
    out
}

fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    dist.len() - 1
}

pub fn bell_measure<R: Rng + ?Sized>(left: &Emission, right: &Emission, link: &LinkConfig, rng: &mut R) -> Result<BellOutcome> {
    link.validate()?;
    let l = thin(left.photons, link.survival(), rng);
    let r = thin(right.photons, link.survival(), rng);
    let mut clicks = [false; 4];
    for pol in 0..2 {
        let (na, nb) = (l[pol] as usize, r[pol] as usize);
        if na + nb == 0 {
            continue;
        }
        let k = sample_index(&splitter_distribution(na, nb), rng);
        clicks[pol] |= k > 0;
        clicks[2 + pol] |= na + nb - k > 0;
    }
    for c in &mut clicks {
        *c |= rng.random::<f64>() < link.background;
    }
    let arrived = [l[0] + l[1], r[0] + r[1]];
    Ok(BellOutcome {
        herald: classify(clicks),
        arrived,
        one_from_each: arrived == [1, 1],
    })
}

/// Memory-memory fidelity with the heralded Bell state.
fn herald_fidelity(left: MemoryTag, right: MemoryTag, one_from_each: bool) -> f64 {
    if left.is_single() && right.is_single() {
        if one_from_each {
            1.0
        } else {
            0.25
        }
    } else {
        0.0
    }
}

fn is_genuine(left: MemoryTag, right: MemoryTag, one_from_each: bool) -> bool {
    left.is_single() && right.is_single() && one_from_each
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeraldStats {
    pub herald_rate: f64,
    pub herald_rate_ci95: f64,
    pub spurious_fraction: f64,
    pub spurious_ci95: f64,
    pub conditional_fidelity: f64,
    pub fidelity_ci95: f64,
    pub trials: Option<u64>,
    /// Number of heralds observed (Monte Carlo only).
    pub heralds: Option<u64>,
    pub seed: Option<u64>,
}

impl HeraldStats {
    pub fn herald_sigma(&self) -> f64 {
        self.herald_rate_ci95 / 1.96
    }

    pub fn spurious_sigma(&self) -> f64 {
        self.spurious_ci95 / 1.96
    }

    pub fn fidelity_sigma(&self) -> f64 {
        self.fidelity_ci95 / 1.96
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    heralds: u64,
    spurious: u64,
    fid_sum: f64,
    fid_sq: f64,
}

/// Monte Carlo over `trials` attempts; trial i draws from ChaCha8(seed) on
/// stream i.
pub fn simulate_link(srcs: (&SourceModel, &SourceModel), link: &LinkConfig, trials: u64, seed: Option<u64>) -> Result<HeraldStats> {
    let seed = seed.ok_or(Error::MissingSeed)?;
    srcs.0.validate()?;
    srcs.1.validate()?;
    link.validate()?;
    if trials < 10_000 {
        return Err(Error::invalid(format!("trials must be >= 10^4, got {trials}")));
    }
    const CHUNK: u64 = 1 << 14;
    let tallies: Vec<Tally> = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| -> Result<Tally> {
            let mut t = Tally::default();
            for i in (c * CHUNK)..((c + 1) * CHUNK).min(trials) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i);
                let l = attempt_emission(srcs.0, &mut rng)?;
                let r = attempt_emission(srcs.1, &mut rng)?;
                let out = bell_measure(&l, &r, link, &mut rng)?;
                if out.herald != Herald::None {
                    t.heralds += 1;
                    if !is_genuine(l.memory, r.memory, out.one_from_each) {
                        t.spurious += 1;
                    }
                    let f = herald_fidelity(l.memory, r.memory, out.one_from_each);
                    t.fid_sum += f;
                    t.fid_sq += f * f;
                }
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let total = tallies.iter().fold(Tally::default(), |a, t| Tally {
        heralds: a.heralds + t.heralds,
        spurious: a.spurious + t.spurious,
        fid_sum: a.fid_sum + t.fid_sum,
        fid_sq: a.fid_sq + t.fid_sq,
    });
    let n = trials as f64;
    let h = total.heralds as f64;
    let rate = h / n;
    let (spur, spur_sd, fid, fid_sd) = if total.heralds > 0 {
        let s = total.spurious as f64 / h;
        let f = total.fid_sum / h;
        let var = (total.fid_sq / h - f * f).max(0.0);
        (s, (s * (1.0 - s) / h).sqrt(), f, (var / h).sqrt())
    } else {
        // Conditional quantities are undefined without a herald.
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(HeraldStats {
        herald_rate: rate,
        herald_rate_ci95: 1.96 * (rate * (1.0 - rate) / n).sqrt(),
        spurious_fraction: spur,
        spurious_ci95: 1.96 * spur_sd,
        conditional_fidelity: fid,
        fidelity_ci95: 1.96 * fid_sd,
        trials: Some(trials),
        heralds: Some(total.heralds),
        seed: Some(seed),
    })
}

/// Weighted emission outcomes of one node: (probability, photons, tag).
fn emission_lattice(src: &SourceModel) -> Vec<(f64, [u8; 2], MemoryTag)> {
    let mut out = Vec::new();
    match *src {
        SourceModel::SemiDeterministic { retrieval } => {
            let pe = SourceModel::P_ENTANGLED;
            out.push((1.0 - pe, [0, 0], MemoryTag::GroundPair));
            out.push((pe * (1.0 - retrieval), [0, 0], MemoryTag::Entangled));
            out.push((pe * retrieval / 2.0, [1, 0], MemoryTag::Entangled));
            out.push((pe * retrieval / 2.0, [0, 1], MemoryTag::Entangled));
        }
        SourceModel::Dlcz { .. } => {
            for (n, p) in src.photon_number_distribution().into_iter().enumerate() {
                let w = 0.5f64.powi(n as i32);
                for h in 0..=n {
                    out.push((p * binomial(n, h) * w, [h as u8, (n - h) as u8], MemoryTag::Excitations(n as u8)));
                }
            }
        }
    }
    out.retain(|(p, _, _)| *p > 0.0);
    out
}

/// Survivor distribution of (H, V) photons after independent loss.
fn thinned_lattice(photons: [u8; 2], p: f64) -> Vec<(f64, [u8; 2])> {
    let mut out = Vec::new();
    let (nh, nv) = (photons[0] as usize, photons[1] as usize);
    for kh in 0..=nh {
        for kv in 0..=nv {
            let w = binomial(nh, kh) * p.powi(kh as i32) * (1.0 - p).powi((nh - kh) as i32)
                * binomial(nv, kv) * p.powi(kv as i32) * (1.0 - p).powi((nv - kv) as i32);
            if w > 0.0 {
                out.push((w, [kh as u8, kv as u8]));
            }
        }
    }
    out
}

/// Herald probabilities (Ψ+ or Ψ-) for given surviving photons.
fn herald_probability(l: [u8; 2], r: [u8; 2], background: f64) -> f64 {
    // Distribution over photon-occupied detectors (cH, cV, dH, dV).
    let mut occ: Vec<(f64, [bool; 4])> = vec![(1.0, [false; 4])];
    for pol in 0..2 {
        let (na, nb) = (l[pol] as usize, r[pol] as usize);
        if na + nb == 0 {
            continue;
        }
        let dist = splitter_distribution(na, nb);
        let mut next = Vec::new();
        for (w, mask) in &occ {
            for (k, p) in dist.iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                let mut m = *mask;
                m[pol] |= k > 0;
                m[2 + pol] |= na + nb - k > 0;
                next.push((w * p, m));
            }
        }
        occ = next;
    }
    let mut total = 0.0;
    for (w, mask) in occ {
        for bg in 0..16u8 {
            let mut pb = 1.0;
            let mut clicks = mask;
            for d in 0..4 {
                if bg >> d & 1 == 1 {
                    pb *= background;
                    clicks[d] = true;
                } else {
                    pb *= 1.0 - background;
                }
            }
            if pb > 0.0 && classify(clicks) != Herald::None {
                total += w * pb;
            }
        }
    }
    total
}

/// Exact statistics by enumerating the truncated photon-number lattice.
pub fn analytic_link(srcs: (&SourceModel, &SourceModel), link: &LinkConfig) -> Result<HeraldStats> {
    srcs.0.validate()?;
    srcs.1.validate()?;
    link.validate()?;
    let (mut herald, mut spurious, mut fid) = (0.0, 0.0, 0.0);
    for (pl, phl, tl) in emission_lattice(srcs.0) {
        for (pr, phr, tr) in emission_lattice(srcs.1) {
            for (wl, sl) in thinned_lattice(phl, link.survival()) {
                for (wr, sr) in thinned_lattice(phr, link.survival()) {
                    let w = pl * pr * wl * wr;
                    let ph = herald_probability(sl, sr, link.background);
                    if ph == 0.0 {
                        continue;
                    }
                    let one_each = sl[0] + sl[1] == 1 && sr[0] + sr[1] == 1;
                    herald += w * ph;
                    if !is_genuine(tl, tr, one_each) {
                        spurious += w * ph;
                    }
                    fid += w * ph * herald_fidelity(tl, tr, one_each);
                }
            }
        }
    }
    let (s, f) = if herald > 0.0 {
        (spurious / herald, fid / herald)
    } else {
        (0.0, 0.0)
    };
    Ok(HeraldStats {
        herald_rate: herald,
        herald_rate_ci95: 0.0,
        spurious_fraction: s,
        spurious_ci95: 0.0,
        conditional_fidelity: f,
        fidelity_ci95: 0.0,
        trials: None,
        heralds: None,
        seed: None,
    })
}
