//! Subcommands as library functions. Each fills an `OutputSet` and returns a
//! summary; the binary only parses arguments and writes files.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::Serialize;

use crate::collective::{
    collective_rabi_population, pair_evolution, pair_oscillation_period, run_protocol,
    single_excitation_period, AtomPhotonState, PairState,
};
use crate::config::RunConfig;
use crate::fit::{local_maxima, period_from_crossings, sampled_crossings};
use crate::geometry::ProtocolModes;
use crate::measurement::{
    calibrate_background, g2_analytic, g2_monte_carlo, momentum_to_polarization, phase_sweep, Basis,
    DetectorModel, FieldKind, G2Estimate, MeasurementResult, PhotonFieldModel,
};
use crate::open_system::{free_spinwave_envelope, simulate_single_excitation, uniform_grid, SimulationFlags};
use crate::output::{Cell, OutputSet, Table};
use crate::repeater::{analytic_link, simulate_link, HeraldStats, SourceModel};
use crate::{Error, Result};

/// Derived seeds so that the stages of one run never share a stream family.
fn stage_seed(base: u64, stage: u64) -> u64 {
    base ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn time_grid_s(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_max > 0.0 && dt > 0.0) {
        return Err(Error::invalid("time grid needs positive t_max and dt"));
    }
    let n = (t_max / dt).round() as usize;
    Ok((0..=n).map(|i| i as f64 * dt).collect())
}

fn fitted_period(ts: &[f64], ys: &[f64]) -> Option<f64> {
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    if !(hi - lo > 1e-9) {
        return None;
    }
    // Peaks are evenly spaced even when the signal is not sinusoidal.
    let peaks: Vec<f64> = local_maxima(ts, ys).into_iter().map(|(t, _)| t).filter(|t| *t > ts[0]).collect();
    if peaks.len() >= 2 {
        return period_from_crossings(&peaks).ok().map(|p| p / 2.0);
    }
    period_from_crossings(&sampled_crossings(ts, ys, 0.5 * (lo + hi))).ok()
}

// ---- rabi ----------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RabiMode {
    Collective,
    Single,
    Pair,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RabiSummary {
    pub mode: RabiMode,
    /// rad/s
    pub omega: f64,
    pub analytic_period_ns: Option<f64>,
    pub fitted_period_ns: Option<f64>,
    pub first_maximum_ns: Option<f64>,
    /// Single-excitation period for the same Ω, for comparison.
    pub single_period_ns: Option<f64>,
    pub n_eff: Option<f64>,
}

pub fn cmd_rabi(cfg: &RunConfig, mode: RabiMode, out: &mut OutputSet) -> Result<RabiSummary> {
    let ts = time_grid_s(cfg.dynamics.t_max.value(), cfg.dynamics.dt.value())?;
    let t_ns: Vec<f64> = ts.iter().map(|t| t * 1e9).collect();
    let period_ns = |p: Result<f64>| p.ok().map(|p| p * 1e9);
    let (table, signal, summary) = match mode {
        RabiMode::Single | RabiMode::Collective => {
            let (omega, n) = match mode {
                RabiMode::Single => (cfg.raman_rabi()?, 1.0),
                _ => (cfg.excitation_rabi(), cfg.ensemble.n_eff),
            };
            let mut table = Table::new(vec!["t_ns", "p_rydberg", "p_single_atom"]);
            let mut signal = Vec::with_capacity(ts.len());
            for (t, tn) in ts.iter().zip(&t_ns) {
                let p = collective_rabi_population(n, omega, *t)?;
                let p1 = collective_rabi_population(1.0, omega, *t)?;
                signal.push(p);
                table.push(vec![(*tn).into(), p.into(), p1.into()])?;
            }
            let summary = RabiSummary {
                mode,
                omega,
                analytic_period_ns: period_ns(single_excitation_period(n.sqrt() * omega)),
                fitted_period_ns: None,
                first_maximum_ns: None,
                single_period_ns: period_ns(single_excitation_period(omega)),
                n_eff: (mode == RabiMode::Collective).then_some(n),
            };
            (table, signal, summary)
        }
        RabiMode::Pair => {
            let omega = cfg.raman_rabi()?;
            let modes = ProtocolModes::new(&cfg.beam_geometry()?)?;
            let mut table = Table::new(vec![
                "t_ns", "p_r2s1", "p_r3s4", "p_s1s4", "p_psi_minus", "c_parallel", "c_perpendicular",
            ]);
            let mut signal = Vec::with_capacity(ts.len());
            for (t, tn) in ts.iter().zip(&t_ns) {
                let pair = pair_evolution(omega, *t, &modes)?;
                let (par, perp) = pair_correlations(&pair, &modes)?;
                signal.push(par);
                table.push(vec![
                    (*tn).into(),
                    pair.population(PairState::R2S1).into(),
                    pair.population(PairState::R3S4).into(),
                    pair.population(PairState::S1S4).into(),
                    pair.psi_minus().norm_sqr().into(),
                    par.into(),
                    perp.into(),
                ])?;
            }
            let summary = RabiSummary {
                mode,
                omega,
                analytic_period_ns: period_ns(pair_oscillation_period(omega)),
                fitted_period_ns: None,
                first_maximum_ns: None,
                single_period_ns: period_ns(single_excitation_period(omega)),
                n_eff: None,
            };
            (table, signal, summary)
        }
    };
    let summary = RabiSummary {
        fitted_period_ns: fitted_period(&t_ns, &signal),
        first_maximum_ns: local_maxima(&t_ns, &signal)
            .into_iter()
            .find(|(t, _)| *t > 0.0)
            .map(|(t, _)| t),
        ..summary
    };
    let name = match mode {
        RabiMode::Single => "rabi_single",
        RabiMode::Collective => "rabi_collective",
        RabiMode::Pair => "rabi_pair",
    };
    out.csv(&format!("{name}.csv"), &table)?;
    out.json(&format!("{name}.json"), &summary)?;
    Ok(summary)
}

/// Normalized parallel and perpendicular coincidence fractions in the
/// +/- basis, conditioned on the branch that emits a first photon.
pub fn pair_correlations(pair: &PairState, modes: &ProtocolModes) -> Result<(f64, f64)> {
    let aps = AtomPhotonState::new(
        pair.amplitudes[PairState::R2S1],
        pair.amplitudes[PairState::R3S4],
        modes.k_up,
        modes.k_down,
    )?;
    let p = momentum_to_polarization(&aps, 0.0)?.outcome_probabilities(Basis::PlusMinus);
    let (par, perp) = (p[0] + p[1], p[2] + p[3]);
    Ok((par / (par + perp), perp / (par + perp)))
}

// ---- dephasing -----------------------------------------------------------

/// Parses "motion,inhomo,scatter", "all" or "none".
pub fn parse_flags(s: &str) -> Result<SimulationFlags> {
    let mut f = SimulationFlags::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "motion" => f.motion = true,
            "inhomo" | "inhomogeneity" => f.inhomogeneity = true,
            "scatter" | "scattering" => f.scattering = true,
            "all" => f = SimulationFlags::all(),
            "none" | "off" => {}
            other => {
                return Err(Error::invalid(format!(
                    "unknown flag `{other}` (expected motion, inhomo, scatter, all or none)"
                )))
            }
        }
    }
    Ok(f)
}

pub fn flags_label(f: SimulationFlags) -> String {
    let parts: Vec<&str> = [(f.motion, "motion"), (f.inhomogeneity, "inhomo"), (f.scattering, "scatter")]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join("+")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DephasingRun {
    pub flags: String,
    pub tau_osc_us: Option<f64>,
    pub tau_free_us: Option<f64>,
    pub ratio: Option<f64>,
    pub envelope_slope: Option<f64>,
    pub envelope_curvature: Option<f64>,
    pub fit_rms: Option<f64>,
    /// rad/s
    pub omega_eff: f64,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DephasingSummary {
    pub runs: Vec<DephasingRun>,
}

pub fn cmd_dephasing(cfg: &RunConfig, flag_sets: &[SimulationFlags], out: &mut OutputSet) -> Result<DephasingSummary> {
    if flag_sets.is_empty() {
        return Err(Error::invalid("at least one flag set is required"));
    }
    let seed = cfg.seed()?;
    let ens = cfg.ensemble();
    let scheme = cfg.raman_scheme();
    let grid = uniform_grid(cfg.raman.t_max.in_unit("us"), cfg.raman.dt.in_unit("us"))?;
    let free = free_spinwave_envelope(scheme.k_rydberg, ens.temperature_uk, ens.atomic_mass_amu, &grid)?;
    let mut runs = Vec::new();
    for (i, flags) in flag_sets.iter().enumerate() {
        let label = flags_label(*flags);
        let run_seed = stage_seed(seed, 0x100 + i as u64);
        let r = simulate_single_excitation(&ens, &scheme, *flags, cfg.raman.samples, Some(run_seed), &grid)?;
        let mut table = Table::new(vec!["t_us", "population_r", "spinwave_projection", "free_envelope"]);
        for k in 0..grid.len() {
            table.push(vec![
                grid[k].into(),
                r.population_r[k].into(),
                r.spinwave_projection[k].into(),
                free[k].into(),
            ])?;
        }
        out.csv(&format!("dephasing_{}.csv", label.replace('+', "_")), &table)?;
        runs.push(DephasingRun {
            ratio: r.tau_osc_us.zip(r.tau_free_us).map(|(a, b)| a / b),
            flags: label,
            tau_osc_us: r.tau_osc_us,
            tau_free_us: r.tau_free_us,
            envelope_slope: r.envelope_slope,
            envelope_curvature: r.envelope_curvature,
            fit_rms: r.fit_rms,
            omega_eff: r.omega_eff,
            n_samples: r.n_samples,
            seed: run_seed,
        });
    }
    let summary = DephasingSummary { runs };
    out.json("dephasing_summary.json", &summary)?;
    Ok(summary)
}

// ---- entangle ------------------------------------------------------------

/// Evenly spaced phases over [0, 2π], both ends included.
pub fn phi_grid(points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| 2.0 * PI * i as f64 / (n - 1) as f64).collect()
}

pub fn cmd_entangle_sweep(cfg: &RunConfig, out: &mut OutputSet) -> Result<Table> {
    let phis = phi_grid(cfg.detection.phi_points);
    let mut table = Table::new(vec![
        "basis", "phi_rad", "p_xx", "p_yy", "p_xy", "p_yx", "c_parallel", "c_perpendicular", "visibility",
    ]);
    for basis in Basis::ALL {
        for pt in phase_sweep(basis, &DetectorModel::ideal(), &phis)? {
            let p = pt.probabilities;
            table.push(vec![
                basis.label().into(),
                pt.phi.into(),
                p[0].into(),
                p[1].into(),
                p[2].into(),
                p[3].into(),
                pt.c_parallel.into(),
                pt.c_perpendicular.into(),
                pt.visibility.into(),
            ])?;
        }
    }
    out.csv("entangle_sweep.csv", &table)?;
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelitySummary {
    pub background: f64,
    pub delay_us: f64,
    pub expected_fidelity: f64,
    pub expected_visibilities: [f64; 3],
    pub fidelity: f64,
    pub fidelity_err: f64,
    pub v_hv: f64,
    pub v_pm: f64,
    pub v_circ: f64,
    pub v_hv_err: f64,
    pub v_pm_err: f64,
    pub v_circ_err: f64,
    pub state_fidelity_psi_minus: f64,
    pub success_probability: f64,
    pub coincidences_per_basis: u64,
    pub seed: u64,
}

/// Background probability per gate that reproduces the configured g²(0) of
/// the single-excitation read-out.
pub fn calibrated_background(cfg: &RunConfig) -> Result<f64> {
    calibrate_background(
        cfg.detection.target_g2,
        cfg.single_photon_presence(),
        cfg.detection.detector_efficiency,
    )
}

pub fn cmd_entangle_fidelity(cfg: &RunConfig, out: &mut OutputSet) -> Result<FidelitySummary> {
    let seed = stage_seed(cfg.seed()?, 0x200);
    let b = calibrated_background(cfg)?;
    let drive = cfg.protocol_drive()?;
    let outcome = run_protocol(&cfg.beam_geometry()?, &cfg.ensemble(), &drive, drive.entangling_duration()?)?;
    let model = cfg.end_to_end(b);
    let (f_exp, v_exp) = model.expected(&outcome.state)?;
    let sim: MeasurementResult = model.simulate(&outcome.state, cfg.detection.coincidences, Some(seed))?;
    let mut table = Table::new(vec!["basis", "n_xx", "n_yy", "n_xy", "n_yx", "trials", "visibility"]);
    for (basis, rec) in &sim.records {
        let v = match basis {
            Basis::HV => sim.v_hv,
            Basis::PlusMinus => sim.v_pm,
            Basis::Circular => sim.v_circ,
        };
        let mut row: Vec<Cell> = vec![basis.label().into()];
        row.extend(rec.counts.iter().map(|c| Cell::from(*c)));
        row.push(rec.trials.into());
        row.push(v.into());
        table.push(row)?;
    }
    out.csv("entangle_counts.csv", &table)?;
    let summary = FidelitySummary {
        background: b,
        delay_us: model.delay_us,
        expected_fidelity: f_exp,
        expected_visibilities: v_exp,
        fidelity: sim.fidelity,
        fidelity_err: sim.fidelity_err,
        v_hv: sim.v_hv,
        v_pm: sim.v_pm,
        v_circ: sim.v_circ,
        v_hv_err: sim.v_hv_err,
        v_pm_err: sim.v_pm_err,
        v_circ_err: sim.v_circ_err,
        state_fidelity_psi_minus: outcome.state.fidelity_psi_minus(),
        success_probability: outcome.success_probability,
        coincidences_per_basis: cfg.detection.coincidences,
        seed,
    };
    out.json("entangle_fidelity.json", &summary)?;
    Ok(summary)
}

// ---- g2 ------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldChoice {
    Single,
    Coherent,
    Thermal,
    Dlcz,
}

impl FromStr for FieldChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "coherent" => Ok(Self::Coherent),
            "thermal" => Ok(Self::Thermal),
            "dlcz" => Ok(Self::Dlcz),
            other => Err(Error::invalid(format!(
                "unknown field `{other}` (expected single, coherent, thermal or dlcz)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct G2Summary {
    pub field: FieldChoice,
    pub model: PhotonFieldModel,
    pub g2_analytic: f64,
    pub monte_carlo: G2Estimate,
    pub seed: u64,
}

/// The single-photon read-out uses the configured (or calibrated)
/// background; the reference fields use background-free detectors.
pub fn field_model(cfg: &RunConfig, field: FieldChoice) -> Result<PhotonFieldModel> {
    let eff = cfg.detection.detector_efficiency;
    let (field, background) = match field {
        FieldChoice::Single => (
            FieldKind::SinglePhoton {
                retrieval: cfg.single_photon_presence(),
            },
            match cfg.g2.background {
                Some(b) => b,
                None => calibrated_background(cfg)?,
            },
        ),
        FieldChoice::Coherent => (FieldKind::Coherent { mean: cfg.g2.coherent_mean }, 0.0),
        FieldChoice::Thermal => (FieldKind::Thermal { mean: cfg.g2.thermal_mean }, 0.0),
        FieldChoice::Dlcz => (FieldKind::DlczPair { p: cfg.g2.dlcz_p }, 0.0),
    };
    Ok(PhotonFieldModel {
        field,
        detector: DetectorModel::new(eff, background)?,
    })
}

pub fn cmd_g2(cfg: &RunConfig, field: FieldChoice, out: &mut OutputSet) -> Result<G2Summary> {
    let seed = stage_seed(cfg.seed()?, 0x300 + field as u64);
    let model = field_model(cfg, field)?;
    let summary = G2Summary {
        field,
        model,
        g2_analytic: g2_analytic(&model)?,
        monte_carlo: g2_monte_carlo(&model, cfg.g2.trials, Some(seed))?,
        seed,
    };
    let name = match field {
        FieldChoice::Single => "g2_single.json",
        FieldChoice::Coherent => "g2_coherent.json",
        FieldChoice::Thermal => "g2_thermal.json",
        FieldChoice::Dlcz => "g2_dlcz.json",
    };
    out.json(name, &summary)?;
    Ok(summary)
}

// ---- repeater ------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceChoice {
    Semi,
    Dlcz,
}

impl FromStr for SourceChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi" => Ok(Self::Semi),
            "dlcz" => Ok(Self::Dlcz),
            other => Err(Error::invalid(format!("unknown source `{other}` (expected semi or dlcz)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepChoice {
    Eta,
    P,
}

impl FromStr for SweepChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(Self::Eta),
            "p" => Ok(Self::P),
            other => Err(Error::invalid(format!("unknown sweep `{other}` (expected eta or p)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepeaterPoint {
    pub eta: f64,
    pub source: SourceModel,
    pub monte_carlo: HeraldStats,
    pub analytic: HeraldStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepeaterSummary {
    pub source: SourceChoice,
    pub sweep: Option<SweepChoice>,
    pub points: Vec<RepeaterPoint>,
}

pub fn cmd_repeater(
    cfg: &RunConfig,
    source: SourceChoice,
    sweep: Option<SweepChoice>,
    out: &mut OutputSet,
) -> Result<RepeaterSummary> {
    let base = cfg.seed()?;
    let rp = &cfg.repeater;
    let make = |p: f64| match source {
        SourceChoice::Semi => cfg.semi_source(),
        SourceChoice::Dlcz => cfg.dlcz_source(p),
    };
    let grid: Vec<(f64, SourceModel)> = match sweep {
        None => vec![(rp.eta, make(rp.dlcz_p))],
        Some(SweepChoice::Eta) => rp.eta_grid.iter().map(|&e| (e, make(rp.dlcz_p))).collect(),
        Some(SweepChoice::P) => {
            if source == SourceChoice::Semi {
                return Err(Error::invalid("a p sweep applies to the dlcz source only"));
            }
            rp.p_grid.iter().map(|&p| (rp.eta, make(p))).collect()
        }
    };
    let mut table = Table::new(vec![
        "eta",
        "p",
        "heralds",
        "herald_rate",
        "herald_rate_sigma",
        "spurious_fraction",
        "spurious_sigma",
        "conditional_fidelity",
        "fidelity_sigma",
        "analytic_herald_rate",
        "analytic_spurious_fraction",
        "analytic_fidelity",
    ]);
    let mut points = Vec::new();
    for (i, (eta, src)) in grid.into_iter().enumerate() {
        let link = cfg.link(eta);
        let seed = stage_seed(base, 0x400 + i as u64);
        let mc = simulate_link((&src, &src), &link, rp.trials, Some(seed))?;
        let an = analytic_link((&src, &src), &link)?;
        let p = match src {
            SourceModel::Dlcz { p } => p,
            SourceModel::SemiDeterministic { .. } => 0.0,
        };
        table.push(vec![
            eta.into(),
            p.into(),
            mc.heralds.unwrap_or(0).into(),
            mc.herald_rate.into(),
            mc.herald_sigma().into(),
            mc.spurious_fraction.into(),
            mc.spurious_sigma().into(),
            mc.conditional_fidelity.into(),
            mc.fidelity_sigma().into(),
            an.herald_rate.into(),
            an.spurious_fraction.into(),
            an.conditional_fidelity.into(),
        ])?;
        points.push(RepeaterPoint {
            eta,
            source: src,
            monte_carlo: mc,
            analytic: an,
        });
    }
    let stem = match source {
        SourceChoice::Semi => "repeater_semi",
        SourceChoice::Dlcz => "repeater_dlcz",
    };
    out.csv(&format!("{stem}.csv"), &table)?;
    let summary = RepeaterSummary { source, sweep, points };
    out.json(&format!("{stem}.json"), &summary)?;
    Ok(summary)
}
