//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Unitary evolution goes through an exact eigendecomposition of the
//! (time-independent) Hamiltonian. Open-system evolution is a fixed-step
//! fourth-order Runge-Kutta integration of the Lindblad equation whose step
//! is halved until two successive refinements agree; a superoperator
//! propagator is also provided for long traces of a fixed generator.
//!
//! Frequencies are angular (rad per time unit) and times are in the matching
//! unit; callers pick the unit (seconds for the protocol layer, microseconds
//! inside the Monte Carlo dephasing model).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-8;
const EXPECTATION_IMAG_TOL: f64 = 1e-10;
const LINDBLAD_CONVERGENCE_TOL: f64 = 1e-8;
const LINDBLAD_MAX_REFINEMENTS: u32 = 14;

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermitian_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

fn check_hermitian(m: &CMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Normalized ket.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: CVector,
}

impl StateVector {
    /// Normalizes `amps`; fails on an empty, non-finite or zero vector.
    pub fn new(amps: CVector) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidState("empty state vector".into()));
        }
        let norm = amps.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidState(format!("cannot normalize, norm = {norm}")));
        }
        Ok(Self { amps: amps / C64::from(norm) })
    }

    pub fn from_slice(amps: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amps))
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid(format!("basis index {index} out of range for dim {dim}")));
        }
        let mut amps = CVector::zeros(dim);
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub(crate) fn from_normalized(amps: CVector) -> Self {
        debug_assert!((amps.norm() - 1.0).abs() < 1e-9);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// |<self|other>|^2, the phase-insensitive comparison used throughout.
    pub fn overlap(&self, other: &StateVector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.amps.dotc(&other.amps).norm_sqr())
    }

    pub fn population(&self, index: usize) -> f64 {
        self.amps[index].norm_sqr()
    }
}

/// Density matrix with unit trace, Hermitian, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let rho = Self { entries };
        rho.validate()?;
        Ok(rho)
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let a = psi.amplitudes();
        Self {
            entries: a * a.adjoint(),
        }
    }

    /// Checks every density-matrix invariant.
    pub fn validate(&self) -> Result<()> {
        let m = &self.entries;
        check_hermitian(m)?;
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace = {tr}")));
        }
        let herm = (m + m.adjoint()) * C64::from(0.5);
        let min_eig = herm
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn population(&self, index: usize) -> f64 {
        self.entries[(index, index)].re
    }

    pub fn coherence(&self, row: usize, col: usize) -> C64 {
        self.entries[(row, col)]
    }
}

/// Hamiltonian or observable.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    entries: CMatrix,
}

impl HermitianOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        check_hermitian(&entries)?;
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: CMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: CMatrix::identity(dim, dim),
        }
    }

    /// |i><i|
    pub fn projector(dim: usize, index: usize) -> Self {
        let mut entries = CMatrix::zeros(dim, dim);
        entries[(index, index)] = C64::new(1.0, 0.0);
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// Diagonalizes once so the propagator can be evaluated at any time.
    pub fn spectrum(&self) -> Spectrum {
        let eig = self.entries.clone().symmetric_eigen();
        Spectrum {
            energies: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }
}

/// Jump operator with the rate folded into its entries.
#[derive(Clone, Debug, PartialEq)]
pub struct CollapseOperator {
    entries: CMatrix,
}

impl CollapseOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("collapse operator has non-finite entries"));
        }
        Ok(Self { entries })
    }

    /// sqrt(rate) |to><from|
    pub fn transition(dim: usize, from: usize, to: usize, rate: f64) -> Result<Self> {
        if from >= dim || to >= dim || rate < 0.0 {
            return Err(Error::invalid("bad transition operator"));
        }
        let mut entries = CMatrix::zeros(dim, dim);
        entries[(to, from)] = C64::from(rate.sqrt());
        Self::new(entries)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }
}

/// Eigendecomposition of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Spectrum {
    energies: Vec<f64>,
    vectors: CMatrix,
}

impl Spectrum {
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Eigenvectors as columns, ordered like `energies`.
    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    /// exp(-i H t)
    pub fn propagator(&self, t: f64) -> CMatrix {
        let phases = CVector::from_iterator(
            self.energies.len(),
            self.energies.iter().map(|&e| (-I * e * t).exp()),
        );
        let mut scaled = self.vectors.clone();
        for (mut col, ph) in scaled.column_iter_mut().zip(phases.iter()) {
            col *= *ph;
        }
        scaled * self.vectors.adjoint()
    }

    pub fn evolve(&self, psi: &StateVector, t: f64) -> StateVector {
        // Renormalize to keep the unit-norm invariant tight over long traces.
        let out = self.propagator(t) * psi.amplitudes();
        let n = out.norm();
        StateVector::from_normalized(out / C64::from(n))
    }
}

/// psi(t) = exp(-i H t) psi.
pub fn evolve_unitary(h: &HermitianOperator, psi: &StateVector, t: f64) -> Result<StateVector> {
    check_dims(h.dim(), psi.dim())?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("evolution time must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(psi.clone());
    }
    Ok(h.spectrum().evolve(psi, t))
}

/// Re tr(A rho).
pub fn expectation(a: &HermitianOperator, rho: &DensityMatrix) -> Result<f64> {
    check_dims(a.dim(), rho.dim())?;
    let value = (a.entries() * rho.entries()).trace();
    if value.im.abs() > EXPECTATION_IMAG_TOL * value.re.abs().max(1.0) {
        return Err(Error::InvalidState(format!(
            "expectation value has imaginary part {:e}",
            value.im
        )));
    }
    Ok(value.re)
}

/// Right-hand side of the Lindblad equation, with the anticommutator term
/// pre-summed.
struct LindbladGenerator {
    h: CMatrix,
    jumps: Vec<CMatrix>,
    jumps_adj: Vec<CMatrix>,
    decay: CMatrix,
}

impl LindbladGenerator {
    fn new(h: &HermitianOperator, ops: &[CollapseOperator]) -> Self {
        let dim = h.dim();
        let mut decay = CMatrix::zeros(dim, dim);
        for op in ops {
            decay += op.entries().adjoint() * op.entries();
        }
        Self {
            h: h.entries().clone(),
            jumps: ops.iter().map(|o| o.entries().clone()).collect(),
            jumps_adj: ops.iter().map(|o| o.entries().adjoint()).collect(),
            decay: decay * C64::from(0.5),
        }
    }

    fn rate_bound(&self) -> f64 {
        let norm = |m: &CMatrix| m.iter().map(|z| z.norm()).sum::<f64>();
        2.0 * norm(&self.h) + 4.0 * norm(&self.decay)
    }

    fn apply(&self, rho: &CMatrix) -> CMatrix {
        let h_rho = &self.h * rho;
        let mut out = (&h_rho - h_rho.adjoint()) * (-I);
        let d_rho = &self.decay * rho;
        out -= &d_rho + d_rho.adjoint();
        for (l, l_adj) in self.jumps.iter().zip(&self.jumps_adj) {
            out += l * rho * l_adj;
        }
        out
    }

    fn rk4_step(&self, rho: &CMatrix, dt: f64) -> CMatrix {
        let half = C64::from(0.5 * dt);
        let full = C64::from(dt);
        let k1 = self.apply(rho);
        let k2 = self.apply(&(rho + &k1 * half));
        let k3 = self.apply(&(rho + &k2 * half));
        let k4 = self.apply(&(rho + &k3 * full));
        rho + (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(dt / 6.0)
    }

    fn integrate(&self, rho0: &CMatrix, t_grid: &[f64], steps_per_unit: f64) -> Vec<CMatrix> {
        let mut out = Vec::with_capacity(t_grid.len());
        let mut rho = rho0.clone();
        let mut t_prev = 0.0;
        for &t in t_grid {
            let span = t - t_prev;
            if span > 0.0 {
                let n = (span * steps_per_unit).ceil().max(1.0) as usize;
                let dt = span / n as f64;
                for _ in 0..n {
                    rho = self.rk4_step(&rho, dt);
                }
            }
            out.push(rho.clone());
            t_prev = t;
        }
        out
    }
}

/// Integrates the Lindblad master equation and reports rho at every grid time.
///
/// The grid must start at 0 and be strictly increasing. The step is halved
/// until the two finest passes agree entry-wise within 1e-8; if that does not
/// happen within the refinement budget a `NonConvergence` error is returned.
pub fn lindblad_evolve(
    rho0: &DensityMatrix,
    h: &HermitianOperator,
    ops: &[CollapseOperator],
    t_grid: &[f64],
) -> Result<Vec<DensityMatrix>> {
    let dim = rho0.dim();
    check_dims(dim, h.dim())?;
    for op in ops {
        check_dims(dim, op.dim())?;
    }
    if t_grid.first().copied() != Some(0.0) {
        return Err(Error::invalid("time grid must start at 0"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("time grid must be strictly increasing and finite"));
    }

    let gen = LindbladGenerator::new(h, ops);
    // Start with |L| dt ~ 0.05 and refine from there.
    let mut steps_per_unit = (gen.rate_bound() / 0.05).max(1.0 / t_grid.last().unwrap().max(1e-300));
    let mut coarse = gen.integrate(rho0.entries(), t_grid, steps_per_unit);
    for _ in 0..LINDBLAD_MAX_REFINEMENTS {
        steps_per_unit *= 2.0;
        let fine = gen.integrate(rho0.entries(), t_grid, steps_per_unit);
        let change = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| max_abs(&(a - b)))
            .fold(0.0, f64::max);
        if change <= LINDBLAD_CONVERGENCE_TOL {
            return fine
                .into_iter()
                .map(|m| {
                    // Symmetrize away round-off before the invariant check.
                    let m = (&m + m.adjoint()) * C64::from(0.5);
                    DensityMatrix::new(m)
                })
                .collect();
        }
        coarse = fine;
    }
    Err(Error::NonConvergence(format!(
        "Lindblad integration did not converge after {LINDBLAD_MAX_REFINEMENTS} step halvings"
    )))
}

/// Lindblad generator as a d^2 x d^2 matrix acting on column-stacked rho.
///
/// For a fixed generator the exact propagator exp(L dt) can be formed once
/// and applied repeatedly, which is what long Monte Carlo traces need.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    dim: usize,
    matrix: CMatrix,
}

impl Liouvillian {
    pub fn new(h: &HermitianOperator, ops: &[CollapseOperator]) -> Result<Self> {
        let d = h.dim();
        for op in ops {
            check_dims(d, op.dim())?;
        }
        let id = CMatrix::identity(d, d);
        let hm = h.entries();
        // vec(A X B) = (B^T kron A) vec(X)
        let mut matrix = (id.kronecker(hm) - hm.transpose().kronecker(&id)) * (-I);
        for op in ops {
            let l = op.entries();
            let ldl = l.adjoint() * l;
            matrix += l.conjugate().kronecker(l);
            matrix -= (id.kronecker(&ldl) + ldl.transpose().kronecker(&id)) * C64::from(0.5);
        }
        Ok(Self { dim: d, matrix })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// exp(L dt)
    pub fn propagator(&self, dt: f64) -> CMatrix {
        (&self.matrix * C64::from(dt)).exp()
    }
}

pub(crate) fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

#[cfg(test)]
pub(crate) fn unvectorize(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn sigma_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
    }

    fn sigma_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
    }

    fn plus() -> StateVector {
        StateVector::from_slice(&[c(1.0), c(1.0)]).unwrap()
    }

    #[test]
    fn half_rabi_cycle_flips_two_level_atom() {
        let omega = 2.0 * PI * 1.3e6;
        let h = HermitianOperator::new(sigma_x() * c(omega / 2.0)).unwrap();
        let psi = StateVector::basis(2, 0).unwrap();
        let out = evolve_unitary(&h, &psi, PI / omega).unwrap();
        assert!((out.population(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_time_is_identity() {
        let h = HermitianOperator::new(sigma_x()).unwrap();
        let psi = plus();
        assert_eq!(evolve_unitary(&h, &psi, 0.0).unwrap(), psi);
    }

    #[test]
    fn lambda_system_matches_closed_form() {
        // Two bright kets |0>,|2> coupled with Omega/2 to the shared ket |1>.
        // Analytic diagonalization: bright combination couples with sqrt(2) Omega / 2.
        let omega = 3.0;
        let mut m = CMatrix::zeros(3, 3);
        for &b in &[0usize, 2] {
            m[(b, 1)] = c(omega / 2.0);
            m[(1, b)] = c(omega / 2.0);
        }
        let h = HermitianOperator::new(m).unwrap();
        let psi = StateVector::basis(3, 0).unwrap();
        let spec = h.spectrum();
        for k in 0..50 {
            let t = 0.05 * k as f64;
            let p = spec.evolve(&psi, t).population(1);
            let expected = 0.5 * (2f64.sqrt() * omega * t / 2.0).sin().powi(2);
            assert!((p - expected).abs() < 1e-12, "t={t}: {p} vs {expected}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = HermitianOperator::new(sigma_x()).unwrap();
        let psi3 = StateVector::basis(3, 0).unwrap();
        assert!(matches!(
            evolve_unitary(&h, &psi3, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut bad = sigma_x();
        bad[(0, 1)] = c(2.0);
        assert!(matches!(HermitianOperator::new(bad), Err(Error::NotHermitian(_))));
        assert!(evolve_unitary(&h, &plus(), -1.0).is_err());
    }

    #[test]
    fn propagator_matches_matrix_exponential() {
        let m = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.3),
                C64::new(0.2, -0.7),
                c(0.0),
                C64::new(0.2, 0.7),
                c(-1.1),
                C64::new(0.0, 0.4),
                c(0.0),
                C64::new(0.0, -0.4),
                c(0.8),
            ],
        );
        let h = HermitianOperator::new(m.clone()).unwrap();
        let t = 2.7;
        let exact = (m * (-I * t)).exp();
        let ours = h.spectrum().propagator(t);
        let err = max_abs(&(&exact - &ours)) / max_abs(&exact);
        assert!(err < 1e-9, "relative error {err:e}");
    }

    #[test]
    fn expectation_values() {
        let plus_rho = DensityMatrix::from_pure(&plus());
        let excited = DensityMatrix::from_pure(&StateVector::basis(2, 1).unwrap());
        let id = HermitianOperator::identity(2);
        let proj_e = HermitianOperator::projector(2, 1);
        let sx = HermitianOperator::new(sigma_x()).unwrap();
        assert!((expectation(&id, &plus_rho).unwrap() - 1.0).abs() < 1e-14);
        assert!((expectation(&proj_e, &excited).unwrap() - 1.0).abs() < 1e-14);
        assert!((expectation(&sx, &plus_rho).unwrap() - 1.0).abs() < 1e-14);
        let id3 = HermitianOperator::identity(3);
        assert!(expectation(&id3, &plus_rho).is_err());
    }

    #[test]
    fn spontaneous_decay_is_exponential() {
        let gamma = 1.7;
        let rho0 = DensityMatrix::from_pure(&StateVector::basis(2, 1).unwrap());
        let h = HermitianOperator::zeros(2);
        let ops = [CollapseOperator::transition(2, 1, 0, gamma).unwrap()];
        let grid: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
        let out = lindblad_evolve(&rho0, &h, &ops, &grid).unwrap();
        for (t, rho) in grid.iter().zip(&out) {
            assert!((rho.population(1) - (-gamma * t).exp()).abs() < 1e-8);
            assert!((rho.trace().re - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn pure_dephasing_decays_coherence() {
        let gamma: f64 = 0.9;
        let rho0 = DensityMatrix::from_pure(&plus());
        let h = HermitianOperator::zeros(2);
        let ops = [CollapseOperator::new(sigma_z() * c((gamma / 2.0).sqrt())).unwrap()];
        let grid: Vec<f64> = (0..=10).map(|k| 0.3 * k as f64).collect();
        let out = lindblad_evolve(&rho0, &h, &ops, &grid).unwrap();
        for (t, rho) in grid.iter().zip(&out) {
            let expected = 0.5 * (-gamma * t).exp();
            assert!((rho.coherence(0, 1).re - expected).abs() < 1e-8);
        }
    }

    /// Independent brute-force integrator: explicit midpoint with a very
    /// small step, used as the oracle for the driven-dissipative case.
    fn midpoint_oracle(rho0: &CMatrix, h: &CMatrix, l: &CMatrix, t: f64, n: usize) -> CMatrix {
        let f = |rho: &CMatrix| -> CMatrix {
            let comm = h * rho - rho * h;
            let ldl = l.adjoint() * l;
            comm * (-I) + l * rho * l.adjoint() - (&ldl * rho + rho * &ldl) * c(0.5)
        };
        let dt = t / n as f64;
        let mut rho = rho0.clone();
        for _ in 0..n {
            let mid = &rho + f(&rho) * c(0.5 * dt);
            rho += f(&mid) * c(dt);
        }
        rho
    }

    #[test]
    fn driven_dissipative_atom_matches_fine_step_oracle() {
        let (omega, gamma) = (2.0, 1.0);
        let h = sigma_x() * c(omega / 2.0);
        let l = CollapseOperator::transition(2, 1, 0, gamma).unwrap();
        let rho0 = DensityMatrix::from_pure(&StateVector::basis(2, 0).unwrap());
        let grid: Vec<f64> = (0..=8).map(|k| 1.0 * k as f64).collect();
        let out = lindblad_evolve(
            &rho0,
            &HermitianOperator::new(h.clone()).unwrap(),
            std::slice::from_ref(&l),
            &grid,
        )
        .unwrap();
        let oracle = midpoint_oracle(rho0.entries(), &h, l.entries(), 8.0, 400_000);
        let diff = max_abs(&(out.last().unwrap().entries() - &oracle));
        assert!(diff < 1e-8, "diff {diff:e}");
        // Long-time limit approaches the textbook steady state.
        let s = omega * omega / (gamma * gamma);
        let p_ss = 0.5 * 2.0 * s / (1.0 + 2.0 * s);
        assert!((out.last().unwrap().population(1) - p_ss).abs() < 2e-3);
    }

    #[test]
    fn lindblad_rejects_bad_grid() {
        let rho0 = DensityMatrix::from_pure(&plus());
        let h = HermitianOperator::zeros(2);
        assert!(lindblad_evolve(&rho0, &h, &[], &[0.1, 0.2]).is_err());
        assert!(lindblad_evolve(&rho0, &h, &[], &[0.0, 0.2, 0.2]).is_err());
    }

    #[test]
    fn liouvillian_propagator_agrees_with_rk4() {
        let h = HermitianOperator::new(sigma_x() * c(1.3)).unwrap();
        let ops = [CollapseOperator::transition(2, 1, 0, 0.4).unwrap()];
        let rho0 = DensityMatrix::from_pure(&StateVector::basis(2, 0).unwrap());
        let grid = [0.0, 1.5];
        let rk = lindblad_evolve(&rho0, &h, &ops, &grid).unwrap();
        let prop = Liouvillian::new(&h, &ops).unwrap().propagator(1.5);
        let out = unvectorize(&(prop * vectorize(rho0.entries())), 2);
        assert!(max_abs(&(out - rk[1].entries())) < 1e-8);
    }

    fn random_hermitian(dim: usize, vals: &[f64]) -> CMatrix {
        let mut m = CMatrix::zeros(dim, dim);
        let mut k = 0;
        for i in 0..dim {
            m[(i, i)] = c(vals[k % vals.len()]);
            k += 1;
            for j in (i + 1)..dim {
                let z = C64::new(vals[k % vals.len()], vals[(k + 1) % vals.len()]);
                k += 2;
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn unitary_evolution_preserves_norm(
            dim in 2usize..=16,
            vals in proptest::collection::vec(-1.0f64..1.0, 16..64),
            t in 0.0f64..1.0,
        ) {
            let m = random_hermitian(dim, &vals);
            let h = HermitianOperator::new(m).unwrap();
            let spec = h.spectrum();
            let scale = spec.energies().iter().fold(0.0f64, |a, e| a.max(e.abs())).max(1e-3);
            // Up to ten periods of the fastest frequency.
            let t = t * 10.0 * 2.0 * PI / scale;
            let psi = StateVector::basis(dim, 0).unwrap();
            let raw = spec.propagator(t) * psi.amplitudes();
            prop_assert!((raw.norm() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn evolution_composes(
            dim in 2usize..=8,
            vals in proptest::collection::vec(-1.0f64..1.0, 16..32),
            t1 in 0.0f64..3.0,
            t2 in 0.0f64..3.0,
        ) {
            let h = HermitianOperator::new(random_hermitian(dim, &vals)).unwrap();
            let psi = StateVector::basis(dim, 0).unwrap();
            let direct = evolve_unitary(&h, &psi, t1 + t2).unwrap();
            let stepped = evolve_unitary(&h, &evolve_unitary(&h, &psi, t1).unwrap(), t2).unwrap();
            let diff = (direct.amplitudes() - stepped.amplitudes()).camax();
            prop_assert!(diff < 1e-9);
        }

        #[test]
        fn lindblad_outputs_stay_physical(
            vals in proptest::collection::vec(-1.0f64..1.0, 9..20),
            gamma in 0.0f64..2.0,
        ) {
            let h = HermitianOperator::new(random_hermitian(3, &vals)).unwrap();
            let ops = [
                CollapseOperator::transition(3, 2, 0, gamma).unwrap(),
                CollapseOperator::transition(3, 1, 2, 0.5 * gamma).unwrap(),
            ];
            let rho0 = DensityMatrix::from_pure(&StateVector::basis(3, 1).unwrap());
            let grid = [0.0, 0.5, 1.0, 2.0];
            let out = lindblad_evolve(&rho0, &h, &ops, &grid).unwrap();
            for rho in &out {
                prop_assert!(rho.validate().is_ok());
                prop_assert!((rho.trace().re - 1.0).abs() < 1e-8);
            }
        }
    }
}
