//! Initial states: Bloch eigenstates, isotropic and Neel product states, the
//! ancilla-entangled protocol state, and energy/temperature characterization.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{HermitianOperator, RegisterLayout};
use crate::spectra::Spectrum;

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Direction on the Bloch sphere, `theta` in `[0, pi]`, `phi` in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochDirection {
    theta: f64,
    phi: f64,
}

impl BlochDirection {
    /// Construct, folding the angles into their canonical ranges.
    pub fn new(theta: f64, phi: f64) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut t = theta.rem_euclid(two_pi);
        let mut p = phi;
        if t > std::f64::consts::PI {
            // going past the south pole flips the azimuth
            t = two_pi - t;
            p += std::f64::consts::PI;
        }
        Self { theta: t, phi: p.rem_euclid(two_pi) }
    }

    /// Angles given in units of pi.
    pub fn from_fractions(theta_over_pi: f64, phi_over_pi: f64) -> Self {
        Self::new(theta_over_pi * std::f64::consts::PI, phi_over_pi * std::f64::consts::PI)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Cartesian unit vector (sin t cos p, sin t sin p, cos t).
    pub fn unit_vector(&self) -> [f64; 3] {
        [
            self.theta.sin() * self.phi.cos(),
            self.theta.sin() * self.phi.sin(),
            self.theta.cos(),
        ]
    }

    /// `+z` direction, the paper's `|Z+>` with phi fixed to 0.
    pub fn z_plus() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn x_plus() -> Self {
        Self::from_fractions(0.5, 0.0)
    }

    pub fn y_plus() -> Self {
        Self::from_fractions(0.5, 0.5)
    }
}

/// Eigenvalue branch of `n.sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

/// Eigenvector of `n.sigma` with eigenvalue +1 or -1.
///
/// `|t,p,+> = cos(t/2)|0> + e^{ip} sin(t/2)|1>`,
/// `|t,p,-> = -e^{-ip} sin(t/2)|0> + cos(t/2)|1>`; the two are the columns of
/// [`rotation_matrix`], which fixes the global phases.
pub fn bloch_eigenstate(d: BlochDirection, sign: Sign) -> [Complex64; 2] {
    let (half_t, p) = (0.5 * d.theta(), d.phi());
    let (c, s) = (half_t.cos(), half_t.sin());
    let phase = Complex64::new(0.0, p).exp();
    match sign {
        Sign::Plus => [Complex64::new(c, 0.0), phase * s],
        Sign::Minus => [-phase.conj() * s, Complex64::new(c, 0.0)],
    }
}

/// 2x2 unitary whose columns are the +/- eigenstates of `n.sigma`.
pub fn rotation_matrix(d: BlochDirection) -> Array2<Complex64> {
    let plus = bloch_eigenstate(d, Sign::Plus);
    let minus = bloch_eigenstate(d, Sign::Minus);
    ndarray::arr2(&[[plus[0], minus[0]], [plus[1], minus[1]]])
}

/// Controlled flip in the rotated basis:
/// `|+><+| (x) 1 + |-><-| (x) X~` with `X~ = R sx R^{-1}`.
///
/// 4x4 matrix with the control (ancilla) on the high bit and the target
/// (qubit 1) on the low bit. Unitary, Hermitian, involutive.
pub fn generalized_cnot(d: BlochDirection) -> Array2<Complex64> {
    let r = rotation_matrix(d);
    // X~ = R sx R^dag
    let sx = ndarray::arr2(&[[C_ZERO, C_ONE], [C_ONE, C_ZERO]]);
    let x_tilde = r.dot(&sx).dot(&r.mapv(|v| v.conj()).t().to_owned());
    let plus = bloch_eigenstate(d, Sign::Plus);
    let minus = bloch_eigenstate(d, Sign::Minus);
    let mut out = Array2::<Complex64>::zeros((4, 4));
    for a in 0..2 {
        for b in 0..2 {
            let p_plus = plus[a] * plus[b].conj();
            let p_minus = minus[a] * minus[b].conj();
            for i in 0..2 {
                for j in 0..2 {
                    let eye = if i == j { C_ONE } else { C_ZERO };
                    out[(a * 2 + i, b * 2 + j)] = p_plus * eye + p_minus * x_tilde[(i, j)];
                }
            }
        }
    }
    out
}

/// Normalized state vector over a register.
#[derive(Debug, Clone)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
    layout: RegisterLayout,
}

impl PureState {
    /// Wrap an amplitude vector, requiring unit norm within 1e-10.
    pub fn new(amplitudes: Vec<Complex64>, layout: RegisterLayout) -> Result<Self> {
        if amplitudes.len() != layout.dimension() {
            return Err(Error::DimensionMismatch {
                left: layout.dimension(),
                right: amplitudes.len(),
            });
        }
        let norm = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("state norm {norm} deviates from 1")));
        }
        Ok(Self { amplitudes, layout })
    }

    /// Wrap and normalize an amplitude vector.
    pub fn normalized(mut amplitudes: Vec<Complex64>, layout: RegisterLayout) -> Result<Self> {
        let norm = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::invalid("zero state vector"));
        }
        amplitudes.iter_mut().for_each(|c| *c /= norm);
        Self::new(amplitudes, layout)
    }

    /// Computational basis state `|000..0>`.
    pub fn ground(layout: RegisterLayout) -> Self {
        let mut amplitudes = vec![C_ZERO; layout.dimension()];
        amplitudes[0] = C_ONE;
        Self { amplitudes, layout }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Consume the state, yielding the raw amplitude vector.
    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn layout(&self) -> RegisterLayout {
        self.layout
    }

    pub fn dimension(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `<psi|H|psi>` where `H` may live on the system register while `psi`
    /// carries the ancilla; the operator is then extended by identity.
    pub fn energy(&self, h: &HermitianOperator) -> Result<f64> {
        if h.layout() == self.layout {
            return Ok(h.expectation(&self.amplitudes)?.re);
        }
        if self.layout.has_ancilla()
            && !h.layout().has_ancilla()
            && h.layout().n_system() == self.layout.n_system()
        {
            // ancilla is the highest bit: the two halves are the ancilla blocks
            let d = h.dimension();
            let e0 = h.expectation(&self.amplitudes[..d])?;
            let e1 = h.expectation(&self.amplitudes[d..])?;
            return Ok((e0 + e1).re);
        }
        Err(Error::DimensionMismatch { left: h.dimension(), right: self.dimension() })
    }
}

/// Product state with one single-qubit state per bit position (ancilla last
/// when present).
pub fn product_state(layout: RegisterLayout, factors: &[[Complex64; 2]]) -> Result<PureState> {
    let total = layout.total_qubits();
    if factors.len() != total {
        return Err(Error::DimensionMismatch { left: total, right: factors.len() });
    }
    let mut cur = vec![C_ONE];
    for factor in factors {
        let half = cur.len();
        let mut next = vec![C_ZERO; half * 2];
        for (r, &amp) in cur.iter().enumerate() {
            next[r] = amp * factor[0];
            next[r + half] = amp * factor[1];
        }
        cur = next;
    }
    PureState::new(cur, layout)
}

/// Initial-state family of the quench protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateFamily {
    /// Same Bloch direction, `+` branch, on every qubit.
    Isotropic,
    /// Alternating `+`/`-` branches: even-numbered qubits carry `-`.
    Neel,
}

/// Everything needed to prepare one protocol initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStateSpec {
    pub family: StateFamily,
    pub direction: BlochDirection,
    pub with_ancilla_ghz: bool,
}

impl InitialStateSpec {
    pub fn isotropic(direction: BlochDirection, with_ancilla_ghz: bool) -> Self {
        Self { family: StateFamily::Isotropic, direction, with_ancilla_ghz }
    }

    pub fn neel(direction: BlochDirection, with_ancilla_ghz: bool) -> Self {
        Self { family: StateFamily::Neel, direction, with_ancilla_ghz }
    }
}

/// Single-qubit factor for system qubit `i` (1-based) under the family rule.
fn family_sign(family: StateFamily, qubit: usize) -> Sign {
    match family {
        StateFamily::Isotropic => Sign::Plus,
        StateFamily::Neel => {
            if qubit % 2 == 0 {
                Sign::Minus
            } else {
                Sign::Plus
            }
        }
    }
}

fn check_family(spec: &InitialStateSpec, n_system: usize) -> Result<()> {
    if spec.family == StateFamily::Neel && n_system % 2 != 0 {
        return Err(Error::invalid(format!(
            "Neel family requires an even chain, got n={n_system}"
        )));
    }
    Ok(())
}

/// System-register states of the two GHZ branches: qubit 1 in `|+>` or `|->`,
/// the rest following the family pattern. The full protocol state is
/// `(|+>_A (x) branch_plus + |->_A (x) branch_minus)/sqrt(2)`.
pub fn branch_states(
    spec: &InitialStateSpec,
    system: RegisterLayout,
) -> Result<(PureState, PureState)> {
    if system.has_ancilla() {
        return Err(Error::invalid("branch states live on the system register"));
    }
    check_family(spec, system.n_system())?;
    let n = system.n_system();
    let mut factors_plus = Vec::with_capacity(n);
    let mut factors_minus = Vec::with_capacity(n);
    for qubit in 1..=n {
        let sign = family_sign(spec.family, qubit);
        factors_plus.push(bloch_eigenstate(spec.direction, if qubit == 1 { Sign::Plus } else { sign }));
        factors_minus.push(bloch_eigenstate(spec.direction, if qubit == 1 { Sign::Minus } else { sign }));
    }
    Ok((product_state(system, &factors_plus)?, product_state(system, &factors_minus)?))
}

/// Prepare the protocol initial state on the given register.
///
/// Without the ancilla this is the bare product state of the family; with it,
/// qubits `(A, 1)` carry the GHZ pair of the generalized CNOT construction.
pub fn scrambling_initial_state(
    spec: &InitialStateSpec,
    layout: RegisterLayout,
) -> Result<PureState> {
    if layout.has_ancilla() != spec.with_ancilla_ghz {
        return Err(Error::invalid(
            "layout ancilla flag disagrees with the state spec",
        ));
    }
    check_family(spec, layout.n_system())?;
    let n = layout.n_system();
    if !spec.with_ancilla_ghz {
        let factors: Vec<[Complex64; 2]> = (1..=n)
            .map(|q| bloch_eigenstate(spec.direction, family_sign(spec.family, q)))
            .collect();
        return product_state(layout, &factors);
    }
    let system = RegisterLayout::system(n)?;
    let (branch_plus, branch_minus) = branch_states(spec, system)?;
    let a_plus = bloch_eigenstate(spec.direction, Sign::Plus);
    let a_minus = bloch_eigenstate(spec.direction, Sign::Minus);
    let d = system.dimension();
    let mut amps = vec![C_ZERO; 2 * d];
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..2 {
        let block = &mut amps[a * d..(a + 1) * d];
        for r in 0..d {
            block[r] = inv_sqrt2
                * (a_plus[a] * branch_plus.amplitudes()[r]
                    + a_minus[a] * branch_minus.amplitudes()[r]);
        }
    }
    PureState::new(amps, layout)
}

/// The two GHZ branches of a protocol state, each living on the system
/// register; the ancilla never evolves, so the full `(N+1)`-qubit state is
/// `(|d,+>_A (x) plus + |d,->_A (x) minus)/sqrt(2)` at all times.
#[derive(Debug, Clone)]
pub struct BranchPair {
    pub plus: PureState,
    pub minus: PureState,
    /// GHZ basis direction shared with the ancilla.
    pub direction: BlochDirection,
    /// Shared time stamp of both branches.
    pub time: f64,
}

impl BranchPair {
    /// Branches of the protocol initial state at `t = 0`.
    pub fn initial(spec: &InitialStateSpec, system: RegisterLayout) -> Result<Self> {
        let (plus, minus) = branch_states(spec, system)?;
        Ok(Self { plus, minus, direction: spec.direction, time: 0.0 })
    }

    pub fn system_layout(&self) -> RegisterLayout {
        self.plus.layout()
    }

    /// Register the full protocol state lives on (system + ancilla).
    pub fn protocol_layout(&self) -> Result<RegisterLayout> {
        RegisterLayout::with_ancilla(self.plus.layout().n_system())
    }

    /// Assemble the full `(N+1)`-qubit state (validation path).
    pub fn reconstruct_full(&self) -> Result<PureState> {
        let layout = self.protocol_layout()?;
        let d = self.plus.dimension();
        let a_plus = bloch_eigenstate(self.direction, Sign::Plus);
        let a_minus = bloch_eigenstate(self.direction, Sign::Minus);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![C_ZERO; 2 * d];
        for a in 0..2 {
            for r in 0..d {
                amps[a * d + r] = inv_sqrt2
                    * (a_plus[a] * self.plus.amplitudes()[r]
                        + a_minus[a] * self.minus.amplitudes()[r]);
            }
        }
        PureState::new(amps, layout)
    }
}

/// A protocol state in either representation.
#[derive(Debug, Clone, Copy)]
pub enum ProtocolState<'a> {
    Full(&'a PureState),
    Branches(&'a BranchPair),
}

impl<'a> ProtocolState<'a> {
    /// Register of the full protocol state.
    pub fn register(&self) -> Result<RegisterLayout> {
        match self {
            ProtocolState::Full(psi) => Ok(psi.layout()),
            ProtocolState::Branches(bp) => bp.protocol_layout(),
        }
    }

    /// Norm of the full protocol state.
    pub fn norm(&self) -> f64 {
        match self {
            ProtocolState::Full(psi) => psi.norm(),
            ProtocolState::Branches(bp) => {
                let p = bp.plus.norm();
                let m = bp.minus.norm();
                (0.5 * (p * p + m * m)).sqrt()
            }
        }
    }

    /// `<psi|H|psi>` of the protocol state; branch representations average
    /// the two branch energies.
    pub fn energy(&self, h: &HermitianOperator) -> Result<f64> {
        match self {
            ProtocolState::Full(psi) => psi.energy(h),
            ProtocolState::Branches(bp) => {
                Ok(0.5 * (bp.plus.energy(h)? + bp.minus.energy(h)?))
            }
        }
    }
}

/// Normalized position of a state's mean energy inside the spectrum:
/// `(E - E_min) / (E_max - E_min)`.
pub fn energy_density(
    psi: &PureState,
    h: &HermitianOperator,
    extremes: (f64, f64),
) -> Result<f64> {
    let (e_min, e_max) = extremes;
    if e_min >= e_max {
        return Err(Error::invalid(format!(
            "spectrum extremes out of order: {e_min} >= {e_max}"
        )));
    }
    let e = psi.energy(h)?;
    Ok((e - e_min) / (e_max - e_min))
}

/// Mean thermal energy `sum E_k w_k / sum w_k` with overflow-safe weights.
pub fn thermal_energy(eigenvalues: &[f64], beta: f64) -> f64 {
    let e_ref = if beta > 0.0 {
        eigenvalues[0]
    } else {
        eigenvalues[eigenvalues.len() - 1]
    };
    let mut z = 0.0;
    let mut acc = 0.0;
    for &e in eigenvalues {
        let w = (-beta * (e - e_ref)).exp();
        z += w;
        acc += e * w;
    }
    acc / z
}

/// Solve `thermal_energy(beta) = e_star` for `beta` by bisection.
///
/// The map is strictly decreasing (its derivative is minus the energy
/// variance), so the root is unique. Absolute tolerance 1e-10 in energy;
/// bracket expanded geometrically from `[-1, 1]` and capped at `|beta| <= 500`.
pub fn inverse_temperature_for_energy(e_star: f64, spectrum: &Spectrum) -> Result<f64> {
    let evals = spectrum.eigenvalues();
    let (e_min, e_max) = (spectrum.e_min(), spectrum.e_max());
    if !(e_star > e_min) {
        return Err(Error::NoFiniteBeta { target: e_star, edge: "minimum", edge_value: e_min });
    }
    if !(e_star < e_max) {
        return Err(Error::NoFiniteBeta { target: e_star, edge: "maximum", edge_value: e_max });
    }
    const CAP: f64 = 500.0;
    const TOL: f64 = 1e-10;
    let f = |beta: f64| thermal_energy(evals, beta) - e_star;
    let mut lo = -1.0; // f(lo) should be >= 0 (high energy at negative beta)
    let mut hi = 1.0;
    while f(lo) < 0.0 {
        lo *= 2.0;
        if lo < -CAP {
            return Err(Error::NoFiniteBeta { target: e_star, edge: "maximum", edge_value: e_max });
        }
    }
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > CAP {
            return Err(Error::NoFiniteBeta { target: e_star, edge: "minimum", edge_value: e_min });
        }
    }
    let mut mid = 0.0;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= TOL {
            return Ok(mid);
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    let achieved = f(mid).abs();
    if achieved <= 1e-8 {
        // conditioning floor: energy resolution at this beta
        Ok(mid)
    } else {
        Err(Error::Convergence { residual: achieved, substeps: 200, tolerance: TOL })
    }
}

/// Inverse temperature matched to the state's mean energy.
pub fn inverse_temperature(
    psi: &PureState,
    h: &HermitianOperator,
    spectrum: &Spectrum,
) -> Result<f64> {
    inverse_temperature_for_energy(psi.energy(h)?, spectrum)
}
