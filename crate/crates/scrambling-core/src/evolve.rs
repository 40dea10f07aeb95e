//! Unitary time evolution: Lanczos-Krylov propagation for sparse Hamiltonians,
//! an exact spectral propagator for validation, and the trajectory driver that
//! feeds observers along a time grid.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::HermitianOperator;
use crate::linalg;
use crate::observables::QuenchTrajectory;
use crate::spectra::Spectrum;
use crate::state::{BranchPair, ProtocolState, PureState};

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Substep control for the Krylov propagator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubstepMode {
    /// Halve on failure, grow cautiously on easy steps.
    Adaptive,
    /// Fixed substep length, no error control.
    Fixed(f64),
}

/// Lanczos propagator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    /// Krylov subspace dimension (>= 2).
    pub krylov_dimension: usize,
    /// Local error tolerance per substep, per unit norm.
    pub tolerance: f64,
    pub mode: SubstepMode,
    /// Hard floor on the substep length before giving up.
    pub min_substep: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            krylov_dimension: 30,
            tolerance: 1e-10,
            mode: SubstepMode::Adaptive,
            min_substep: 1e-8,
        }
    }
}

impl PropagatorConfig {
    fn validate(&self) -> Result<()> {
        if self.krylov_dimension < 2 {
            return Err(Error::invalid("krylov_dimension must be at least 2"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        Ok(())
    }
}

/// Reusable Lanczos workspace bound to one Hamiltonian.
pub struct KrylovPropagator<'a> {
    h: &'a HermitianOperator,
    cfg: PropagatorConfig,
    basis: Vec<Vec<Complex64>>,
    scratch: Vec<Complex64>,
    /// substep carried between calls so trajectories keep their step size
    step_hint: f64,
}

struct StepResult {
    /// amplitude that reached the last Krylov vector; 0 on happy breakdown
    error_estimate: f64,
}

impl<'a> KrylovPropagator<'a> {
    pub fn new(h: &'a HermitianOperator, cfg: PropagatorConfig) -> Result<Self> {
        cfg.validate()?;
        let dim = h.dimension();
        Ok(Self {
            h,
            cfg,
            basis: vec![vec![C_ZERO; dim]; cfg.krylov_dimension + 1],
            scratch: vec![C_ZERO; dim],
            step_hint: f64::INFINITY,
        })
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.cfg
    }

    /// One Lanczos approximation of `exp(-i tau H) psi`, written back into
    /// `psi` only by the caller on acceptance; returns the Krylov coefficient
    /// vector and diagnostics.
    fn lanczos_coefficients(
        &mut self,
        psi: &[Complex64],
        tau: f64,
    ) -> Result<(Vec<Complex64>, f64, StepResult)> {
        let m = self.cfg.krylov_dimension;
        let dim = psi.len();
        let beta0 = norm(psi);
        if beta0 == 0.0 {
            return Err(Error::invalid("cannot propagate the zero vector"));
        }
        for (dst, src) in self.basis[0].iter_mut().zip(psi.iter()) {
            *dst = src / beta0;
        }
        let mut alphas = Vec::with_capacity(m);
        let mut betas = Vec::with_capacity(m);
        let mut order = m;
        let mut breakdown = false;
        for j in 0..m {
            let (head, tail) = self.basis.split_at_mut(j + 1);
            let vj = &head[j];
            let w = &mut self.scratch;
            self.h.apply_into(vj, w)?;
            let alpha = dot(vj, w).re;
            for i in 0..dim {
                w[i] -= alpha * vj[i];
            }
            if j > 0 {
                let beta_prev = betas[j - 1];
                let vprev = &head[j - 1];
                for i in 0..dim {
                    w[i] -= beta_prev * vprev[i];
                }
            }
            // full re-orthogonalization against the spanned basis
            for vi in head.iter() {
                let overlap = dot(vi, w);
                if overlap != C_ZERO {
                    for i in 0..dim {
                        w[i] -= overlap * vi[i];
                    }
                }
            }
            alphas.push(alpha);
            let beta = norm(w);
            let scale = alphas.iter().fold(beta0, |mx, a| mx.max(a.abs()));
            if beta <= 1e-13 * scale.max(1.0) {
                order = j + 1;
                breakdown = true;
                break;
            }
            betas.push(beta);
            let vnext = &mut tail[0];
            for i in 0..dim {
                vnext[i] = w[i] / beta;
            }
        }
        // exp(-i tau T) e1 in the Krylov basis
        let (theta, z) = linalg::sym_tridiag_eig(&alphas[..order], &betas[..order.saturating_sub(1)])?;
        let mut u = vec![C_ZERO; order];
        for k in 0..order {
            let phase = Complex64::new(0.0, -tau * theta[k]).exp();
            let w0 = z[(0, k)];
            for j in 0..order {
                u[j] += z[(j, k)] * phase * w0;
            }
        }
        // exp(-i tau T) e1 has unit norm exactly; enforce it and treat any
        // sizable drift as a failed step
        let unorm = u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let unitarity_defect = (unorm - 1.0).abs();
        if unorm > 0.0 {
            for c in u.iter_mut() {
                *c /= unorm;
            }
        }
        // Ritz-range capacity backstop: a subspace of dimension m cannot
        // resolve exp over an interval much wider than ~m oscillations
        let spread = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - theta.iter().cloned().fold(f64::INFINITY, f64::min);
        let over_capacity = tau.abs() * spread > 2.5 * order as f64;
        let mut error_estimate = if breakdown { 0.0 } else { u[order - 1].norm() };
        if unitarity_defect > 1e-8 || (over_capacity && !breakdown) {
            error_estimate = error_estimate.max(1.0);
        }
        Ok((u, beta0, StepResult { error_estimate }))
    }

    /// Advance `psi` in place by `exp(-i dt H)`.
    pub fn advance(&mut self, psi: &mut [Complex64], dt: f64) -> Result<()> {
        if dt == 0.0 {
            return Ok(());
        }
        if !dt.is_finite() {
            return Err(Error::invalid("non-finite time step"));
        }
        let direction = dt.signum();
        let mut remaining = dt.abs();
        let mut step = match self.cfg.mode {
            SubstepMode::Fixed(h) => h.abs().max(self.cfg.min_substep),
            SubstepMode::Adaptive => self.step_hint.min(remaining),
        };
        let mut substeps = 0usize;
        while remaining > 0.0 {
            step = step.min(remaining);
            let tau = direction * step;
            let (u, beta0, diag) = self.lanczos_coefficients(psi, tau)?;
            let accept = match self.cfg.mode {
                SubstepMode::Fixed(_) => true,
                SubstepMode::Adaptive => diag.error_estimate <= self.cfg.tolerance,
            };
            if accept {
                // psi <- beta0 * V u
                for x in psi.iter_mut() {
                    *x = C_ZERO;
                }
                for (j, uj) in u.iter().enumerate() {
                    let coeff = beta0 * uj;
                    let vj = &self.basis[j];
                    for i in 0..psi.len() {
                        psi[i] += coeff * vj[i];
                    }
                }
                remaining -= step;
                if matches!(self.cfg.mode, SubstepMode::Adaptive) {
                    self.step_hint = if diag.error_estimate < 1e-2 * self.cfg.tolerance {
                        step * 2.0
                    } else {
                        step
                    };
                    step = self.step_hint;
                }
            } else {
                step *= 0.5;
                if step < self.cfg.min_substep {
                    return Err(Error::Convergence {
                        residual: diag.error_estimate,
                        substeps,
                        tolerance: self.cfg.tolerance,
                    });
                }
            }
            substeps += 1;
            if substeps > 4_000_000 {
                return Err(Error::Convergence {
                    residual: diag.error_estimate,
                    substeps,
                    tolerance: self.cfg.tolerance,
                });
            }
        }
        Ok(())
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `exp(-i t H) |psi>` by Lanczos-Krylov propagation.
pub fn krylov_evolve(
    h: &HermitianOperator,
    psi: &PureState,
    t: f64,
    cfg: &PropagatorConfig,
) -> Result<PureState> {
    if h.dimension() != psi.dimension() {
        return Err(Error::DimensionMismatch { left: h.dimension(), right: psi.dimension() });
    }
    if !t.is_finite() {
        return Err(Error::invalid("evolution time must be finite"));
    }
    let mut amps = psi.amplitudes().to_vec();
    let mut prop = KrylovPropagator::new(h, *cfg)?;
    prop.advance(&mut amps, t)?;
    PureState::new(amps, psi.layout())
}

/// Exact `exp(-i t H) |psi>` through the eigenbasis; the validation oracle
/// for the Krylov path.
pub fn spectral_evolve(s: &Spectrum, psi: &PureState, t: f64) -> Result<PureState> {
    let vecs = s
        .eigenvectors()
        .ok_or_else(|| Error::invalid("spectral evolution needs eigenvectors"))?;
    if s.dimension() != psi.dimension() {
        return Err(Error::DimensionMismatch { left: s.dimension(), right: psi.dimension() });
    }
    let d = s.dimension();
    // c = V^dag psi
    let mut c = vec![C_ZERO; d];
    for k in 0..d {
        let col = vecs.column(k);
        let mut acc = C_ZERO;
        for i in 0..d {
            acc += col[i].conj() * psi.amplitudes()[i];
        }
        c[k] = acc * Complex64::new(0.0, -t * s.eigenvalues()[k]).exp();
    }
    let mut out = vec![C_ZERO; d];
    for k in 0..d {
        let ck = c[k];
        if ck == C_ZERO {
            continue;
        }
        let col = vecs.column(k);
        for i in 0..d {
            out[i] += col[i] * ck;
        }
    }
    PureState::new(out, psi.layout())
}

/// Strictly increasing observation times starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points[0] != 0.0 {
            return Err(Error::invalid("time grid must start at 0"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("time grid must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// `0, dt, 2 dt, ..., ~t_end`.
    pub fn uniform(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && t_end > 0.0) {
            return Err(Error::invalid("need positive dt and t_end"));
        }
        let n = (t_end / dt).round() as usize;
        Self::new((0..=n).map(|k| k as f64 * dt).collect())
    }

    /// Dense sampling up to `dense_until`, coarse sampling beyond: the
    /// default trajectory grid (dt 0.1 to t=100, dt 0.5 to t=1000).
    pub fn two_phase(dense_until: f64, dense_dt: f64, t_end: f64, coarse_dt: f64) -> Result<Self> {
        let n_dense = (dense_until / dense_dt).round() as usize;
        let mut points: Vec<f64> = (0..=n_dense).map(|k| k as f64 * dense_dt).collect();
        let n_coarse = ((t_end - dense_until) / coarse_dt).round() as usize;
        points.extend((1..=n_coarse).map(|k| dense_until + k as f64 * coarse_dt));
        Self::new(points)
    }

    /// Only the averaging window is observed: `{0} + [t_start, t_end]` at
    /// spacing `dt`; the stretch before the window is crossed in one jump.
    pub fn window_only(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(0.0 < t_start && t_start < t_end && dt > 0.0) {
            return Err(Error::invalid("need 0 < t_start < t_end and positive dt"));
        }
        let mut points = vec![0.0];
        let n = ((t_end - t_start) / dt).round() as usize;
        points.extend((0..=n).map(|k| t_start + k as f64 * dt));
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn t_end(&self) -> f64 {
        *self.points.last().expect("nonempty")
    }
}

/// A state being carried through a quench, in either representation.
#[derive(Debug, Clone)]
pub enum EvolvingState {
    Full(PureState),
    Branches(BranchPair),
}

impl EvolvingState {
    pub fn as_protocol(&self) -> ProtocolState<'_> {
        match self {
            EvolvingState::Full(psi) => ProtocolState::Full(psi),
            EvolvingState::Branches(bp) => ProtocolState::Branches(bp),
        }
    }
}

/// Named scalar recorded at every grid point.
pub trait Observer {
    fn name(&self) -> &str;
    fn observe(&mut self, t: f64, state: ProtocolState<'_>) -> Result<f64>;
}

/// Observer built from a closure.
pub struct FnObserver<F> {
    name: String,
    f: F,
}

impl<F> FnObserver<F>
where
    F: FnMut(f64, ProtocolState<'_>) -> Result<f64>,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> Observer for FnObserver<F>
where
    F: FnMut(f64, ProtocolState<'_>) -> Result<f64>,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn observe(&mut self, t: f64, state: ProtocolState<'_>) -> Result<f64> {
        (self.f)(t, state)
    }
}

/// Drive a state along the grid, calling every observer at every grid point.
///
/// Branch pairs evolve both branches under the same system Hamiltonian; the
/// full representation evolves the complete register (the Hamiltonian must
/// then act as identity on the ancilla, which the builders guarantee).
pub fn evolve_trajectory(
    h: &HermitianOperator,
    initial: EvolvingState,
    grid: &TimeGrid,
    observers: &mut [Box<dyn Observer + '_>],
    cfg: &PropagatorConfig,
) -> Result<QuenchTrajectory> {
    let mut state = initial;
    match &state {
        EvolvingState::Full(psi) => {
            if psi.dimension() != h.dimension() {
                return Err(Error::DimensionMismatch {
                    left: h.dimension(),
                    right: psi.dimension(),
                });
            }
        }
        EvolvingState::Branches(bp) => {
            if bp.plus.dimension() != h.dimension() {
                return Err(Error::DimensionMismatch {
                    left: h.dimension(),
                    right: bp.plus.dimension(),
                });
            }
        }
    }
    let mut prop = KrylovPropagator::new(h, *cfg)?;
    let mut prop_minus = KrylovPropagator::new(h, *cfg)?;
    let mut series: Vec<(String, Vec<f64>)> = observers
        .iter()
        .map(|o| (o.name().to_string(), Vec::with_capacity(grid.points().len())))
        .collect();
    let mut times = Vec::with_capacity(grid.points().len());
    let mut prev_t = 0.0;
    for (k, &t) in grid.points().iter().enumerate() {
        let dt = t - prev_t;
        if k > 0 {
            match &mut state {
                EvolvingState::Full(psi) => {
                    let layout = psi.layout();
                    let mut amps =
                        std::mem::replace(psi, PureState::ground(layout)).into_amplitudes();
                    prop.advance(&mut amps, dt)?;
                    *psi = PureState::new(amps, layout)?;
                }
                EvolvingState::Branches(bp) => {
                    let layout = bp.plus.layout();
                    let mut plus = std::mem::replace(&mut bp.plus, PureState::ground(layout))
                        .into_amplitudes();
                    let mut minus = std::mem::replace(&mut bp.minus, PureState::ground(layout))
                        .into_amplitudes();
                    prop.advance(&mut plus, dt)?;
                    prop_minus.advance(&mut minus, dt)?;
                    bp.plus = PureState::new(plus, layout)?;
                    bp.minus = PureState::new(minus, layout)?;
                    bp.time = t;
                }
            }
        }
        prev_t = t;
        times.push(t);
        let view = state.as_protocol();
        for (obs, (_, values)) in observers.iter_mut().zip(series.iter_mut()) {
            values.push(obs.observe(t, view)?);
        }
    }
    Ok(QuenchTrajectory { times, series, metadata: Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_ising, pauli_term, Axis, IsingParams, RegisterLayout};
    use crate::spectra::full_spectrum;
    use crate::state::{scrambling_initial_state, BlochDirection, InitialStateSpec, Sign};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_product_state(n: usize, seed: u64) -> PureState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = RegisterLayout::system(n).unwrap();
        let factors: Vec<[Complex64; 2]> = (0..n)
            .map(|_| {
                crate::state::bloch_eigenstate(
                    BlochDirection::new(rng.gen_range(0.0..3.14), rng.gen_range(0.0..6.28)),
                    Sign::Plus,
                )
            })
            .collect();
        crate::state::product_state(layout, &factors).unwrap()
    }

    #[test]
    fn larmor_precession_single_spin() {
        // H = sz, |+x>: <sx(t)> = cos(2t)
        let layout = RegisterLayout::system(1).unwrap();
        let h = pauli_term(layout, &[(1, Axis::Z)]).unwrap();
        let sx = pauli_term(layout, &[(1, Axis::X)]).unwrap();
        let psi0 = scrambling_initial_state(
            &InitialStateSpec::isotropic(BlochDirection::x_plus(), false),
            layout,
        )
        .unwrap();
        let cfg = PropagatorConfig { krylov_dimension: 2, ..Default::default() };
        for &t in &[0.3, 1.0, 2.7, 10.0] {
            let psi_t = krylov_evolve(&h, &psi0, t, &cfg).unwrap();
            let got = sx.expectation(psi_t.amplitudes()).unwrap().re;
            assert!((got - (2.0 * t).cos()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn zero_time_returns_input_exactly() {
        let psi = random_product_state(4, 3);
        let layout = RegisterLayout::system(4).unwrap();
        let h = build_ising(&IsingParams::standard(4), layout).unwrap();
        let out = krylov_evolve(&h, &psi, 0.0, &PropagatorConfig::default()).unwrap();
        assert_eq!(psi.amplitudes(), out.amplitudes());
    }

    #[test]
    fn krylov_matches_spectral_oracle() {
        let n = 8;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_ising(&IsingParams::standard(n), layout).unwrap();
        let s = full_spectrum(&h, true).unwrap();
        let psi0 = random_product_state(n, 9);
        let t = 10.0;
        let via_krylov = krylov_evolve(&h, &psi0, t, &PropagatorConfig::default()).unwrap();
        let via_spectrum = spectral_evolve(&s, &psi0, t).unwrap();
        let overlap = via_krylov.inner(&via_spectrum).norm();
        assert!(overlap >= 1.0 - 1e-8, "overlap {overlap}");
        // norm drift
        assert!((via_krylov.norm() - 1.0).abs() <= 1e-9);
        // energy drift
        let e0 = psi0.energy(&h).unwrap();
        let e1 = via_krylov.energy(&h).unwrap();
        let range = s.e_max() - s.e_min();
        assert!((e1 - e0).abs() <= 1e-8 * range);
    }

    #[test]
    fn spectral_evolution_unitary_and_invertible() {
        let n = 5;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_ising(&IsingParams::standard(n), layout).unwrap();
        let s = full_spectrum(&h, true).unwrap();
        let psi = random_product_state(n, 17);
        let fwd = spectral_evolve(&s, &psi, 3.7).unwrap();
        assert!((fwd.norm() - 1.0).abs() < 1e-12);
        let back = spectral_evolve(&s, &fwd, -3.7).unwrap();
        let overlap = back.inner(&psi);
        assert!((overlap - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        // eigenvector input only acquires a phase
        let v0 = PureState::new(s.eigenvector(0).unwrap().to_vec(), layout).unwrap();
        let ev = spectral_evolve(&s, &v0, 1.3).unwrap();
        let phase = Complex64::new(0.0, -1.3 * s.eigenvalues()[0]).exp();
        for (a, b) in ev.amplitudes().iter().zip(v0.amplitudes().iter()) {
            assert!((a - phase * b).norm() < 1e-12);
        }
    }

    #[test]
    fn spectral_evolve_matches_taylor_oracle() {
        let n = 6;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_ising(&IsingParams::standard(n), layout).unwrap();
        let s = full_spectrum(&h, true).unwrap();
        let psi = random_product_state(n, 29);
        // scaled 20-term Taylor series for exp(-i t H) psi with squaring:
        // exp(-i t H) = (exp(-i (t/2^k) H))^{2^k} applied as repeated series
        let t = 0.8;
        let k = 6;
        let small = t / (1u32 << k) as f64;
        let dense = h.to_dense();
        let mut cur: Vec<Complex64> = psi.amplitudes().to_vec();
        for _ in 0..(1u32 << k) {
            let mut acc = cur.clone();
            let mut term = cur.clone();
            for order in 1..20 {
                let mut next = vec![C_ZERO; term.len()];
                for i in 0..term.len() {
                    let mut hv = C_ZERO;
                    for j in 0..term.len() {
                        hv += dense[(i, j)] * term[j];
                    }
                    next[i] = hv * Complex64::new(0.0, -small) / Complex64::new(order as f64, 0.0);
                }
                for i in 0..next.len() {
                    acc[i] += next[i];
                }
                term = next;
            }
            cur = acc;
        }
        let exact = spectral_evolve(&s, &psi, t).unwrap();
        for (a, b) in exact.amplitudes().iter().zip(cur.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn composition_of_evolutions() {
        let n = 6;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_ising(&IsingParams::standard(n), layout).unwrap();
        let psi = random_product_state(n, 5);
        let cfg = PropagatorConfig::default();
        let one_shot = krylov_evolve(&h, &psi, 7.3, &cfg).unwrap();
        let part = krylov_evolve(&h, &psi, 3.1, &cfg).unwrap();
        let two_step = krylov_evolve(&h, &part, 4.2, &cfg).unwrap();
        let overlap = one_shot.inner(&two_step).norm();
        assert!(overlap >= 1.0 - 1e-8, "overlap {overlap}");
    }

    #[test]
    fn trajectory_conserves_norm_and_energy() {
        let n = 6;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_ising(&IsingParams::standard(n), layout).unwrap();
        let psi0 = random_product_state(n, 12);
        let grid = TimeGrid::uniform(20.0, 0.5).unwrap();
        let h_ref = &h;
        let mut observers: Vec<Box<dyn Observer + '_>> = vec![
            Box::new(FnObserver::new("norm", |_t, s: ProtocolState<'_>| Ok(s.norm()))),
            Box::new(FnObserver::new("energy", move |_t, s: ProtocolState<'_>| {
                s.energy(h_ref)
            })),
        ];
        let traj = evolve_trajectory(
            &h,
            EvolvingState::Full(psi0.clone()),
            &grid,
            &mut observers,
            &PropagatorConfig::default(),
        )
        .unwrap();
        let e0 = psi0.energy(&h).unwrap();
        for &v in traj.series("norm").unwrap() {
            assert!((v - 1.0).abs() < 1e-9);
        }
        for &v in traj.series("energy").unwrap() {
            assert!((v - e0).abs() < 1e-8 * 30.0);
        }
        assert_eq!(traj.times.len(), grid.points().len());
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(TimeGrid::new(vec![0.5, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![]).is_err());
        let g = TimeGrid::two_phase(1.0, 0.1, 3.0, 0.5).unwrap();
        assert_eq!(g.points().len(), 11 + 4);
        let w = TimeGrid::window_only(2.0, 4.0, 0.5).unwrap();
        assert_eq!(w.points(), &[0.0, 2.0, 2.5, 3.0, 3.5, 4.0]);
    }

    #[test]
    fn fixed_mode_and_convergence_error() {
        let n = 4;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_ising(&IsingParams::standard(n), layout).unwrap();
        let psi = random_product_state(n, 2);
        // tiny Krylov space with an impossible tolerance must fail loudly
        let cfg = PropagatorConfig {
            krylov_dimension: 2,
            tolerance: 1e-300,
            mode: SubstepMode::Adaptive,
            min_substep: 1e-6,
        };
        let err = krylov_evolve(&h, &psi, 5.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
        // fixed small steps still work without error control
        let cfg = PropagatorConfig {
            krylov_dimension: 12,
            tolerance: 1e-10,
            mode: SubstepMode::Fixed(0.01),
            min_substep: 1e-9,
        };
        let s = full_spectrum(&h, true).unwrap();
        let via_fixed = krylov_evolve(&h, &psi, 1.0, &cfg).unwrap();
        let oracle = spectral_evolve(&s, &psi, 1.0).unwrap();
        assert!(via_fixed.inner(&oracle).norm() > 1.0 - 1e-8);
    }
}
