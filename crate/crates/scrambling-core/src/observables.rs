//! Reduced density matrices, entropies, tripartite mutual information, and
//! thermalization diagnostics.
//!
//! Subsystems are named by register bit positions (system qubit `i` is bit
//! `i-1`, the ancilla is the highest bit); subset basis ordering follows
//! ascending bit position, so the ancilla is always the most significant bit
//! of a reduced index.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{Axis, RegisterLayout};
use crate::linalg;
use crate::state::{bloch_eigenstate, BranchPair, ProtocolState, PureState, Sign};

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Entropy logarithm base. Bits by default; a global scale factor only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum LogBase {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "e")]
    E,
}

impl LogBase {
    pub fn label(self) -> &'static str {
        match self {
            LogBase::Two => "2",
            LogBase::E => "e",
        }
    }
}

impl LogBase {
    fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Two => nats / std::f64::consts::LN_2,
            LogBase::E => nats,
        }
    }
}

/// Dense reduced density matrix over a labelled qubit subset.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: Array2<Complex64>,
    /// Register bit positions, ascending.
    bits: Vec<usize>,
}

impl DensityMatrix {
    /// Wrap a matrix, checking shape, hermiticity (1e-10) and unit trace (1e-10).
    pub fn new(matrix: Array2<Complex64>, bits: Vec<usize>) -> Result<Self> {
        let dm = Self::new_unchecked(matrix, bits)?;
        let defect = dm.hermiticity_defect();
        if defect > 1e-10 {
            return Err(Error::invalid(format!("matrix not Hermitian: defect {defect}")));
        }
        let tr = dm.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("trace {tr} deviates from 1")));
        }
        Ok(dm)
    }

    fn new_unchecked(matrix: Array2<Complex64>, bits: Vec<usize>) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d {
            return Err(Error::DimensionMismatch { left: d, right: matrix.ncols() });
        }
        if d != 1 << bits.len() {
            return Err(Error::DimensionMismatch { left: d, right: 1 << bits.len() });
        }
        Ok(Self { matrix, bits })
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn bits(&self) -> &[usize] {
        &self.bits
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.bits.len()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dimension()).map(|i| self.matrix[(i, i)].re).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dimension();
        let mut defect = 0.0f64;
        for i in 0..d {
            defect = defect.max(self.matrix[(i, i)].im.abs());
            for j in (i + 1)..d {
                defect = defect.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        defect
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::eigvalsh(&self.matrix)
    }

    /// Maximally mixed state on the given bits.
    pub fn maximally_mixed(bits: Vec<usize>) -> Self {
        let d = 1 << bits.len();
        let mut m = Array2::zeros((d, d));
        for i in 0..d {
            m[(i, i)] = Complex64::new(1.0 / d as f64, 0.0);
        }
        Self { matrix: m, bits }
    }
}

fn sorted_distinct(bits: &[usize]) -> Result<Vec<usize>> {
    if bits.is_empty() {
        return Err(Error::invalid("empty qubit subset"));
    }
    let mut v = bits.to_vec();
    v.sort_unstable();
    if v.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate qubit in subset"));
    }
    Ok(v)
}

fn scatter_table(bits: &[usize]) -> Vec<usize> {
    let k = bits.len();
    let mut table = vec![0usize; 1 << k];
    for idx in 0..(1usize << k) {
        let mut v = 0usize;
        for (pos, &bit) in bits.iter().enumerate() {
            if (idx >> pos) & 1 == 1 {
                v |= 1 << bit;
            }
        }
        table[idx] = v;
    }
    table
}

fn complement_bits(total: usize, keep: &[usize]) -> Vec<usize> {
    (0..total).filter(|b| !keep.contains(b)).collect()
}

/// `Tr_rest |psi_a><psi_b|` over the kept bits; a density matrix when
/// `psi_a == psi_b`, a GHZ-branch cross block otherwise.
fn pure_trace_kernel(
    psi_a: &[Complex64],
    psi_b: &[Complex64],
    total_bits: usize,
    keep: &[usize],
) -> Array2<Complex64> {
    let kd = 1usize << keep.len();
    let rest = complement_bits(total_bits, keep);
    let keep_tab = scatter_table(keep);
    let rest_tab = scatter_table(&rest);
    let mut rho = Array2::<Complex64>::zeros((kd, kd));
    let mut va = vec![C_ZERO; kd];
    let mut vb = vec![C_ZERO; kd];
    let same = std::ptr::eq(psi_a, psi_b);
    for &r in &rest_tab {
        for (a, &sk) in keep_tab.iter().enumerate() {
            va[a] = psi_a[sk | r];
        }
        if same {
            vb.copy_from_slice(&va);
        } else {
            for (b, &sk) in keep_tab.iter().enumerate() {
                vb[b] = psi_b[sk | r];
            }
        }
        for a in 0..kd {
            let x = va[a];
            if x == C_ZERO {
                continue;
            }
            let mut row = rho.row_mut(a);
            for b in 0..kd {
                row[b] += x * vb[b].conj();
            }
        }
    }
    rho
}

/// Reduced density matrix of a pure state over the kept bits, built directly
/// from amplitudes.
pub fn partial_trace(psi: &PureState, keep: &[usize]) -> Result<DensityMatrix> {
    let keep = sorted_distinct(keep)?;
    let total = psi.layout().total_qubits();
    if keep.iter().any(|&b| b >= total) {
        return Err(Error::invalid("subset bit outside the register"));
    }
    let rho = pure_trace_kernel(psi.amplitudes(), psi.amplitudes(), total, &keep);
    DensityMatrix::new_unchecked(rho, keep)
}

/// Reduced density matrix of a density matrix over the kept bits.
pub fn partial_trace_rho(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let keep = sorted_distinct(keep)?;
    // keep must name bits present in the source label
    let positions: Vec<usize> = keep
        .iter()
        .map(|b| {
            rho.bits()
                .iter()
                .position(|&rb| rb == *b)
                .ok_or_else(|| Error::invalid(format!("bit {b} not in source subset")))
        })
        .collect::<Result<_>>()?;
    let total = rho.n_qubits();
    let rest: Vec<usize> = (0..total).filter(|p| !positions.contains(p)).collect();
    let keep_tab = scatter_table(&positions);
    let rest_tab = scatter_table(&rest);
    let kd = keep_tab.len();
    let mut out = Array2::<Complex64>::zeros((kd, kd));
    for a in 0..kd {
        for b in 0..kd {
            let mut acc = C_ZERO;
            for &r in &rest_tab {
                acc += rho.matrix()[(keep_tab[a] | r, keep_tab[b] | r)];
            }
            out[(a, b)] = acc;
        }
    }
    DensityMatrix::new_unchecked(out, keep)
}

/// Reduced density matrix of a branch-pair protocol state over protocol
/// register bits (ancilla bit = `n_system`).
pub fn branch_partial_trace(bp: &BranchPair, keep: &[usize]) -> Result<DensityMatrix> {
    let keep = sorted_distinct(keep)?;
    let n = bp.system_layout().n_system();
    let anc_bit = n;
    if keep.iter().any(|&b| b > anc_bit) {
        return Err(Error::invalid("subset bit outside the protocol register"));
    }
    let has_anc = keep.contains(&anc_bit);
    let sys_keep: Vec<usize> = keep.iter().copied().filter(|&b| b != anc_bit).collect();
    let psi_p = bp.plus.amplitudes();
    let psi_m = bp.minus.amplitudes();
    if !has_anc {
        // rho = (Tr |p><p| + Tr |m><m|)/2
        let mut rho = pure_trace_kernel(psi_p, psi_p, n, &sys_keep);
        rho += &pure_trace_kernel(psi_m, psi_m, n, &sys_keep);
        rho.mapv_inplace(|v| 0.5 * v);
        return DensityMatrix::new_unchecked(rho, keep);
    }
    // ancilla participates: rho = 1/2 sum_{ab} |a><b|_A (x) Tr |psi_a><psi_b|
    let kd_sys = 1usize << sys_keep.len();
    let branches = [psi_p, psi_m];
    let a_states = [
        bloch_eigenstate(bp.direction, Sign::Plus),
        bloch_eigenstate(bp.direction, Sign::Minus),
    ];
    let kd = 2 * kd_sys;
    let mut rho = Array2::<Complex64>::zeros((kd, kd));
    for ai in 0..2 {
        for bi in 0..2 {
            let block = if sys_keep.is_empty() {
                let mut m = Array2::<Complex64>::zeros((1, 1));
                m[(0, 0)] = branches[bi]
                    .iter()
                    .zip(branches[ai].iter())
                    .map(|(b, a)| b.conj() * a)
                    .sum();
                m
            } else {
                pure_trace_kernel(branches[ai], branches[bi], n, &sys_keep)
            };
            for alpha in 0..2 {
                for beta in 0..2 {
                    let w = 0.5 * a_states[ai][alpha] * a_states[bi][beta].conj();
                    if w == C_ZERO {
                        continue;
                    }
                    for s1 in 0..kd_sys {
                        for s2 in 0..kd_sys {
                            rho[(alpha * kd_sys + s1, beta * kd_sys + s2)] += w * block[(s1, s2)];
                        }
                    }
                }
            }
        }
    }
    DensityMatrix::new_unchecked(rho, keep)
}

/// Reduced density matrix of a protocol state in either representation.
pub fn protocol_partial_trace(state: ProtocolState<'_>, keep: &[usize]) -> Result<DensityMatrix> {
    match state {
        ProtocolState::Full(psi) => partial_trace(psi, keep),
        ProtocolState::Branches(bp) => branch_partial_trace(bp, keep),
    }
}

/// Von Neumann entropy in the given base; eigenvalues below 1e-12 dropped.
pub fn von_neumann_entropy_base(rho: &DensityMatrix, base: LogBase) -> Result<f64> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("entropy of non-normalized matrix: trace {tr}")));
    }
    let mut nats = 0.0;
    for p in rho.eigenvalues()? {
        if p > 1e-12 {
            nats -= p * p.ln();
        }
    }
    Ok(base.from_nats(nats))
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    von_neumann_entropy_base(rho, LogBase::Two)
}

/// Four disjoint, covering, nonempty qubit sets (register bit positions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemPartition {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub c: Vec<usize>,
    pub d: Vec<usize>,
}

impl SubsystemPartition {
    pub fn new(
        layout: RegisterLayout,
        a: Vec<usize>,
        b: Vec<usize>,
        c: Vec<usize>,
        d: Vec<usize>,
    ) -> Result<Self> {
        let total = layout.total_qubits();
        let mut seen = vec![false; total];
        for (name, set) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if set.is_empty() {
                return Err(Error::invalid(format!("partition block {name} is empty")));
            }
            for &bit in set {
                if bit >= total {
                    return Err(Error::invalid(format!("bit {bit} outside register in block {name}")));
                }
                if seen[bit] {
                    return Err(Error::invalid(format!("bit {bit} appears twice")));
                }
                seen[bit] = true;
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::invalid("partition does not cover the register"));
        }
        Ok(Self { a, b, c, d })
    }

    /// The protocol partition: `A = ancilla`, `B = Q1`, `C = Q2..Q_{N/2}`,
    /// `D = Q_{N/2+1}..Q_N`. Requires the ancilla and an even chain.
    pub fn protocol(layout: RegisterLayout) -> Result<Self> {
        let n = layout.n_system();
        if n % 2 != 0 || n < 4 {
            return Err(Error::invalid(format!("protocol partition needs even n >= 4, got {n}")));
        }
        let anc = layout
            .ancilla_bit()
            .ok_or_else(|| Error::invalid("protocol partition needs the ancilla"))?;
        let a = vec![anc];
        let b = vec![0];
        let c: Vec<usize> = (1..n / 2).collect();
        let d: Vec<usize> = (n / 2..n).collect();
        Self::new(layout, a, b, c, d)
    }

    fn union(x: &[usize], y: &[usize]) -> Vec<usize> {
        let mut v: Vec<usize> = x.iter().chain(y.iter()).copied().collect();
        v.sort_unstable();
        v
    }
}

/// Tripartite mutual information
/// `I3 = S(A)+S(B)+S(C)+S(D) - S(AB) - S(AC) - S(BC)`.
pub fn tripartite_mutual_information_base(
    state: ProtocolState<'_>,
    part: &SubsystemPartition,
    base: LogBase,
) -> Result<f64> {
    let register = state.register()?;
    let covered: usize = part.a.len() + part.b.len() + part.c.len() + part.d.len();
    if covered != register.total_qubits() {
        return Err(Error::invalid("partition does not match the state register"));
    }
    let entropy = |bits: &[usize]| -> Result<f64> {
        let rho = protocol_partial_trace(state, bits)?;
        von_neumann_entropy_base(&rho, base)
    };
    let s_a = entropy(&part.a)?;
    let s_b = entropy(&part.b)?;
    let s_c = entropy(&part.c)?;
    let s_d = entropy(&part.d)?;
    let s_ab = entropy(&SubsystemPartition::union(&part.a, &part.b))?;
    let s_ac = entropy(&SubsystemPartition::union(&part.a, &part.c))?;
    let s_bc = entropy(&SubsystemPartition::union(&part.b, &part.c))?;
    Ok(s_a + s_b + s_c + s_d - s_ab - s_ac - s_bc)
}

/// TMI in bits.
pub fn tripartite_mutual_information(
    state: ProtocolState<'_>,
    part: &SubsystemPartition,
) -> Result<f64> {
    tripartite_mutual_information_base(state, part, LogBase::Two)
}

/// Canonical series name for the TMI recorded along a trajectory.
pub const TMI_SERIES: &str = "i3";

/// Time grid plus named scalar series recorded during a quench.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct QuenchTrajectory {
    pub times: Vec<f64>,
    /// `(name, values)` pairs; every series shares the grid length.
    pub series: Vec<(String, Vec<f64>)>,
    /// free-form provenance (model parameters, initial state, ...)
    pub metadata: std::collections::BTreeMap<String, String>,
}

impl QuenchTrajectory {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn series_names(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|(n, _)| n.as_str())
    }

    /// All series share the grid length.
    pub fn is_consistent(&self) -> bool {
        self.series.iter().all(|(_, v)| v.len() == self.times.len())
    }
}

/// Averaging window for stationary TMI values.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeAverageWindow {
    pub t_start: f64,
    pub t_end: f64,
}

impl Default for TimeAverageWindow {
    fn default() -> Self {
        Self { t_start: 100.0, t_end: 1000.0 }
    }
}

impl TimeAverageWindow {
    pub fn new(t_start: f64, t_end: f64) -> Result<Self> {
        if !(0.0 <= t_start && t_start < t_end) {
            return Err(Error::invalid(format!("bad window [{t_start}, {t_end}]")));
        }
        Ok(Self { t_start, t_end })
    }
}

/// Trapezoidal time average of a sampled series over a window, interpolating
/// linearly at the window endpoints.
pub fn time_average(times: &[f64], values: &[f64], w: TimeAverageWindow) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch { left: times.len(), right: values.len() });
    }
    if times.len() < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let eps = 1e-9 * w.t_end.abs().max(1.0);
    if times[0] > w.t_start + eps || times[times.len() - 1] < w.t_end - eps {
        return Err(Error::invalid(format!(
            "grid [{}, {}] does not cover window [{}, {}]",
            times[0],
            times[times.len() - 1],
            w.t_start,
            w.t_end
        )));
    }
    let value_at = |t: f64| -> f64 {
        let k = times.partition_point(|&x| x < t).min(times.len() - 1).max(1);
        let (t0, t1) = (times[k - 1], times[k]);
        if t1 == t0 {
            return values[k];
        }
        let frac = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        values[k - 1] + frac * (values[k] - values[k - 1])
    };
    let mut integral = 0.0;
    let mut prev_t = w.t_start;
    let mut prev_v = value_at(w.t_start);
    for k in 0..times.len() {
        let t = times[k];
        if t <= w.t_start {
            continue;
        }
        if t >= w.t_end {
            break;
        }
        integral += 0.5 * (values[k] + prev_v) * (t - prev_t);
        prev_t = t;
        prev_v = values[k];
    }
    let end_v = value_at(w.t_end);
    integral += 0.5 * (end_v + prev_v) * (w.t_end - prev_t);
    Ok(integral / (w.t_end - w.t_start))
}

/// Trapezoidal average of a trajectory's TMI series over the window.
pub fn time_averaged_tmi(traj: &QuenchTrajectory, w: TimeAverageWindow) -> Result<f64> {
    let values = traj
        .series(TMI_SERIES)
        .ok_or_else(|| Error::invalid(format!("trajectory has no `{TMI_SERIES}` series")))?;
    time_average(&traj.times, values, w)
}

/// Average `sigma^axis` over the qubits of a reduced subset, as a dense matrix.
pub fn subset_average_pauli(n_qubits: usize, axis: Axis) -> Array2<Complex64> {
    let d = 1usize << n_qubits;
    let single = axis.dense();
    let mut out = Array2::<Complex64>::zeros((d, d));
    for q in 0..n_qubits {
        for r in 0..d {
            let b = (r >> q) & 1;
            for b2 in 0..2 {
                let entry = single[b2][b];
                if entry != C_ZERO {
                    let row = (r & !(1 << q)) | (b2 << q);
                    out[(row, r)] += entry;
                }
            }
        }
    }
    out.mapv_inplace(|v| v / n_qubits as f64);
    out
}

/// `Tr{O (rho_t - rho_th)}` with `O` the subset-averaged `sigma^axis`.
pub fn local_observable_deviation(
    rho_t: &DensityMatrix,
    rho_th: &DensityMatrix,
    axis: Axis,
) -> Result<f64> {
    if rho_t.bits() != rho_th.bits() {
        return Err(Error::invalid("subset mismatch between state and thermal matrices"));
    }
    let o = subset_average_pauli(rho_t.n_qubits(), axis);
    let d = rho_t.dimension();
    let mut acc = C_ZERO;
    for i in 0..d {
        for j in 0..d {
            acc += o[(i, j)] * (rho_t.matrix()[(j, i)] - rho_th.matrix()[(j, i)]);
        }
    }
    Ok(acc.re)
}

/// Largest eigenvalue of `rho1 - rho2` (the literal thermal-distance
/// definition; can differ from the operator norm when the most negative
/// eigenvalue dominates).
pub fn rdm_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    let evals = difference_eigenvalues(rho1, rho2)?;
    Ok(*evals.last().expect("nonempty"))
}

/// Operator-norm variant: `max |eigenvalue|` of the difference.
pub fn rdm_distance_abs(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    let evals = difference_eigenvalues(rho1, rho2)?;
    Ok(evals.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
}

fn difference_eigenvalues(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<Vec<f64>> {
    if rho1.dimension() != rho2.dimension() {
        return Err(Error::DimensionMismatch { left: rho1.dimension(), right: rho2.dimension() });
    }
    let diff = rho1.matrix() - rho2.matrix();
    linalg::eigvalsh(&diff)
}

/// Cusp-detector settings; the defaults implement the documented recipe
/// (5-point smoothing, derivative sign change, second-difference prominence
/// at 10x the running noise floor, relaxation cutoff 2.0).
#[derive(Debug, Clone, Copy)]
pub struct CuspConfig {
    pub t_relax: f64,
    pub smooth_window: usize,
    pub prominence_factor: f64,
    /// minimum samples past the cutoff before detection may fire
    pub min_history: usize,
}

impl Default for CuspConfig {
    fn default() -> Self {
        Self { t_relax: 2.0, smooth_window: 5, prominence_factor: 10.0, min_history: 10 }
    }
}

/// Time of the first pronounced cusp after the relaxation cutoff, or `None`.
///
/// A cusp is a sign change of the smoothed derivative whose second-difference
/// magnitude stands at least `prominence_factor` above the median absolute
/// second difference accumulated since the cutoff.
pub fn detect_first_cusp(times: &[f64], values: &[f64], cfg: &CuspConfig) -> Option<f64> {
    let n = times.len();
    if n != values.len() || n < cfg.smooth_window + 2 {
        return None;
    }
    let half = cfg.smooth_window / 2;
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut deriv: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                0.0
            } else {
                (smoothed[i + 1] - smoothed[i - 1]) / (times[i + 1] - times[i - 1])
            }
        })
        .collect();
    // extend one-sidedly so the boundary cannot fake a sign change
    deriv[0] = deriv[1.min(n - 1)];
    deriv[n - 1] = deriv[n - 2];
    let curv: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                0.0
            } else {
                smoothed[i + 1] - 2.0 * smoothed[i] + smoothed[i - 1]
            }
        })
        .collect();
    let start = times.partition_point(|&t| t <= cfg.t_relax).max(1);
    let mut history: Vec<f64> = Vec::new();
    for i in start..n - 1 {
        history.push(curv[i].abs());
        if history.len() < cfg.min_history {
            continue;
        }
        let sign_change = deriv[i] * deriv[i + 1] <= 0.0 && (deriv[i] != 0.0 || deriv[i + 1] != 0.0);
        if !sign_change {
            continue;
        }
        let mut sorted = history.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        let floor = median.max(1e-15);
        if curv[i].abs() >= cfg.prominence_factor * floor
            || curv[i + 1].abs() >= cfg.prominence_factor * floor
        {
            // report the sharper of the two flanking samples
            let pick = if curv[i + 1].abs() > curv[i].abs() { i + 1 } else { i };
            return Some(times[pick]);
        }
    }
    None
}
