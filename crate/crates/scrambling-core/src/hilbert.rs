//! Hilbert-space geometry and sparse Hamiltonian construction.
//!
//! Qubit `i` (1-based, `i = 1..=N`) occupies bit `i-1` of the basis index;
//! the ancilla, when present, occupies the highest bit. `|0>` is the
//! `sigma^z = +1` eigenstate. Hamiltonians act on system qubits only; the
//! ancilla factor is always the identity.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Memory ceiling for operator construction. Dimensions whose estimated
/// sparse footprint exceeds this produce a resource error instead of an
/// allocation attempt.
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

/// Placement of system qubits and the optional ancilla in the basis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    n_system: usize,
    has_ancilla: bool,
}

impl RegisterLayout {
    pub fn new(n_system: usize, has_ancilla: bool) -> Result<Self> {
        if n_system == 0 {
            return Err(Error::invalid("n_system must be positive"));
        }
        if n_system + usize::from(has_ancilla) > 30 {
            return Err(Error::invalid("register too large for a state vector"));
        }
        Ok(Self { n_system, has_ancilla })
    }

    pub fn system(n_system: usize) -> Result<Self> {
        Self::new(n_system, false)
    }

    pub fn with_ancilla(n_system: usize) -> Result<Self> {
        Self::new(n_system, true)
    }

    pub fn n_system(&self) -> usize {
        self.n_system
    }

    pub fn has_ancilla(&self) -> bool {
        self.has_ancilla
    }

    pub fn total_qubits(&self) -> usize {
        self.n_system + usize::from(self.has_ancilla)
    }

    pub fn dimension(&self) -> usize {
        1 << self.total_qubits()
    }

    /// Bit position of system qubit `i` (1-based).
    pub fn system_bit(&self, qubit: usize) -> Result<usize> {
        if qubit == 0 || qubit > self.n_system {
            return Err(Error::invalid(format!(
                "qubit index {qubit} outside 1..={}",
                self.n_system
            )));
        }
        Ok(qubit - 1)
    }

    /// Bit position of the ancilla, if the layout has one.
    pub fn ancilla_bit(&self) -> Option<usize> {
        self.has_ancilla.then_some(self.n_system)
    }
}

/// Pauli axis on a single qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    /// 2x2 matrix entries in the computational basis.
    pub fn dense(self) -> [[Complex64; 2]; 2] {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            Axis::X => [[z, one], [one, z]],
            Axis::Y => [[z, -i], [i, z]],
            Axis::Z => [[one, z], [z, -one]],
        }
    }
}

/// One weighted tensor product of Pauli operators on distinct qubits.
#[derive(Debug, Clone)]
struct PauliTerm {
    coeff: f64,
    /// (bit position, axis), bits distinct
    ops: Vec<(usize, Axis)>,
}

impl PauliTerm {
    /// Bits flipped by this term (X and Y components).
    fn flip_mask(&self) -> usize {
        self.ops
            .iter()
            .filter(|(_, ax)| matches!(ax, Axis::X | Axis::Y))
            .fold(0usize, |m, (b, _)| m | (1 << b))
    }

    /// Amplitude `<r ^ flip_mask | P | r>` excluding the coefficient.
    fn amplitude(&self, r: usize) -> Complex64 {
        let mut amp = Complex64::new(1.0, 0.0);
        for &(bit, ax) in &self.ops {
            let b = (r >> bit) & 1;
            match ax {
                Axis::X => {}
                Axis::Y => {
                    // sigma^y |b> = i(-1)^b |1-b>
                    amp *= Complex64::new(0.0, if b == 0 { 1.0 } else { -1.0 });
                }
                Axis::Z => {
                    if b == 1 {
                        amp = -amp;
                    }
                }
            }
        }
        amp
    }
}

/// Sparse Hermitian operator on a register, compressed-row storage.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    layout: RegisterLayout,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<Complex64>,
}

impl HermitianOperator {
    /// Assemble from weighted Pauli terms. Duplicate matrix entries are summed;
    /// exact zeros after summation are dropped.
    fn from_terms(layout: RegisterLayout, terms: &[PauliTerm]) -> Result<Self> {
        let dim = layout.dimension();
        let est = estimated_bytes(dim, terms.len());
        if est > DEFAULT_MEMORY_BUDGET {
            return Err(Error::Resource {
                what: format!("sparse operator on {} qubits", layout.total_qubits()),
                required_bytes: est,
                budget_bytes: DEFAULT_MEMORY_BUDGET,
                hint: "reduce the chain length".into(),
            });
        }

        let mut triplets: Vec<(u32, u32, Complex64)> = Vec::with_capacity(dim * terms.len());
        for term in terms {
            let mask = term.flip_mask();
            for r in 0..dim {
                let col = r;
                let row = r ^ mask;
                let val = term.amplitude(r) * term.coeff;
                triplets.push((row as u32, col as u32, val));
            }
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);

        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut it = triplets.into_iter().peekable();
        while let Some((r, c, mut v)) = it.next() {
            while let Some(&(r2, c2, v2)) = it.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    it.next();
                } else {
                    break;
                }
            }
            if v != Complex64::new(0.0, 0.0) {
                row_ptr[r as usize + 1] += 1;
                col_idx.push(c);
                values.push(v);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { layout, row_ptr, col_idx, values })
    }

    pub fn layout(&self) -> RegisterLayout {
        self.layout
    }

    pub fn dimension(&self) -> usize {
        self.layout.dimension()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// All stored entries as `(row, col, value)`.
    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dimension()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k] as usize, self.values[k]))
        })
    }

    /// `y = H x` into a caller-provided buffer.
    pub fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) -> Result<()> {
        let dim = self.dimension();
        if x.len() != dim {
            return Err(Error::DimensionMismatch { left: dim, right: x.len() });
        }
        if y.len() != dim {
            return Err(Error::DimensionMismatch { left: dim, right: y.len() });
        }
        let row_ptr = &self.row_ptr;
        let cols = &self.col_idx;
        let vals = &self.values;
        let kernel = |r: usize, out: &mut Complex64| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in row_ptr[r]..row_ptr[r + 1] {
                acc += vals[k] * x[cols[k] as usize];
            }
            *out = acc;
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            // parallelising tiny rows costs more than it saves
            if dim >= 1 << 12 {
                y.par_iter_mut()
                    .with_min_len(1 << 10)
                    .enumerate()
                    .for_each(|(r, out)| kernel(r, out));
                return Ok(());
            }
        }
        for (r, out) in y.iter_mut().enumerate() {
            kernel(r, out);
        }
        Ok(())
    }

    /// `H x` as a fresh vector.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.dimension()];
        self.apply_into(x, &mut y)?;
        Ok(y)
    }

    /// `<x|H|x>`; real up to rounding for Hermitian `H`.
    pub fn expectation(&self, x: &[Complex64]) -> Result<Complex64> {
        let hx = self.apply(x)?;
        Ok(x.iter().zip(hx.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    /// Largest deviation `|H - H^dag|` over stored entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        for (r, c, v) in self.iter_entries() {
            let vt = self.entry(c, r);
            defect = defect.max((v - vt.conj()).norm());
        }
        defect
    }

    /// Stored entry at `(row, col)`, zero if absent.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        match self.col_idx[lo..hi].binary_search(&(col as u32)) {
            Ok(k) => self.values[lo + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Dense copy; intended for small registers and oracle checks.
    pub fn to_dense(&self) -> ndarray::Array2<Complex64> {
        let dim = self.dimension();
        let mut a = ndarray::Array2::zeros((dim, dim));
        for (r, c, v) in self.iter_entries() {
            a[(r, c)] = v;
        }
        a
    }

    /// Content fingerprint (dimension + CSR arrays), hex SHA-256.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(b"hermitian-csr-v1");
        hasher.update((self.dimension() as u64).to_le_bytes());
        for (r, c, v) in self.iter_entries() {
            hasher.update((r as u64).to_le_bytes());
            hasher.update((c as u64).to_le_bytes());
            hasher.update(v.re.to_le_bytes());
            hasher.update(v.im.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn estimated_bytes(dim: usize, n_terms: usize) -> u64 {
    // triplets during assembly dominate: 16 bytes value + 8 bytes indices
    (dim as u64) * (n_terms as u64) * 24 + (dim as u64 + 1) * 8
}

/// Tensor product of Pauli matrices on the named system qubits (1-based),
/// identity elsewhere.
pub fn pauli_term(layout: RegisterLayout, assignments: &[(usize, Axis)]) -> Result<HermitianOperator> {
    if assignments.is_empty() {
        return Err(Error::invalid("at least one Pauli assignment required"));
    }
    let mut bits = Vec::with_capacity(assignments.len());
    for &(qubit, ax) in assignments {
        let bit = layout.system_bit(qubit)?;
        if bits.iter().any(|&(b, _)| b == bit) {
            return Err(Error::invalid(format!("duplicate qubit index {qubit}")));
        }
        bits.push((bit, ax));
    }
    HermitianOperator::from_terms(layout, &[PauliTerm { coeff: 1.0, ops: bits }])
}

/// Registerwide average `sum_i sigma^axis_i / N` over the system qubits.
pub fn average_pauli(layout: RegisterLayout, axis: Axis) -> Result<HermitianOperator> {
    let n = layout.n_system();
    let terms: Vec<PauliTerm> = (0..n)
        .map(|bit| PauliTerm { coeff: 1.0 / n as f64, ops: vec![(bit, axis)] })
        .collect();
    HermitianOperator::from_terms(layout, &terms)
}

/// Parameters of the mixed-field Ising chain
/// `H = -J sum sz_i sz_{i+1} + g sum sx_i + h sum sz_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    pub j: f64,
    pub g: f64,
    pub h: f64,
    pub n: usize,
}

impl IsingParams {
    /// Paper operating point: `g/J = 1.05`, `h/J = -0.5`.
    pub fn standard(n: usize) -> Self {
        Self { j: 1.0, g: 1.05, h: -0.5, n }
    }

    /// Both fields present; the model has no free-fermion form.
    pub fn non_integrable(&self) -> bool {
        self.g * self.h != 0.0
    }
}

/// Parameters of the driven qubit array
/// `H = lambda sum (sx sx + sy sy) + omega sum sy_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqaParams {
    pub lambda: f64,
    pub omega: f64,
    pub n: usize,
}

impl SqaParams {
    /// Paper operating point: `lambda = omega = 1`.
    pub fn standard(n: usize) -> Self {
        Self { lambda: 1.0, omega: 1.0, n }
    }
}

fn check_model_size(layout: RegisterLayout, n: usize, min_n: usize) -> Result<()> {
    if n < min_n {
        return Err(Error::invalid(format!("chain length {n} below minimum {min_n}")));
    }
    if layout.n_system() != n {
        return Err(Error::DimensionMismatch { left: layout.n_system(), right: n });
    }
    Ok(())
}

/// Mixed-field Ising chain, open boundaries.
pub fn build_ising(p: &IsingParams, layout: RegisterLayout) -> Result<HermitianOperator> {
    check_model_size(layout, p.n, 1)?;
    let mut terms = Vec::new();
    for i in 0..p.n.saturating_sub(1) {
        terms.push(PauliTerm { coeff: -p.j, ops: vec![(i, Axis::Z), (i + 1, Axis::Z)] });
    }
    for i in 0..p.n {
        if p.g != 0.0 {
            terms.push(PauliTerm { coeff: p.g, ops: vec![(i, Axis::X)] });
        }
        if p.h != 0.0 {
            terms.push(PauliTerm { coeff: p.h, ops: vec![(i, Axis::Z)] });
        }
    }
    HermitianOperator::from_terms(layout, &terms)
}

/// XY chain `lambda sum (sx sx + sy sy)`, open boundaries.
pub fn build_xy(lambda: f64, n: usize, layout: RegisterLayout) -> Result<HermitianOperator> {
    check_model_size(layout, n, 2)?;
    let mut terms = Vec::new();
    for i in 0..n - 1 {
        terms.push(PauliTerm { coeff: lambda, ops: vec![(i, Axis::X), (i + 1, Axis::X)] });
        terms.push(PauliTerm { coeff: lambda, ops: vec![(i, Axis::Y), (i + 1, Axis::Y)] });
    }
    HermitianOperator::from_terms(layout, &terms)
}

/// Driven qubit array: XY chain plus a uniform `sigma^y` drive.
pub fn build_sqa(p: &SqaParams, layout: RegisterLayout) -> Result<HermitianOperator> {
    check_model_size(layout, p.n, 2)?;
    let mut terms = Vec::new();
    for i in 0..p.n - 1 {
        terms.push(PauliTerm { coeff: p.lambda, ops: vec![(i, Axis::X), (i + 1, Axis::X)] });
        terms.push(PauliTerm { coeff: p.lambda, ops: vec![(i, Axis::Y), (i + 1, Axis::Y)] });
    }
    if p.omega != 0.0 {
        for i in 0..p.n {
            terms.push(PauliTerm { coeff: p.omega, ops: vec![(i, Axis::Y)] });
        }
    }
    HermitianOperator::from_terms(layout, &terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kron(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
        let (ar, ac) = a.dim();
        let (br, bc) = b.dim();
        let mut out = Array2::zeros((ar * br, ac * bc));
        for i in 0..ar {
            for j in 0..ac {
                for k in 0..br {
                    for l in 0..bc {
                        out[(i * br + k, j * bc + l)] = a[(i, j)] * b[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Dense Kronecker-product oracle: identity everywhere except the named
    /// system qubits. Factor order runs from the highest bit down so that the
    /// result matches the bit convention (qubit i -> bit i-1).
    fn dense_pauli_oracle(layout: RegisterLayout, assignments: &[(usize, Axis)]) -> Array2<Complex64> {
        let eye = Array2::<Complex64>::eye(2);
        let total = layout.total_qubits();
        let mut out = Array2::<Complex64>::eye(1);
        for bit in (0..total).rev() {
            let factor = assignments
                .iter()
                .find(|&&(q, _)| q - 1 == bit)
                .map(|&(_, ax)| {
                    let m = ax.dense();
                    ndarray::arr2(&m)
                })
                .unwrap_or_else(|| eye.clone());
            out = kron(&out, &factor);
        }
        out
    }

    fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn single_qubit_z_is_diagonal() {
        let layout = RegisterLayout::system(1).unwrap();
        let op = pauli_term(layout, &[(1, Axis::Z)]).unwrap();
        let d = op.to_dense();
        assert_eq!(d[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(d[(1, 1)], Complex64::new(-1.0, 0.0));
        assert_eq!(d[(0, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn two_qubit_xx_is_antidiagonal_ones() {
        let layout = RegisterLayout::system(2).unwrap();
        let op = pauli_term(layout, &[(1, Axis::X), (2, Axis::X)]).unwrap();
        let d = op.to_dense();
        for r in 0..4 {
            for c in 0..4 {
                let expect = if r + c == 3 { 1.0 } else { 0.0 };
                assert_eq!(d[(r, c)], Complex64::new(expect, 0.0));
            }
        }
    }

    #[test]
    fn middle_y_matches_kronecker_oracle() {
        let layout = RegisterLayout::system(3).unwrap();
        let op = pauli_term(layout, &[(2, Axis::Y)]).unwrap();
        let oracle = dense_pauli_oracle(layout, &[(2, Axis::Y)]);
        assert_eq!(max_abs_diff(&op.to_dense(), &oracle), 0.0);
    }

    #[test]
    fn pauli_rows_have_single_unit_entry() {
        let layout = RegisterLayout::system(4).unwrap();
        let op = pauli_term(layout, &[(1, Axis::X), (3, Axis::Y), (4, Axis::Z)]).unwrap();
        for r in 0..op.dimension() {
            let entries: Vec<_> = (op.row_ptr[r]..op.row_ptr[r + 1]).collect();
            assert_eq!(entries.len(), 1);
            assert!((op.values[entries[0]].norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pauli_term_rejects_bad_indices() {
        let layout = RegisterLayout::system(3).unwrap();
        assert!(pauli_term(layout, &[(4, Axis::X)]).is_err());
        assert!(pauli_term(layout, &[(0, Axis::X)]).is_err());
        assert!(pauli_term(layout, &[(2, Axis::X), (2, Axis::Z)]).is_err());
        assert!(pauli_term(layout, &[]).is_err());
    }

    #[test]
    fn builders_match_dense_kronecker_oracle_small_n() {
        for n in 2..=6 {
            let layout = RegisterLayout::system(n).unwrap();
            let p = IsingParams::standard(n);
            let h = build_ising(&p, layout).unwrap();
            let mut oracle = Array2::<Complex64>::zeros((1 << n, 1 << n));
            for i in 1..n {
                oracle = oracle - dense_pauli_oracle(layout, &[(i, Axis::Z), (i + 1, Axis::Z)]).mapv(|v| v * p.j);
            }
            for i in 1..=n {
                oracle = oracle + dense_pauli_oracle(layout, &[(i, Axis::X)]).mapv(|v| v * p.g);
                oracle = oracle + dense_pauli_oracle(layout, &[(i, Axis::Z)]).mapv(|v| v * p.h);
            }
            assert!(max_abs_diff(&h.to_dense(), &oracle) < 1e-14, "ising n={n}");

            let s = SqaParams::standard(n);
            let hs = build_sqa(&s, layout).unwrap();
            let mut oracle = Array2::<Complex64>::zeros((1 << n, 1 << n));
            for i in 1..n {
                oracle = oracle + dense_pauli_oracle(layout, &[(i, Axis::X), (i + 1, Axis::X)]).mapv(|v| v * s.lambda);
                oracle = oracle + dense_pauli_oracle(layout, &[(i, Axis::Y), (i + 1, Axis::Y)]).mapv(|v| v * s.lambda);
            }
            for i in 1..=n {
                oracle = oracle + dense_pauli_oracle(layout, &[(i, Axis::Y)]).mapv(|v| v * s.omega);
            }
            assert!(max_abs_diff(&hs.to_dense(), &oracle) < 1e-14, "sqa n={n}");
        }
    }

    #[test]
    fn single_spin_ising_eigenvalues() {
        let layout = RegisterLayout::system(1).unwrap();
        let p = IsingParams { j: 3.0, g: 1.05, h: -0.5, n: 1 };
        let h = build_ising(&p, layout).unwrap();
        let vals = linalg::eigvalsh(&h.to_dense()).unwrap();
        let r = (p.g * p.g + p.h * p.h).sqrt();
        assert!((vals[0] + r).abs() < 1e-12);
        assert!((vals[1] - r).abs() < 1e-12);
    }

    #[test]
    fn classical_two_spin_ising_eigenvalues() {
        let layout = RegisterLayout::system(2).unwrap();
        let p = IsingParams { j: 1.0, g: 0.0, h: 0.0, n: 2 };
        let h = build_ising(&p, layout).unwrap();
        let mut vals = linalg::eigvalsh(&h.to_dense()).unwrap();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect = [-1.0, -1.0, 1.0, 1.0];
        for (v, e) in vals.iter().zip(expect.iter()) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn classical_ising_spectrum_is_integer_multiples_of_j() {
        for n in 2..=6 {
            let layout = RegisterLayout::system(n).unwrap();
            let p = IsingParams { j: 1.0, g: 0.0, h: 0.0, n };
            let h = build_ising(&p, layout).unwrap();
            let vals = linalg::eigvalsh(&h.to_dense()).unwrap();
            for v in vals {
                assert!((v - v.round()).abs() < 1e-10, "n={n} v={v}");
            }
        }
    }

    #[test]
    fn two_site_xy_eigenvalues() {
        let layout = RegisterLayout::system(2).unwrap();
        let h = build_xy(1.0, 2, layout).unwrap();
        let vals = linalg::eigvalsh(&h.to_dense()).unwrap();
        let expect = [-2.0, 0.0, 0.0, 2.0];
        for (v, e) in vals.iter().zip(expect.iter()) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn three_site_xy_spectrum_symmetric_about_zero() {
        let layout = RegisterLayout::system(3).unwrap();
        let h = build_xy(1.0, 3, layout).unwrap();
        let vals = linalg::eigvalsh(&h.to_dense()).unwrap();
        for k in 0..vals.len() {
            let mirror = -vals[vals.len() - 1 - k];
            assert!((vals[k] - mirror).abs() < 1e-10);
        }
    }

    #[test]
    fn xy_commutes_with_total_magnetization() {
        let n = 4;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_xy(0.7, n, layout).unwrap().to_dense();
        let mut mz = Array2::<Complex64>::zeros((1 << n, 1 << n));
        for i in 1..=n {
            mz = mz + dense_pauli_oracle(layout, &[(i, Axis::Z)]);
        }
        let comm = h.dot(&mz) - mz.dot(&h);
        let max = comm.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(max < 1e-12);
    }

    #[test]
    fn sqa_with_zero_drive_equals_xy() {
        let n = 5;
        let layout = RegisterLayout::system(n).unwrap();
        let xy = build_xy(1.0, n, layout).unwrap();
        let sqa = build_sqa(&SqaParams { lambda: 1.0, omega: 0.0, n }, layout).unwrap();
        assert_eq!(max_abs_diff(&xy.to_dense(), &sqa.to_dense()), 0.0);
    }

    #[test]
    fn built_hamiltonians_are_hermitian() {
        let layout = RegisterLayout::system(6).unwrap();
        let h = build_ising(&IsingParams::standard(6), layout).unwrap();
        assert!(h.hermiticity_defect() <= 1e-12);
        let s = build_sqa(&SqaParams::standard(6), layout).unwrap();
        assert!(s.hermiticity_defect() <= 1e-12);
    }

    #[test]
    fn ancilla_layout_leaves_ancilla_untouched() {
        let n = 3;
        let layout = RegisterLayout::with_ancilla(n).unwrap();
        let h = build_ising(&IsingParams::standard(n), layout).unwrap();
        assert_eq!(h.dimension(), 1 << (n + 1));
        // block diagonal: no entry may couple different ancilla values
        let anc = 1 << n;
        for (r, c, _) in h.iter_entries() {
            assert_eq!(r & anc, c & anc);
        }
        // both ancilla blocks equal the system Hamiltonian
        let sys = build_ising(&IsingParams::standard(n), RegisterLayout::system(n).unwrap()).unwrap();
        for (r, c, v) in sys.iter_entries() {
            assert_eq!(h.entry(r, c), v);
            assert_eq!(h.entry(r | anc, c | anc), v);
        }
    }

    #[test]
    fn apply_matches_dense_oracle_and_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_sqa(&SqaParams::standard(n), layout).unwrap();
        let dense = h.to_dense();
        let dim = 1 << n;
        let rand_vec = |rng: &mut ChaCha8Rng| -> Vec<Complex64> {
            (0..dim)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect()
        };
        let u = rand_vec(&mut rng);
        let v = rand_vec(&mut rng);
        let hu = h.apply(&u).unwrap();
        for r in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..dim {
                acc += dense[(r, c)] * u[c];
            }
            assert!((acc - hu[r]).norm() < 1e-12);
        }
        // linearity
        let a = Complex64::new(0.3, -1.1);
        let b = Complex64::new(-0.8, 0.2);
        let combo: Vec<Complex64> = u.iter().zip(v.iter()).map(|(&x, &y)| a * x + b * y).collect();
        let h_combo = h.apply(&combo).unwrap();
        let hv = h.apply(&v).unwrap();
        for r in 0..dim {
            let expect = a * hu[r] + b * hv[r];
            assert!((h_combo[r] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn expectation_is_real_for_normalized_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 5;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_sqa(&SqaParams::standard(n), layout).unwrap();
        let dim = 1 << n;
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|c| *c /= norm);
        let e = h.expectation(&v).unwrap();
        assert!(e.im.abs() < 1e-12);
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let layout = RegisterLayout::system(2).unwrap();
        let h = build_xy(1.0, 2, layout).unwrap();
        let x = vec![Complex64::new(1.0, 0.0); 3];
        assert!(matches!(h.apply(&x), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn oversized_register_reports_resource_error() {
        // budget check fires before any allocation; layout cap keeps sizes sane
        let layout = RegisterLayout::system(29).unwrap();
        let err = build_ising(&IsingParams::standard(29), layout).unwrap_err();
        match err {
            Error::Resource { required_bytes, budget_bytes, .. } => {
                assert!(required_bytes > budget_bytes);
            }
            other => panic!("expected resource error, got {other:?}"),
        }
    }
}
