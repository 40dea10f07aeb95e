//! Full eigendecomposition, density of states, Gibbs states, and thermal
//! reduced density matrices.
//!
//! The dense eigensolver is the only path to thermal quantities; n = 14
//! (dimension 16384) is the practical ceiling. Boltzmann weights are always
//! computed relative to the nearest spectral edge so that |beta| up to 500 is
//! overflow-safe.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{HermitianOperator, RegisterLayout};
use crate::observables::DensityMatrix;

/// Largest dimension the dense eigensolver accepts by default.
pub const DEFAULT_DENSE_LIMIT: usize = 1 << 14;

/// Complete eigensystem of a Hamiltonian.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: Option<Array2<Complex64>>,
    fingerprint: String,
    layout: RegisterLayout,
}

impl Spectrum {
    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn e_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn e_max(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }

    pub fn extremes(&self) -> (f64, f64) {
        (self.e_min(), self.e_max())
    }

    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn layout(&self) -> RegisterLayout {
        self.layout
    }

    /// Fingerprint of the source Hamiltonian.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn has_vectors(&self) -> bool {
        self.eigenvectors.is_some()
    }

    pub fn eigenvectors(&self) -> Option<&Array2<Complex64>> {
        self.eigenvectors.as_ref()
    }

    /// Column `k` of the eigenvector matrix.
    pub fn eigenvector(&self, k: usize) -> Option<ArrayView1<'_, Complex64>> {
        self.eigenvectors.as_ref().map(|v| v.column(k))
    }

    fn require_vectors(&self) -> Result<&Array2<Complex64>> {
        self.eigenvectors
            .as_ref()
            .ok_or_else(|| Error::invalid("spectrum was computed without eigenvectors"))
    }
}

/// How the operator can be made real symmetric before diagonalization.
enum Gauge {
    /// already real in the computational basis
    Identity,
    /// `U H U^dag` real with `U = diag((-i)^popcount)`
    PhasePerParity,
    /// genuinely complex
    None,
}

fn detect_gauge(h: &HermitianOperator) -> Gauge {
    let mut max_im_plain = 0.0f64;
    let mut max_im_rotated = 0.0f64;
    for (r, c, v) in h.iter_entries() {
        max_im_plain = max_im_plain.max(v.im.abs());
        // i^{pop(c) - pop(r)} * v
        let delta = (c.count_ones() as i32 - r.count_ones() as i32).rem_euclid(4);
        let rotated = match delta {
            0 => v,
            1 => Complex64::new(-v.im, v.re),
            2 => -v,
            _ => Complex64::new(v.im, -v.re),
        };
        max_im_rotated = max_im_rotated.max(rotated.im.abs());
    }
    if max_im_plain <= 1e-14 {
        Gauge::Identity
    } else if max_im_rotated <= 1e-14 {
        Gauge::PhasePerParity
    } else {
        Gauge::None
    }
}

fn dense_real_rotated(h: &HermitianOperator, rotate: bool) -> Array2<f64> {
    let d = h.dimension();
    let mut a = Array2::<f64>::zeros((d, d));
    for (r, c, v) in h.iter_entries() {
        let val = if rotate {
            let delta = (c.count_ones() as i32 - r.count_ones() as i32).rem_euclid(4);
            match delta {
                0 => v.re,
                1 => -v.im,
                2 => -v.re,
                _ => v.im,
            }
        } else {
            v.re
        };
        a[(r, c)] = val;
    }
    a
}

#[cfg(feature = "lapack")]
fn eigh_real_dense(a: Array2<f64>, want_vectors: bool) -> Result<(Vec<f64>, Option<Array2<f64>>)> {
    use ndarray_linalg::{EigValshInto, EighInto, UPLO};
    if want_vectors {
        let (vals, vecs) = a
            .eigh_into(UPLO::Lower)
            .map_err(|e| Error::invalid(format!("dense eigensolver failed: {e}")))?;
        Ok((vals.to_vec(), Some(vecs)))
    } else {
        let vals = a
            .eigvalsh_into(UPLO::Lower)
            .map_err(|e| Error::invalid(format!("dense eigensolver failed: {e}")))?;
        Ok((vals.to_vec(), None))
    }
}

#[cfg(not(feature = "lapack"))]
fn eigh_real_dense(a: Array2<f64>, want_vectors: bool) -> Result<(Vec<f64>, Option<Array2<f64>>)> {
    let complex = a.mapv(|v| Complex64::new(v, 0.0));
    if want_vectors {
        let (vals, vecs) = crate::linalg::eigh(&complex)?;
        Ok((vals, Some(vecs.mapv(|v| v.re))))
    } else {
        Ok((crate::linalg::eigvalsh(&complex)?, None))
    }
}

#[cfg(feature = "lapack")]
fn eigh_complex_dense(
    a: Array2<Complex64>,
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<Array2<Complex64>>)> {
    use ndarray_linalg::{EigValshInto, EighInto, UPLO};
    if want_vectors {
        let (vals, vecs) = a
            .eigh_into(UPLO::Lower)
            .map_err(|e| Error::invalid(format!("dense eigensolver failed: {e}")))?;
        Ok((vals.to_vec(), Some(vecs)))
    } else {
        let vals = a
            .eigvalsh_into(UPLO::Lower)
            .map_err(|e| Error::invalid(format!("dense eigensolver failed: {e}")))?;
        Ok((vals.to_vec(), None))
    }
}

#[cfg(not(feature = "lapack"))]
fn eigh_complex_dense(
    a: Array2<Complex64>,
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<Array2<Complex64>>)> {
    if want_vectors {
        let (vals, vecs) = crate::linalg::eigh(&a)?;
        Ok((vals, Some(vecs)))
    } else {
        Ok((crate::linalg::eigvalsh(&a)?, None))
    }
}

/// Complete eigendecomposition of a sparse Hermitian operator.
pub fn full_spectrum(h: &HermitianOperator, want_vectors: bool) -> Result<Spectrum> {
    full_spectrum_with_limit(h, want_vectors, DEFAULT_DENSE_LIMIT)
}

/// As [`full_spectrum`] with an explicit dense-dimension ceiling.
pub fn full_spectrum_with_limit(
    h: &HermitianOperator,
    want_vectors: bool,
    dense_limit: usize,
) -> Result<Spectrum> {
    let d = h.dimension();
    if d > dense_limit {
        return Err(Error::Resource {
            what: format!("dense eigendecomposition at dimension {d}"),
            required_bytes: (d as u64) * (d as u64) * if want_vectors { 16 } else { 8 },
            budget_bytes: (dense_limit as u64) * (dense_limit as u64) * 16,
            hint: "use a smaller chain or eigenvalue-only mode".into(),
        });
    }
    let fingerprint = h.fingerprint();
    let (eigenvalues, eigenvectors) = match detect_gauge(h) {
        Gauge::Identity => {
            let (vals, vecs) = eigh_real_dense(dense_real_rotated(h, false), want_vectors)?;
            (vals, vecs.map(|m| m.mapv(|v| Complex64::new(v, 0.0))))
        }
        Gauge::PhasePerParity => {
            let (vals, vecs) = eigh_real_dense(dense_real_rotated(h, true), want_vectors)?;
            let vecs = vecs.map(|m| {
                // undo the gauge: v[b] = i^{popcount(b)} w[b]
                let mut out = m.mapv(|v| Complex64::new(v, 0.0));
                for b in 0..d {
                    let phase = match (b.count_ones() % 4) as u8 {
                        0 => Complex64::new(1.0, 0.0),
                        1 => Complex64::new(0.0, 1.0),
                        2 => Complex64::new(-1.0, 0.0),
                        _ => Complex64::new(0.0, -1.0),
                    };
                    out.row_mut(b).mapv_inplace(|v| v * phase);
                }
                out
            });
            (vals, vecs)
        }
        Gauge::None => {
            let dense = h.to_dense();
            eigh_complex_dense(dense, want_vectors)?
        }
    };
    Ok(Spectrum { eigenvalues, eigenvectors, fingerprint, layout: h.layout() })
}

/// Histogram of eigenvalue count versus energy density.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DosHistogram {
    /// `bins + 1` edges spanning `[0, 1]`
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Hilbert-space dimension the counts sum to
    pub dimension: usize,
    /// fingerprint of the source Hamiltonian
    pub fingerprint: String,
}

impl DosHistogram {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Center of the most populated bin.
    pub fn argmax_center(&self) -> f64 {
        let k = self
            .counts
            .iter()
            .enumerate()
            .max_by_key(|(_, &c)| c)
            .map(|(k, _)| k)
            .unwrap_or(0);
        0.5 * (self.bin_edges[k] + self.bin_edges[k + 1])
    }
}

/// Bin the spectrum by energy density over uniform bins in `[0, 1]`.
pub fn density_of_states(s: &Spectrum, bins: usize) -> Result<DosHistogram> {
    if bins < 2 {
        return Err(Error::invalid("need at least two bins"));
    }
    if s.eigenvalues().is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    let (e_min, e_max) = s.extremes();
    let span = e_max - e_min;
    if span <= 0.0 {
        return Err(Error::invalid("degenerate spectrum span"));
    }
    let mut counts = vec![0u64; bins];
    for &e in s.eigenvalues() {
        let eps = (e - e_min) / span;
        let k = ((eps * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let bin_edges: Vec<f64> = (0..=bins).map(|k| k as f64 / bins as f64).collect();
    Ok(DosHistogram {
        bin_edges,
        counts,
        dimension: s.dimension(),
        fingerprint: s.fingerprint().to_string(),
    })
}

/// Boltzmann weights `exp(-beta (E_k - E_ref))` with the edge-shifted
/// reference, plus their sum.
fn boltzmann_weights(evals: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let e_ref = if beta > 0.0 { evals[0] } else { evals[evals.len() - 1] };
    let w: Vec<f64> = evals.iter().map(|&e| (-beta * (e - e_ref)).exp()).collect();
    let z = w.iter().sum();
    (w, z)
}

/// Full-register Gibbs state `exp(-beta H)/Z` from an eigensystem.
pub fn gibbs_state(s: &Spectrum, beta: f64) -> Result<DensityMatrix> {
    if !beta.is_finite() {
        return Err(Error::invalid("beta must be finite"));
    }
    let vecs = s.require_vectors()?;
    let d = s.dimension();
    let (w, z) = boltzmann_weights(s.eigenvalues(), beta);
    let mut rho = Array2::<Complex64>::zeros((d, d));
    for k in 0..d {
        let wk = w[k] / z;
        if wk == 0.0 {
            continue;
        }
        let v = vecs.column(k);
        for i in 0..d {
            let vi = v[i] * wk;
            if vi == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..d {
                rho[(i, j)] += vi * v[j].conj();
            }
        }
    }
    let bits: Vec<usize> = (0..s.layout().total_qubits()).collect();
    DensityMatrix::new(rho, bits)
}

/// Thermal reduced density matrix over a system-qubit subset (register bit
/// positions), accumulated eigenvector by eigenvector without forming the
/// full Gibbs matrix.
pub fn thermal_rdm(s: &Spectrum, beta: f64, keep: &[usize]) -> Result<DensityMatrix> {
    if !beta.is_finite() {
        return Err(Error::invalid("beta must be finite"));
    }
    if keep.is_empty() {
        return Err(Error::invalid("empty qubit subset"));
    }
    let n_sys = s.layout().n_system();
    if s.layout().has_ancilla() {
        return Err(Error::invalid("thermal state is defined for the system Hamiltonian only"));
    }
    if keep.iter().any(|&b| b >= n_sys) {
        return Err(Error::invalid(
            "subset may not include the ancilla or bits outside the system register",
        ));
    }
    let vecs = s.require_vectors()?;
    let d = s.dimension();
    let (w, z) = boltzmann_weights(s.eigenvalues(), beta);
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    let kd = 1usize << keep_sorted.len();
    let mut acc = Array2::<Complex64>::zeros((kd, kd));
    let layout = s.layout();
    for k in 0..d {
        let wk = w[k] / z;
        if wk < 1e-300 {
            continue;
        }
        let v: Vec<Complex64> = vecs.column(k).to_vec();
        let psi = crate::state::PureState::normalized(v, layout)?;
        let rho_k = crate::observables::partial_trace(&psi, &keep_sorted)?;
        acc.scaled_add(Complex64::new(wk, 0.0), rho_k.matrix());
    }
    DensityMatrix::new(acc, keep_sorted)
}

/// `Tr[rho(beta) O]` via the eigenbasis.
pub fn thermal_expectation(s: &Spectrum, beta: f64, o: &HermitianOperator) -> Result<f64> {
    if o.dimension() != s.dimension() {
        return Err(Error::DimensionMismatch { left: s.dimension(), right: o.dimension() });
    }
    let vecs = s.require_vectors()?;
    let (w, z) = boltzmann_weights(s.eigenvalues(), beta);
    let mut acc = 0.0;
    for k in 0..s.dimension() {
        let wk = w[k] / z;
        if wk < 1e-300 {
            continue;
        }
        let v: Vec<Complex64> = vecs.column(k).to_vec();
        acc += wk * o.expectation(&v)?.re;
    }
    Ok(acc)
}

const CACHE_MAGIC: &[u8; 8] = b"SPECTR01";

/// Cache file path for a fingerprint inside a directory.
pub fn cache_path(dir: &Path, fingerprint: &str) -> PathBuf {
    dir.join(format!("spectrum-{}.bin", &fingerprint[..16.min(fingerprint.len())]))
}

/// Persist eigenvalues (vectors are never cached) keyed by the Hamiltonian
/// fingerprint. Writes are atomic via a temp file rename.
pub fn save_spectrum(s: &Spectrum, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = cache_path(dir, s.fingerprint());
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        f.write_all(CACHE_MAGIC)?;
        let fp = s.fingerprint().as_bytes();
        f.write_all(&(fp.len() as u64).to_le_bytes())?;
        f.write_all(fp)?;
        f.write_all(&(s.layout().n_system() as u64).to_le_bytes())?;
        f.write_all(&[u8::from(s.layout().has_ancilla())])?;
        f.write_all(&(s.dimension() as u64).to_le_bytes())?;
        for &e in s.eigenvalues() {
            f.write_all(&e.to_le_bytes())?;
        }
    }
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Load cached eigenvalues for a fingerprint, if present and intact.
pub fn load_spectrum(dir: &Path, fingerprint: &str) -> Result<Option<Spectrum>> {
    let path = cache_path(dir, fingerprint);
    if !path.exists() {
        return Ok(None);
    }
    let mut f = std::io::BufReader::new(std::fs::File::open(&path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Ok(None);
    }
    let mut len8 = [0u8; 8];
    f.read_exact(&mut len8)?;
    let fp_len = u64::from_le_bytes(len8) as usize;
    if fp_len > 1024 {
        return Ok(None);
    }
    let mut fp = vec![0u8; fp_len];
    f.read_exact(&mut fp)?;
    if fp != fingerprint.as_bytes() {
        return Ok(None);
    }
    f.read_exact(&mut len8)?;
    let n_system = u64::from_le_bytes(len8) as usize;
    let mut anc = [0u8; 1];
    f.read_exact(&mut anc)?;
    f.read_exact(&mut len8)?;
    let dim = u64::from_le_bytes(len8) as usize;
    let layout = RegisterLayout::new(n_system, anc[0] != 0)?;
    if layout.dimension() != dim {
        return Ok(None);
    }
    let mut eigenvalues = Vec::with_capacity(dim);
    let mut buf = [0u8; 8];
    for _ in 0..dim {
        f.read_exact(&mut buf)?;
        eigenvalues.push(f64::from_le_bytes(buf));
    }
    Ok(Some(Spectrum {
        eigenvalues,
        eigenvectors: None,
        fingerprint: fingerprint.to_string(),
        layout,
    }))
}

/// Eigenvalue-only spectrum with a read-through disk cache.
pub fn cached_full_spectrum(
    h: &HermitianOperator,
    want_vectors: bool,
    cache_dir: Option<&Path>,
) -> Result<Spectrum> {
    if !want_vectors {
        if let Some(dir) = cache_dir {
            if let Some(s) = load_spectrum(dir, &h.fingerprint())? {
                return Ok(s);
            }
        }
    }
    let s = full_spectrum(h, want_vectors)?;
    if let Some(dir) = cache_dir {
        save_spectrum(&s, dir)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_ising, build_sqa, pauli_term, Axis, IsingParams, SqaParams};
    use crate::linalg;
    use crate::observables::partial_trace_rho;
    use crate::state::thermal_energy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ising_spectrum(n: usize, want_vectors: bool) -> (HermitianOperator, Spectrum) {
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_ising(&IsingParams::standard(n), layout).unwrap();
        let s = full_spectrum(&h, want_vectors).unwrap();
        (h, s)
    }

    #[test]
    fn single_x_spectrum() {
        let layout = RegisterLayout::system(1).unwrap();
        let h = pauli_term(layout, &[(1, Axis::X)]).unwrap();
        let s = full_spectrum(&h, false).unwrap();
        assert!((s.e_min() + 1.0).abs() < 1e-12);
        assert!((s.e_max() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_site_ising_matches_dense_oracle() {
        let layout = RegisterLayout::system(2).unwrap();
        let h = build_ising(&IsingParams::standard(2), layout).unwrap();
        let s = full_spectrum(&h, true).unwrap();
        let oracle = linalg::eigvalsh(&h.to_dense()).unwrap();
        for (a, b) in s.eigenvalues().iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // reconstruction residual
        let vecs = s.eigenvectors().unwrap();
        let dense = h.to_dense();
        let scale = s.eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..4 {
                    acc += vecs[(i, k)] * s.eigenvalues()[k] * vecs[(j, k)].conj();
                }
                assert!((acc - dense[(i, j)]).norm() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn gauge_detection_matches_models() {
        let layout = RegisterLayout::system(4).unwrap();
        let ising = build_ising(&IsingParams::standard(4), layout).unwrap();
        assert!(matches!(detect_gauge(&ising), Gauge::Identity));
        let sqa = build_sqa(&SqaParams::standard(4), layout).unwrap();
        assert!(matches!(detect_gauge(&sqa), Gauge::PhasePerParity));
        // a y-field on one qubit of an Ising chain fits neither gauge
        let y = pauli_term(layout, &[(1, Axis::Y), (2, Axis::Y), (3, Axis::X)]).unwrap();
        assert!(matches!(detect_gauge(&y), Gauge::None));
    }

    #[test]
    fn sqa_gauge_spectrum_matches_generic_path() {
        // eigenvalues via the phase gauge must agree with the plain complex path
        let n = 6;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_sqa(&SqaParams::standard(n), layout).unwrap();
        let via_gauge = full_spectrum(&h, true).unwrap();
        let oracle = linalg::eigvalsh(&h.to_dense()).unwrap();
        for (a, b) in via_gauge.eigenvalues().iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        // vectors solve the original (complex) eigenproblem
        let vecs = via_gauge.eigenvectors().unwrap();
        let dense = h.to_dense();
        let d = 1 << n;
        for k in [0usize, d / 2, d - 1] {
            let v = vecs.column(k);
            let lam = via_gauge.eigenvalues()[k];
            let mut res = 0.0f64;
            for i in 0..d {
                let mut hv = Complex64::new(0.0, 0.0);
                for j in 0..d {
                    hv += dense[(i, j)] * v[j];
                }
                res = res.max((hv - lam * v[i]).norm());
            }
            assert!(res < 1e-9, "residual {res} at k={k}");
        }
    }

    #[test]
    fn dense_limit_respected() {
        let layout = RegisterLayout::system(6).unwrap();
        let h = build_ising(&IsingParams::standard(6), layout).unwrap();
        let err = full_spectrum_with_limit(&h, false, 32).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }

    #[test]
    fn dos_counts_complete_and_match_brute_force() {
        let (_, s) = ising_spectrum(4, false);
        let dos = density_of_states(&s, 10).unwrap();
        assert_eq!(dos.counts.iter().sum::<u64>(), 16);
        // brute-force binning of the 16 eigenvalues
        let (e_min, e_max) = s.extremes();
        let mut brute = vec![0u64; 10];
        for &e in s.eigenvalues() {
            let eps = (e - e_min) / (e_max - e_min);
            let k = ((eps * 10.0) as usize).min(9);
            brute[k] += 1;
        }
        assert_eq!(dos.counts, brute);
        assert!(density_of_states(&s, 1).is_err());
    }

    #[test]
    fn dos_invariant_under_affine_rescaling() {
        let n = 5;
        let layout = RegisterLayout::system(n).unwrap();
        let p = IsingParams::standard(n);
        let h = build_ising(&p, layout).unwrap();
        let s1 = full_spectrum(&h, false).unwrap();
        let scaled = build_ising(&IsingParams { j: 3.0 * p.j, g: 3.0 * p.g, h: 3.0 * p.h, n }, layout).unwrap();
        let s2 = full_spectrum(&scaled, false).unwrap();
        let d1 = density_of_states(&s1, 40).unwrap();
        let d2 = density_of_states(&s2, 40).unwrap();
        assert_eq!(d1.counts, d2.counts);
    }

    #[test]
    fn gibbs_state_limits_and_oracle() {
        let n = 4;
        let (h, s) = ising_spectrum(n, true);
        let d = 1 << n;
        // beta = 0: maximally mixed
        let rho0 = gibbs_state(&s, 0.0).unwrap();
        for i in 0..d {
            for j in 0..d {
                let expect = if i == j { 1.0 / d as f64 } else { 0.0 };
                assert!((rho0.matrix()[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-10);
            }
        }
        // energy decreases monotonically with beta
        let mut last = f64::INFINITY;
        for k in 0..=20 {
            let beta = -2.0 + 0.2 * k as f64;
            let e = thermal_energy(s.eigenvalues(), beta);
            assert!(e < last);
            last = e;
        }
        // matrix-exponential series oracle at beta = 0.37
        let beta = 0.37;
        let dense = h.to_dense();
        // scaled series: exp(-beta(H - E_min)) via 60 Taylor terms
        let e_min = s.e_min();
        let mut shifted = dense.clone();
        for i in 0..d {
            shifted[(i, i)] -= Complex64::new(e_min, 0.0);
        }
        let mut term = Array2::<Complex64>::eye(d);
        let mut series = Array2::<Complex64>::eye(d);
        for k in 1..60 {
            term = term.dot(&shifted).mapv(|v| v * Complex64::new(-beta / k as f64, 0.0));
            series = series + &term;
        }
        let z: Complex64 = (0..d).map(|i| series[(i, i)]).sum();
        let oracle = series.mapv(|v| v / z);
        let rho = gibbs_state(&s, beta).unwrap();
        let max = rho
            .matrix()
            .iter()
            .zip(oracle.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max < 1e-10, "gibbs vs series oracle: {max}");
        assert!(gibbs_state(&s, f64::NAN).is_err());
    }

    #[test]
    fn gibbs_commutes_with_hamiltonian() {
        let n = 6;
        let (h, s) = ising_spectrum(n, true);
        let rho = gibbs_state(&s, 0.43).unwrap();
        let dense = h.to_dense();
        let comm = rho.matrix().dot(&dense) - dense.dot(rho.matrix());
        let max = comm.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(max <= 1e-9);
    }

    #[test]
    fn thermal_rdm_matches_full_gibbs_oracle() {
        let n = 6;
        let (_, s) = ising_spectrum(n, true);
        let beta = 0.5;
        let keep = vec![4usize, 5];
        let direct = thermal_rdm(&s, beta, &keep).unwrap();
        let full = gibbs_state(&s, beta).unwrap();
        let oracle = partial_trace_rho(&full, &keep).unwrap();
        let max = direct
            .matrix()
            .iter()
            .zip(oracle.matrix().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max < 1e-10, "thermal rdm vs oracle: {max}");
        assert!((direct.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn thermal_rdm_beta_zero_is_maximally_mixed() {
        let (_, s) = ising_spectrum(5, true);
        let rho = thermal_rdm(&s, 0.0, &[0, 2, 4]).unwrap();
        let d = 8;
        for i in 0..d {
            for j in 0..d {
                let expect = if i == j { 1.0 / d as f64 } else { 0.0 };
                assert!((rho.matrix()[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn thermal_rdm_rejects_ancilla_subsets() {
        let layout = RegisterLayout::with_ancilla(3).unwrap();
        let h = build_ising(&IsingParams::standard(3), layout).unwrap();
        let s = full_spectrum(&h, true).unwrap();
        assert!(thermal_rdm(&s, 0.1, &[0]).is_err());

        let (_, s_sys) = ising_spectrum(3, true);
        assert!(thermal_rdm(&s_sys, 0.1, &[3]).is_err());
    }

    #[test]
    fn thermal_expectation_basics_and_oracle() {
        let n = 6;
        let layout = RegisterLayout::system(n).unwrap();
        let h = build_ising(&IsingParams::standard(n), layout).unwrap();
        let s = full_spectrum(&h, true).unwrap();
        // beta = 0: single Pauli averages to zero, H to the spectral mean
        let sx = pauli_term(layout, &[(3, Axis::X)]).unwrap();
        assert!(thermal_expectation(&s, 0.0, &sx).unwrap().abs() < 1e-10);
        let mean = s.eigenvalues().iter().sum::<f64>() / s.dimension() as f64;
        assert!((thermal_expectation(&s, 0.0, &h).unwrap() - mean).abs() < 1e-9);
        // beta = 0.7 vs dense-Gibbs oracle
        let beta = 0.7;
        let rho = gibbs_state(&s, beta).unwrap();
        let dense_o = sx.to_dense();
        let mut oracle = Complex64::new(0.0, 0.0);
        for i in 0..s.dimension() {
            for j in 0..s.dimension() {
                oracle += rho.matrix()[(i, j)] * dense_o[(j, i)];
            }
        }
        let got = thermal_expectation(&s, beta, &sx).unwrap();
        assert!((got - oracle.re).abs() < 1e-10);
        // dimension mismatch
        let small = pauli_term(RegisterLayout::system(2).unwrap(), &[(1, Axis::X)]).unwrap();
        assert!(thermal_expectation(&s, 0.1, &small).is_err());
    }

    #[test]
    fn spectrum_cache_round_trip() {
        let dir = std::env::temp_dir().join(format!("spec-cache-test-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let layout = RegisterLayout::system(4).unwrap();
        let h = build_sqa(&SqaParams::standard(4), layout).unwrap();
        let s = cached_full_spectrum(&h, false, Some(&dir)).unwrap();
        let loaded = load_spectrum(&dir, &h.fingerprint()).unwrap().expect("cache hit");
        assert_eq!(loaded.eigenvalues().len(), s.eigenvalues().len());
        for (a, b) in loaded.eigenvalues().iter().zip(s.eigenvalues().iter()) {
            assert_eq!(a, b, "cache must be bit-exact");
        }
        // read-through on second call
        let again = cached_full_spectrum(&h, false, Some(&dir)).unwrap();
        assert_eq!(again.eigenvalues(), s.eigenvalues());
        // unknown fingerprint misses
        assert!(load_spectrum(&dir, "deadbeef00000000deadbeef").unwrap().is_none());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn eigenvector_residuals_on_random_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 6;
        let (h, s) = ising_spectrum(n, true);
        let dense = h.to_dense();
        let d = 1 << n;
        let norm_h = s.eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..8 {
            let k = rng.gen_range(0..d);
            let v = s.eigenvector(k).unwrap();
            let lam = s.eigenvalues()[k];
            let mut res = 0.0f64;
            for i in 0..d {
                let mut hv = Complex64::new(0.0, 0.0);
                for j in 0..d {
                    hv += dense[(i, j)] * v[j];
                }
                res = res.max((hv - lam * v[i]).norm());
            }
            assert!(res <= 1e-8 * norm_h.max(1.0));
        }
    }
}
