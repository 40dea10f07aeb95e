//! Dense Hermitian eigensolver, self-contained.
//!
//! Householder reduction to real symmetric tridiagonal form followed by
//! implicit-shift QL iteration (EISPACK `htridi`/`tql2` lineage). Serial and
//! allocation-light, so results are bit-reproducible across runs; used for the
//! small reduced density matrices in the observable hot loop and as the
//! fallback spectrum path when LAPACK is not linked (e.g. wasm).

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(a: &Array2<Complex64>) -> Result<Vec<f64>> {
    let (mut diag, mut off, _) = householder_tridiag(a, false)?;
    tql(&mut diag, &mut off, None)?;
    diag.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(diag)
}

/// Full eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues ascending and the unitary whose column `k` is the
/// eigenvector for eigenvalue `k`.
pub fn eigh(a: &Array2<Complex64>) -> Result<(Vec<f64>, Array2<Complex64>)> {
    let d = a.nrows();
    let (mut diag, mut off, q) = householder_tridiag(a, true)?;
    let q = q.expect("vectors requested");
    // Real orthogonal eigenvectors of the tridiagonal matrix.
    let mut z = Array2::<f64>::eye(d);
    tql(&mut diag, &mut off, Some(&mut z))?;

    // Sort ascending, permuting columns of z alongside.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let evals: Vec<f64> = order.iter().map(|&k| diag[k]).collect();

    // vectors = Q * Z with columns permuted; accumulate directly.
    let mut vecs = Array2::<Complex64>::zeros((d, d));
    for (col, &k) in order.iter().enumerate() {
        for i in 0..d {
            let mut acc = C_ZERO;
            for l in 0..d {
                acc += q[(i, l)] * z[(l, k)];
            }
            vecs[(i, col)] = acc;
        }
    }
    Ok((evals, vecs))
}

/// Eigendecomposition of a real symmetric tridiagonal matrix given by its
/// diagonal and subdiagonal (`off[k]` couples sites `k` and `k+1`). Returns
/// `(eigenvalues, Z)` with `Z` column-orthogonal; order unspecified.
pub(crate) fn sym_tridiag_eig(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Array2<f64>)> {
    let m = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; m];
    e[..off.len().min(m.saturating_sub(1))]
        .copy_from_slice(&off[..off.len().min(m.saturating_sub(1))]);
    let mut z = Array2::<f64>::eye(m);
    tql(&mut d, &mut e, Some(&mut z))?;
    Ok((d, z))
}

/// Householder reduction of Hermitian `a` to real symmetric tridiagonal form.
///
/// Returns `(diag, offdiag, Q)` with `offdiag[k]` linking sites `k` and `k+1`
/// (`offdiag[d-1]` unused). When `want_q` is set, `Q` satisfies
/// `a = Q T Q^dag` with `T` the real tridiagonal matrix.
fn householder_tridiag(
    a: &Array2<Complex64>,
    want_q: bool,
) -> Result<(Vec<f64>, Vec<f64>, Option<Array2<Complex64>>)> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::DimensionMismatch {
            left: d,
            right: a.ncols(),
        });
    }
    if d == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    let mut m = a.clone();
    let mut reflectors: Vec<(usize, Array1<Complex64>)> = Vec::new();
    let mut sub = vec![C_ZERO; d.saturating_sub(1)];

    for k in 0..d.saturating_sub(1) {
        let tail = d - k - 1;
        // norm of the column below the diagonal
        let mut sigma2 = 0.0;
        for i in 0..tail {
            sigma2 += m[(k + 1 + i, k)].norm_sqr();
        }
        let sigma = sigma2.sqrt();
        if sigma == 0.0 {
            sub[k] = C_ZERO;
            continue;
        }
        let x0 = m[(k + 1, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { Complex64::new(1.0, 0.0) };
        let beta = -phase * sigma;
        // v = x - beta e1, normalized
        let mut v = Array1::<Complex64>::zeros(tail);
        for i in 0..tail {
            v[i] = m[(k + 1 + i, k)];
        }
        v[0] -= beta;
        let vnorm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            sub[k] = beta;
            continue;
        }
        v.mapv_inplace(|c| c / vnorm);

        // rank-2 update of the trailing Hermitian block: A' = A - v w^dag - w v^dag
        let mut p = Array1::<Complex64>::zeros(tail);
        for i in 0..tail {
            let mut acc = C_ZERO;
            for j in 0..tail {
                acc += m[(k + 1 + i, k + 1 + j)] * v[j];
            }
            p[i] = acc;
        }
        let mut kappa = C_ZERO;
        for i in 0..tail {
            kappa += v[i].conj() * p[i];
        }
        let w: Array1<Complex64> = p.iter().zip(v.iter()).map(|(&pi, &vi)| 2.0 * (pi - kappa * vi)).collect();
        for i in 0..tail {
            for j in 0..tail {
                let upd = v[i] * w[j].conj() + w[i] * v[j].conj();
                m[(k + 1 + i, k + 1 + j)] -= upd;
            }
        }
        sub[k] = beta;
        if want_q {
            reflectors.push((k, v));
        }
    }

    // Phase similarity making the subdiagonal real non-negative.
    let mut diag = vec![0.0; d];
    for i in 0..d {
        diag[i] = m[(i, i)].re;
    }
    let mut off = vec![0.0; d];
    let mut phases = vec![Complex64::new(1.0, 0.0); d];
    for k in 0..d.saturating_sub(1) {
        let e = sub[k];
        let r = e.norm();
        off[k] = r;
        let ph = if r > 0.0 { e / r } else { Complex64::new(1.0, 0.0) };
        phases[k + 1] = phases[k] * ph.conj();
    }

    let q = if want_q {
        // Q = (P_0 P_1 ... P_{d-2}) D^dag, applied to the identity.
        let mut q = Array2::<Complex64>::eye(d);
        for (k, v) in reflectors.iter().rev() {
            let tail = v.len();
            // Q <- P_k Q, P_k acts on rows k+1..
            for col in 0..d {
                let mut dot = C_ZERO;
                for i in 0..tail {
                    dot += v[i].conj() * q[(k + 1 + i, col)];
                }
                let dot2 = 2.0 * dot;
                for i in 0..tail {
                    let delta = dot2 * v[i];
                    q[(k + 1 + i, col)] -= delta;
                }
            }
        }
        // column scaling by conj(phases)
        for j in 0..d {
            let s = phases[j].conj();
            for i in 0..d {
                q[(i, j)] *= s;
            }
        }
        Some(q)
    } else {
        None
    };

    Ok((diag, off, q))
}

/// Implicit-shift QL iteration on a real symmetric tridiagonal matrix.
///
/// `diag` receives the eigenvalues (unsorted); when `z` is given its columns
/// are rotated alongside so that column `k` ends up as the eigenvector of
/// eigenvalue `diag[k]`.
fn tql(diag: &mut [f64], off: &mut [f64], mut z: Option<&mut Array2<f64>>) -> Result<()> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    // shift off-diagonals down: e[i] couples (i, i+1); EISPACK convention uses e[0..n-1]
    for l in 0..n {
        let mut iter = 0;
        loop {
            // find small off-diagonal element
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::Convergence {
                    residual: off[l].abs(),
                    substeps: iter,
                    tolerance: f64::EPSILON,
                });
            }
            // Wilkinson shift
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + if g >= 0.0 { r.abs() } else { -r.abs() });
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut annihilated = false;
            for i in (l..m).rev() {
                let mut f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    // rotation annihilated early; drop the shift and resweep
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    annihilated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                if let Some(zm) = z.as_deref_mut() {
                    for k in 0..zm.nrows() {
                        f = zm[(k, i + 1)];
                        zm[(k, i + 1)] = s * zm[(k, i)] + c * f;
                        zm[(k, i)] = c * zm[(k, i)] - s * f;
                    }
                }
            }
            if annihilated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(d: usize, rng: &mut impl Rng) -> Array2<Complex64> {
        let mut a = Array2::<Complex64>::zeros((d, d));
        for i in 0..d {
            a[(i, i)] = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..d {
                let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                a[(i, j)] = v;
                a[(j, i)] = v.conj();
            }
        }
        a
    }

    #[test]
    fn pauli_z_eigensystem() {
        let a = array![
            [Complex64::new(1.0, 0.0), C_ZERO],
            [C_ZERO, Complex64::new(-1.0, 0.0)]
        ];
        let vals = eigvalsh(&a).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pauli_y_eigensystem() {
        let a = array![
            [C_ZERO, Complex64::new(0.0, -1.0)],
            [Complex64::new(0.0, 1.0), C_ZERO]
        ];
        let (vals, vecs) = eigh(&a).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        // residual check A v = lambda v
        for k in 0..2 {
            for i in 0..2 {
                let mut av = C_ZERO;
                for j in 0..2 {
                    av += a[(i, j)] * vecs[(j, k)];
                }
                assert!((av - vals[k] * vecs[(i, k)]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn random_matrices_residual_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &d in &[1usize, 2, 3, 5, 8, 16, 33] {
            let a = random_hermitian(d, &mut rng);
            let (vals, vecs) = eigh(&a).unwrap();
            // ascending
            for k in 1..d {
                assert!(vals[k] >= vals[k - 1]);
            }
            let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for k in 0..d {
                for i in 0..d {
                    let mut av = C_ZERO;
                    for j in 0..d {
                        av += a[(i, j)] * vecs[(j, k)];
                    }
                    assert!(
                        (av - vals[k] * vecs[(i, k)]).norm() < 1e-10 * scale.max(1.0),
                        "residual too large at d={d}"
                    );
                }
            }
            // orthonormal columns
            for p in 0..d {
                for q in 0..d {
                    let mut dot = C_ZERO;
                    for i in 0..d {
                        dot += vecs[(i, p)].conj() * vecs[(i, q)];
                    }
                    let expect = if p == q { 1.0 } else { 0.0 };
                    assert!((dot - expect).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn trace_and_frobenius_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_hermitian(24, &mut rng);
        let vals = eigvalsh(&a).unwrap();
        let tr: f64 = (0..24).map(|i| a[(i, i)].re).sum();
        assert!((vals.iter().sum::<f64>() - tr).abs() < 1e-10);
        let fro2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
        let lam2: f64 = vals.iter().map(|v| v * v).sum();
        assert!((fro2 - lam2).abs() < 1e-8);
    }
}
