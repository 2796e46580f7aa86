//! Cyclic Jacobi eigensolvers for Hermitian (complex) and symmetric (real)
//! matrices.
//!
//! Each sweep annihilates every off-diagonal pair (p, q) with a unitary
//! two-plane rotation; for Hermitian input the rotation absorbs the phase of
//! the pivot entry so the 2×2 subproblem reduces to the real symmetric case.
//! Dimensions in this crate stay at or below 16 (state space) and 256
//! (tomography Gram matrices), where Jacobi converges in a handful of
//! sweeps and is effectively exact.

use num_complex::Complex64 as C64;

use super::matrix::ComplexMatrix;
use super::QlinError;

const MAX_SWEEPS: usize = 64;
const HERMITICITY_TOL: f64 = 1e-10;

/// Eigendecomposition of a Hermitian matrix: eigenvalues sorted descending,
/// eigenvectors as the columns of a unitary matrix in matching order.
pub fn eig_hermitian(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), QlinError> {
    if !m.is_square() {
        return Err(QlinError::Shape(format!("eig needs a square matrix, got {}x{}", m.rows(), m.cols())));
    }
    let dev = m.hermiticity_deviation();
    if dev > HERMITICITY_TOL {
        return Err(QlinError::NotHermitian { deviation: dev });
    }
    m.check_finite()?;

    let n = m.rows();
    // symmetrize to remove the sub-tolerance asymmetry before iterating
    let mut a = m.hermitian_part();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| evals[j].partial_cmp(&evals[i]).unwrap());

    let sorted_vals: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
    let sorted_vecs = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((sorted_vals, sorted_vecs))
}

/// One Jacobi rotation annihilating a[(p, q)].
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let abs = apq.norm();
    if abs == 0.0 {
        return;
    }
    let phase = apq / abs; // e^{i arg(a_pq)}
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let tau = (aqq - app) / (2.0 * abs);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // U restricted to the (p,q) plane: [[c, s], [-s e^{-iφ}, c e^{-iφ}]]
    let upq = C64::new(s, 0.0);
    let uqp = -phase.conj() * s;
    let uqq = phase.conj() * c;
    let n = a.rows();

    // A ← U† A U, applied as column then row updates
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c + akq * uqp;
        a[(k, q)] = akp * upq + akq * uqq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c + aqk * uqp.conj();
        a[(q, k)] = apk * upq.conj() + aqk * uqq.conj();
    }
    a[(p, q)] = C64::ZERO;
    a[(q, p)] = C64::ZERO;
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c + vkq * uqp;
        v[(k, q)] = vkp * upq + vkq * uqq;
    }
}

/// Eigendecomposition of a real symmetric matrix stored row-major.
/// Returns eigenvalues descending and column eigenvectors, like
/// [`eig_hermitian`] but without the complex arithmetic.
pub fn eig_symmetric(n: usize, m: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(m.len(), n * n);
    let mut a = m.to_vec();
    // symmetrize
    for p in 0..n {
        for q in (p + 1)..n {
            let avg = 0.5 * (a[p * n + q] + a[q * n + p]);
            a[p * n + q] = avg;
            a[q * n + p] = avg;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * c - akq * s;
                    a[k * n + q] = akp * s + akq * c;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = apk * c - aqk * s;
                    a[q * n + k] = apk * s + aqk * c;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * c - vkq * s;
                    v[k * n + q] = vkp * s + vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    order.sort_by(|&i, &j| evals[j].partial_cmp(&evals[i]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
    let mut sorted_vecs = vec![0.0; n * n];
    for (jnew, &jold) in order.iter().enumerate() {
        for i in 0..n {
            sorted_vecs[i * n + jnew] = v[i * n + jold];
        }
    }
    (sorted_vals, sorted_vecs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn reconstruct(vals: &[f64], vecs: &ComplexMatrix) -> ComplexMatrix {
        let n = vecs.rows();
        let lam = ComplexMatrix::from_fn(n, n, |i, j| {
            if i == j { C64::new(vals[i], 0.0) } else { C64::ZERO }
        });
        &(vecs * &lam) * &vecs.dagger()
    }

    #[test]
    fn diagonal_sorted_descending() {
        let m = ComplexMatrix::from_fn(3, 3, |i, j| {
            if i == j { c([3.0, 1.0, 2.0][i], 0.0) } else { C64::ZERO }
        });
        let (vals, _) = eig_hermitian(&m).unwrap();
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn pauli_x_eigensystem() {
        let m = ComplexMatrix::from_rows(2, 2, vec![C64::ZERO, C64::ONE, C64::ONE, C64::ZERO]).unwrap();
        let (vals, vecs) = eig_hermitian(&m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] + 1.0).abs() < 1e-12);
        // eigenvectors are (|0⟩ ± |1⟩)/√2 up to phase
        for j in 0..2 {
            let ratio = vecs[(1, j)] / vecs[(0, j)];
            let expect = if j == 0 { 1.0 } else { -1.0 };
            assert!((ratio - c(expect, 0.0)).norm() < 1e-12);
        }
        assert!((&reconstruct(&vals, &vecs) - &m).max_norm() < 1e-12);
    }

    #[test]
    fn random_hermitian_reconstruction() {
        // fixed pseudo-random Hermitian 8x8 via a simple LCG
        let mut state = 0x2545f4914f6cdd1d_u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut m = ComplexMatrix::zeros(8, 8);
        for i in 0..8 {
            for j in i..8 {
                let z = if i == j { c(next(), 0.0) } else { c(next(), next()) };
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        let (vals, vecs) = eig_hermitian(&m).unwrap();
        assert!((&reconstruct(&vals, &vecs) - &m).max_norm() < 1e-9);
        // unitarity of the eigenvector matrix
        let vv = &vecs.dagger() * &vecs;
        assert!((&vv - &ComplexMatrix::identity(8)).max_norm() < 1e-12);
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = ComplexMatrix::from_rows(2, 2, vec![C64::ZERO, C64::ONE, C64::ZERO, C64::ZERO]).unwrap();
        assert!(matches!(eig_hermitian(&m), Err(QlinError::NotHermitian { .. })));
    }

    #[test]
    fn real_symmetric_agrees_with_hermitian() {
        let entries = [4.0, 1.0, -2.0, 1.0, 3.0, 0.5, -2.0, 0.5, 1.0];
        let (vals, vecs) = eig_symmetric(3, &entries);
        let mc = ComplexMatrix::from_fn(3, 3, |i, j| c(entries[i * 3 + j], 0.0));
        let (vals_c, _) = eig_hermitian(&mc).unwrap();
        for (a, b) in vals.iter().zip(&vals_c) {
            assert!((a - b).abs() < 1e-10);
        }
        // reconstruction
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += vecs[i * 3 + k] * vals[k] * vecs[j * 3 + k];
                }
                assert!((acc - entries[i * 3 + j]).abs() < 1e-10);
            }
        }
    }
}
