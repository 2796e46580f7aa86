//! Validated quantum-state types: normalized kets and physical density
//! matrices, with the tensor/partial-trace/projection operations the rest of
//! the crate is built on.
//!
//! Basis conventions are fixed crate-wide: polarization H = 0, V = 1;
//! time bin early = 0, late = 1; the composite hyper space is ordered
//! (pol_XX, pol_X, tb_XX, tb_X), so a 16-dim state is (2⊗2) ⊗ (2⊗2) with the
//! polarization pair as the first factor.

use num_complex::Complex64 as C64;

use super::eig::eig_hermitian;
use super::matrix::ComplexMatrix;
use super::QlinError;

/// Largest composite dimension the crate supports.
pub const MAX_DIM: usize = 16;

const HERMITICITY_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const PSD_FLOOR: f64 = -1e-9;

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    amplitudes: Vec<C64>,
}

impl Ket {
    /// Normalize an amplitude vector into a ket.
    pub fn normalize(amplitudes: Vec<C64>) -> Result<Self, QlinError> {
        if amplitudes.is_empty() {
            return Err(QlinError::Shape("empty amplitude vector".into()));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QlinError::NonFinite);
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-150 {
            return Err(QlinError::ZeroState);
        }
        Ok(Self { amplitudes: amplitudes.into_iter().map(|z| z / norm).collect() })
    }

    /// Computational basis ket |idx⟩ in the given dimension.
    pub fn basis(dim: usize, idx: usize) -> Self {
        assert!(idx < dim);
        let mut amplitudes = vec![C64::ZERO; dim];
        amplitudes[idx] = C64::ONE;
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Ket) -> C64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// |self⟩⟨self| as a matrix.
    pub fn projector(&self) -> ComplexMatrix {
        let d = self.dim();
        ComplexMatrix::from_fn(d, d, |i, j| self.amplitudes[i] * self.amplitudes[j].conj())
    }

    /// Gauge-fix the global phase: first amplitude above tolerance made
    /// real-positive. Used for deduplication of projector lists.
    pub fn phase_normalized(&self) -> Ket {
        let pivot = self.amplitudes.iter().find(|z| z.norm() > 1e-12);
        match pivot {
            Some(z) => {
                let phase = z / z.norm();
                Ket { amplitudes: self.amplitudes.iter().map(|a| a / phase).collect() }
            }
            None => self.clone(),
        }
    }

    /// Max amplitude distance after phase gauge fixing.
    pub fn phase_invariant_distance(&self, other: &Ket) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        let a = self.phase_normalized();
        let b = other.phase_normalized();
        a.amplitudes
            .iter()
            .zip(&b.amplitudes)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }
}

/// Physical density matrix: Hermitian, unit trace, positive-semidefinite
/// within numerical tolerance. Construction validates all three.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validate and wrap a matrix as a physical state.
    pub fn new(matrix: ComplexMatrix) -> Result<Self, QlinError> {
        if !matrix.is_square() {
            return Err(QlinError::Shape(format!(
                "density matrix must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if matrix.rows() > MAX_DIM {
            return Err(QlinError::DimensionOverflow { dim: matrix.rows() });
        }
        matrix.check_finite()?;
        let dev = matrix.hermiticity_deviation();
        if dev > HERMITICITY_TOL {
            return Err(QlinError::NotHermitian { deviation: dev });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QlinError::BadTrace { trace: tr.re });
        }
        let (evals, _) = eig_hermitian(&matrix)?;
        let min = evals.last().copied().unwrap_or(0.0);
        if min < PSD_FLOOR {
            return Err(QlinError::NotPositive { min_eigenvalue: min });
        }
        Ok(Self { matrix })
    }

    /// Pure state |ψ⟩⟨ψ|.
    pub fn from_ket(psi: &Ket) -> Self {
        Self { matrix: psi.projector() }
    }

    /// Maximally mixed state I/d.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// tr(ρ²).
    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// ⟨i|ρ|j⟩.
    pub fn element(&self, i: usize, j: usize) -> C64 {
        self.matrix[(i, j)]
    }

    /// Born-rule probability ⟨ψ|ρ|ψ⟩ for a unit projector.
    pub fn born(&self, psi: &Ket) -> f64 {
        self.matrix.sandwich(psi.amplitudes(), psi.amplitudes()).re.max(0.0)
    }

    /// Trace distance ½ tr|ρ − σ|.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.matrix - &other.matrix;
        let (evals, _) = eig_hermitian(&diff).expect("difference of Hermitian matrices");
        0.5 * evals.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Which factor of a bipartite product to keep in a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    First,
    Second,
}

/// Kronecker product of two kets.
pub fn tensor_kets(a: &Ket, b: &Ket) -> Result<Ket, QlinError> {
    let d = a.dim() * b.dim();
    if d > MAX_DIM {
        return Err(QlinError::DimensionOverflow { dim: d });
    }
    let mut amplitudes = Vec::with_capacity(d);
    for x in a.amplitudes() {
        for y in b.amplitudes() {
            amplitudes.push(x * y);
        }
    }
    Ok(Ket { amplitudes })
}

/// Kronecker product of two density matrices.
pub fn tensor(a: &DensityMatrix, b: &DensityMatrix) -> Result<DensityMatrix, QlinError> {
    let d = a.dim() * b.dim();
    if d > MAX_DIM {
        return Err(QlinError::DimensionOverflow { dim: d });
    }
    Ok(DensityMatrix { matrix: a.matrix().kron(b.matrix()) })
}

/// Partial trace of a bipartite state with factor dimensions `dims`,
/// keeping the selected factor.
pub fn partial_trace(
    rho: &DensityMatrix,
    keep: Keep,
    dims: (usize, usize),
) -> Result<DensityMatrix, QlinError> {
    let (d1, d2) = dims;
    if d1 * d2 != rho.dim() {
        return Err(QlinError::Shape(format!(
            "factor dims {}x{} do not compose to state dim {}",
            d1,
            d2,
            rho.dim()
        )));
    }
    let m = rho.matrix();
    let out = match keep {
        Keep::First => ComplexMatrix::from_fn(d1, d1, |i, j| {
            (0..d2).map(|k| m[(i * d2 + k, j * d2 + k)]).sum()
        }),
        Keep::Second => ComplexMatrix::from_fn(d2, d2, |k, l| {
            (0..d1).map(|i| m[(i * d2 + k, i * d2 + l)]).sum()
        }),
    };
    // trace and Hermiticity survive exactly; PSD survives up to roundoff
    DensityMatrix::new(out)
}

/// Project an arbitrary square matrix to the closest physical state:
/// take the Hermitian part, clip negative eigenvalues to zero, renormalize
/// the trace. Errors when nothing positive remains.
pub fn project_to_physical(m: &ComplexMatrix) -> Result<DensityMatrix, QlinError> {
    if !m.is_square() {
        return Err(QlinError::Shape(format!("expected square matrix, got {}x{}", m.rows(), m.cols())));
    }
    let h = m.hermitian_part();
    h.check_finite()?;
    let (evals, vecs) = eig_hermitian(&h)?;
    let clipped: Vec<f64> = evals.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 1e-150 {
        return Err(QlinError::ZeroState);
    }
    let n = h.rows();
    let out = ComplexMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| vecs[(i, k)] * vecs[(j, k)].conj() * (clipped[k] / total))
            .sum()
    });
    DensityMatrix::new(out.hermitian_part())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlin::C64;

    fn bell_phi_plus() -> Ket {
        Ket::normalize(vec![C64::ONE, C64::ZERO, C64::ZERO, C64::ONE]).unwrap()
    }

    #[test]
    fn tensor_of_mixed_identities() {
        let half = DensityMatrix::maximally_mixed(2);
        let quarter = tensor(&half, &half).unwrap();
        assert_eq!(quarter.dim(), 4);
        for i in 0..4 {
            assert!((quarter.element(i, i) - C64::new(0.25, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn tensor_basis_kets() {
        let h = Ket::basis(2, 0);
        let early = Ket::basis(2, 0);
        let he = tensor_kets(&h, &early).unwrap();
        assert_eq!(he.dim(), 4);
        assert!((he.amplitudes()[0] - C64::ONE).norm() < 1e-15);
        assert!(he.amplitudes()[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn tensor_bell_pair_gives_hyper_state() {
        let pol = bell_phi_plus();
        let tb = bell_phi_plus();
        let hyper = tensor_kets(&pol, &tb).unwrap();
        assert_eq!(hyper.dim(), 16);
        let nonzero: Vec<usize> = hyper
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 1e-15)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![0, 3, 12, 15]);
        for &i in &nonzero {
            assert!((hyper.amplitudes()[i] - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn tensor_dimension_overflow_rejected() {
        let a = DensityMatrix::maximally_mixed(4);
        let b = DensityMatrix::maximally_mixed(8);
        assert!(matches!(tensor(&a, &b), Err(QlinError::DimensionOverflow { dim: 32 })));
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let rho = DensityMatrix::from_ket(&bell_phi_plus());
        let red = partial_trace(&rho, Keep::First, (2, 2)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert!((red.element(i, j) - C64::new(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn hyper_marginal_recovers_polarization_bell() {
        let pol = bell_phi_plus();
        let hyper = tensor_kets(&pol, &bell_phi_plus()).unwrap();
        let rho = DensityMatrix::from_ket(&hyper);
        let red = partial_trace(&rho, Keep::First, (4, 4)).unwrap();
        let target = DensityMatrix::from_ket(&pol);
        assert!((red.matrix() - target.matrix()).max_norm() < 1e-14);
    }

    #[test]
    fn identity_marginal() {
        let rho = DensityMatrix::maximally_mixed(16);
        for keep in [Keep::First, Keep::Second] {
            let red = partial_trace(&rho, keep, (4, 4)).unwrap();
            assert!((red.matrix() - DensityMatrix::maximally_mixed(4).matrix()).max_norm() < 1e-15);
        }
    }

    #[test]
    fn partial_trace_bad_dims_rejected() {
        let rho = DensityMatrix::maximally_mixed(4);
        assert!(partial_trace(&rho, Keep::First, (3, 2)).is_err());
    }

    #[test]
    fn project_is_identity_on_physical_states() {
        let rho = DensityMatrix::from_ket(&bell_phi_plus());
        let back = project_to_physical(rho.matrix()).unwrap();
        assert!((back.matrix() - rho.matrix()).max_norm() < 1e-12);
    }

    #[test]
    fn project_clips_and_renormalizes() {
        let m = ComplexMatrix::from_fn(2, 2, |i, j| {
            if i == j { C64::new(if i == 0 { 1.2 } else { -0.2 }, 0.0) } else { C64::ZERO }
        });
        let p = project_to_physical(&m).unwrap();
        assert!((p.element(0, 0) - C64::ONE).norm() < 1e-14);
        assert!(p.element(1, 1).norm() < 1e-14);
    }

    #[test]
    fn project_small_negative_perturbation_stays_close() {
        let rho = DensityMatrix::from_ket(&bell_phi_plus());
        // perturb along |01⟩⟨01| − |10⟩⟨10|-ish direction to create a −0.01 eigenvalue
        let mut m = rho.matrix().clone();
        m[(1, 1)] = C64::new(-0.01, 0.0);
        m[(2, 2)] = C64::new(0.01, 0.0);
        let p = project_to_physical(&m).unwrap();
        let (evals, _) = eig_hermitian(p.matrix()).unwrap();
        assert!(evals.last().unwrap() >= &-1e-12);
        let dist = {
            let diff = p.matrix() - &m;
            let (dvals, _) = eig_hermitian(&diff.hermitian_part()).unwrap();
            0.5 * dvals.iter().map(|v| v.abs()).sum::<f64>()
        };
        assert!(dist < 0.02, "trace distance {dist} too large");
    }

    #[test]
    fn project_zero_matrix_rejected() {
        let z = ComplexMatrix::zeros(3, 3);
        assert!(matches!(project_to_physical(&z), Err(QlinError::ZeroState)));
    }

    #[test]
    fn density_matrix_rejects_bad_trace() {
        let m = ComplexMatrix::identity(2);
        assert!(matches!(DensityMatrix::new(m), Err(QlinError::BadTrace { .. })));
    }

    #[test]
    fn density_matrix_rejects_negative() {
        let m = ComplexMatrix::from_fn(2, 2, |i, j| {
            if i == j { C64::new(if i == 0 { 1.5 } else { -0.5 }, 0.0) } else { C64::ZERO }
        });
        assert!(matches!(DensityMatrix::new(m), Err(QlinError::NotPositive { .. })));
    }
}
