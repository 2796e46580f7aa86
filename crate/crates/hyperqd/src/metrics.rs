//! Entanglement and quality measures computed from density matrices.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::qlin::{eig_hermitian, partial_trace, ComplexMatrix, DensityMatrix, Keep, Ket, QlinError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: state is {state}, target is {target}")]
    DimMismatch { state: usize, target: usize },
    #[error("operation requires a two-qubit (dim 4) state, got dim {0}")]
    NotTwoQubit(usize),
    #[error("entanglement report values out of range: {report}")]
    OutOfRange { report: String },
    #[error(transparent)]
    Qlin(#[from] QlinError),
}

/// Which 4-dim factor of the hyper state a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subspace {
    Polarization,
    Timebin,
}

impl Subspace {
    pub fn label(&self) -> &'static str {
        match self {
            Subspace::Polarization => "polarization",
            Subspace::Timebin => "timebin",
        }
    }
}

/// Fidelity, concurrence and purity against a named target.
#[derive(Debug, Clone, PartialEq)]
pub struct EntanglementReport {
    pub fidelity: f64,
    pub concurrence: f64,
    pub purity: f64,
    pub target_label: String,
}

impl EntanglementReport {
    /// Range check: F, C ∈ [0, 1] and purity ∈ [1/4, 1] within 1e-9.
    pub fn validate(&self) -> Result<(), MetricsError> {
        let in_range = |v: f64, lo: f64, hi: f64| v >= lo - 1e-9 && v <= hi + 1e-9;
        if !in_range(self.fidelity, 0.0, 1.0)
            || !in_range(self.concurrence, 0.0, 1.0)
            || !in_range(self.purity, 0.25, 1.0)
        {
            return Err(MetricsError::OutOfRange {
                report: format!(
                    "F={}, C={}, purity={}",
                    self.fidelity, self.concurrence, self.purity
                ),
            });
        }
        Ok(())
    }
}

/// ⟨ψ|ρ|ψ⟩, clipped to [0, 1].
pub fn fidelity_to_pure(rho: &DensityMatrix, target: &Ket) -> Result<f64, MetricsError> {
    if rho.dim() != target.dim() {
        return Err(MetricsError::DimMismatch { state: rho.dim(), target: target.dim() });
    }
    Ok(rho.born(target).clamp(0.0, 1.0))
}

/// tr(ρ²).
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.purity()
}

/// Wootters concurrence of a two-qubit state.
///
/// C = max(0, λ₁−λ₂−λ₃−λ₄) where the λᵢ are the descending square roots of
/// the eigenvalues of ρ·(σy⊗σy)ρ*(σy⊗σy). Computed through the Hermitian
/// sandwich √ρ·ρ̃·√ρ, whose eigenvalues coincide with those of ρρ̃; small
/// negative eigenvalues from states on the PSD boundary are clipped at −1e-9.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64, MetricsError> {
    if rho.dim() != 4 {
        return Err(MetricsError::NotTwoQubit(rho.dim()));
    }
    let syy = sigma_y_sigma_y();
    let spin_flipped = &(&syy * &rho.matrix().conjugate()) * &syy;
    let sqrt_rho = matrix_sqrt_psd(rho.matrix())?;
    let sandwich = &(&sqrt_rho * &spin_flipped) * &sqrt_rho;
    let (evals, _) = eig_hermitian(&sandwich.hermitian_part())?;
    let mut roots: Vec<f64> = evals
        .iter()
        .map(|&v| {
            debug_assert!(v > -1e-9, "sandwich eigenvalue {v} below clip floor");
            v.max(0.0).sqrt()
        })
        .collect();
    roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok((roots[0] - roots[1] - roots[2] - roots[3]).max(0.0))
}

/// Partial-trace to the selected 4-dim factor, then report fidelity,
/// concurrence and purity against the target.
pub fn subspace_report(
    rho16: &DensityMatrix,
    which: Subspace,
    target: &Ket,
) -> Result<EntanglementReport, MetricsError> {
    if rho16.dim() != 16 {
        return Err(MetricsError::DimMismatch { state: rho16.dim(), target: 16 });
    }
    let keep = match which {
        Subspace::Polarization => Keep::First,
        Subspace::Timebin => Keep::Second,
    };
    let reduced = partial_trace(rho16, keep, (4, 4))?;
    let report = EntanglementReport {
        fidelity: fidelity_to_pure(&reduced, target)?,
        concurrence: concurrence(&reduced)?,
        purity: reduced.purity(),
        target_label: which.label().to_string(),
    };
    report.validate()?;
    Ok(report)
}

/// Fidelity of the 16-dim state against tensor(φ_pol, φ_tb).
pub fn hyper_fidelity(
    rho16: &DensityMatrix,
    phi_pol: &Ket,
    phi_tb: &Ket,
) -> Result<f64, MetricsError> {
    if rho16.dim() != 16 {
        return Err(MetricsError::DimMismatch { state: rho16.dim(), target: 16 });
    }
    let target = crate::qlin::tensor_kets(phi_pol, phi_tb)?;
    fidelity_to_pure(rho16, &target)
}

fn sigma_y_sigma_y() -> ComplexMatrix {
    let i = C64::new(0.0, 1.0);
    let sy = ComplexMatrix::from_rows(2, 2, vec![C64::ZERO, -i, i, C64::ZERO]).unwrap();
    sy.kron(&sy)
}

/// PSD square root through the eigendecomposition, clipping tiny negatives.
fn matrix_sqrt_psd(m: &ComplexMatrix) -> Result<ComplexMatrix, MetricsError> {
    let (evals, vecs) = eig_hermitian(m)?;
    let n = m.rows();
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| vecs[(i, k)] * vecs[(j, k)].conj() * evals[k].max(0.0).sqrt())
            .sum()
    }))
}
