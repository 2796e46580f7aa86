//! Tomographically complete projector sets and the measurement design
//! matrix built over a real orthonormal Hermitian operator basis.

use num_complex::Complex64 as C64;

use super::TomoError;
use crate::detection::{
    timebin_projector, ArrivalRegion, MeasurementSetting, PolAnalyzer,
};
use crate::qlin::{eig_symmetric, tensor_kets, ComplexMatrix, Ket};
use std::f64::consts::FRAC_PI_2;

/// One projection with its export label.
#[derive(Debug, Clone)]
pub struct LabeledProjector {
    pub label: String,
    pub ket: Ket,
}

/// Ordered, labeled projector list with its cached least-squares machinery.
///
/// `norm_subgroup` indexes a complete orthonormal projection subgroup whose
/// probabilities sum to one for any state; the sum of its counts estimates
/// the campaign exposure (for time-bin sets this is the phase-independent
/// time-basis subgroup).
#[derive(Debug, Clone)]
pub struct ProjectorSet {
    dim: usize,
    projectors: Vec<LabeledProjector>,
    norm_subgroup: Vec<usize>,
    /// Design matrix rows: projector expanded over the Hermitian basis.
    design: Vec<Vec<f64>>,
    /// Cholesky factor of the design Gram matrix, when it is full rank.
    gram_chol: Option<Vec<f64>>,
    rank: usize,
    condition_number: f64,
}

impl ProjectorSet {
    pub fn new(
        dim: usize,
        projectors: Vec<LabeledProjector>,
        norm_subgroup: Vec<usize>,
    ) -> Result<Self, TomoError> {
        if projectors.is_empty() {
            return Err(TomoError::EmptySet);
        }
        for p in &projectors {
            if p.ket.dim() != dim {
                return Err(TomoError::DimMismatch {
                    expected: dim,
                    got: p.ket.dim(),
                    label: p.label.clone(),
                });
            }
        }
        let m = dim * dim;
        let design: Vec<Vec<f64>> = projectors
            .iter()
            .map(|p| hermitian_basis_coefficients(&p.ket))
            .collect();

        // Gram = AᵀA over the operator basis; its spectrum gives the rank
        // and condition number of the measurement map
        let mut gram = vec![0.0; m * m];
        for row in &design {
            for k in 0..m {
                if row[k] == 0.0 {
                    continue;
                }
                for l in 0..m {
                    gram[k * m + l] += row[k] * row[l];
                }
            }
        }
        let (evals, _) = eig_symmetric(m, &gram);
        let max = evals[0].max(0.0);
        let tol = max * 1e-10;
        let rank = evals.iter().filter(|&&v| v > tol).count();
        let min_nonzero = evals.iter().copied().filter(|&v| v > tol).fold(max, f64::min);
        let condition_number = if rank == m && min_nonzero > 0.0 {
            (max / min_nonzero).sqrt()
        } else {
            f64::INFINITY
        };
        let gram_chol = if rank == m { cholesky(m, &gram) } else { None };

        Ok(Self { dim, projectors, norm_subgroup, design, gram_chol, rank, condition_number })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn projectors(&self) -> &[LabeledProjector] {
        &self.projectors
    }

    /// Rank of the measurement map; dim² for a tomographically complete set.
    pub fn completeness_rank(&self) -> usize {
        self.rank
    }

    /// Singular-value condition number of the measurement matrix.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn norm_subgroup(&self) -> &[usize] {
        &self.norm_subgroup
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.projectors.iter().position(|p| p.label == label)
    }

    /// Exposure estimate: summed counts of the orthonormal subgroup.
    pub fn normalization(&self, counts: &[f64]) -> f64 {
        self.norm_subgroup.iter().map(|&i| counts[i]).sum()
    }

    /// Born probabilities of every projector for a given state matrix.
    pub fn probabilities(&self, rho: &ComplexMatrix) -> Vec<f64> {
        self.projectors
            .iter()
            .map(|p| rho.sandwich(p.ket.amplitudes(), p.ket.amplitudes()).re)
            .collect()
    }

    pub(super) fn design(&self) -> &[Vec<f64>] {
        &self.design
    }

    pub(super) fn gram_chol(&self) -> Option<&[f64]> {
        self.gram_chol.as_deref()
    }
}

// ── Hermitian operator basis ─────────────────────────────────────────────────
//
// Ordered as: d diagonal units E_ii, then for each i<j the symmetric
// (E_ij+E_ji)/√2 followed by the antisymmetric i(E_ij−E_ji)/√2. All are
// Hermitian and orthonormal under tr(AB).

/// Coefficients of |ψ⟩⟨ψ| over the Hermitian basis.
pub fn hermitian_basis_coefficients(psi: &Ket) -> Vec<f64> {
    let d = psi.dim();
    let a = psi.amplitudes();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(a[i].norm_sqr());
    }
    let s = std::f64::consts::SQRT_2;
    for i in 0..d {
        for j in (i + 1)..d {
            let z = a[i].conj() * a[j];
            out.push(s * z.re);
            out.push(-s * z.im);
        }
    }
    out
}

/// Matrix from its Hermitian-basis coefficient vector.
pub fn matrix_from_coefficients(dim: usize, x: &[f64]) -> ComplexMatrix {
    assert_eq!(x.len(), dim * dim);
    let mut m = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = C64::new(x[i], 0.0);
    }
    let inv_s = 1.0 / std::f64::consts::SQRT_2;
    let mut k = dim;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let re = x[k] * inv_s;
            let im = x[k + 1] * inv_s;
            k += 2;
            m[(i, j)] = C64::new(re, im);
            m[(j, i)] = C64::new(re, -im);
        }
    }
    m
}

/// Dense lower Cholesky factor of an SPD matrix, or None when a pivot is
/// not positive.
pub(super) fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve L Lᵀ x = b given the lower factor.
pub(super) fn cholesky_solve(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

// ── Canonical sets ───────────────────────────────────────────────────────────

/// The sixteen two-photon polarization analyzer pairs of standard two-qubit
/// tomography, realized through the waveplate pipeline.
pub const POL_TOMOGRAPHY_PAIRS: [(PolAnalyzer, PolAnalyzer); 16] = [
    (PolAnalyzer::H, PolAnalyzer::H),
    (PolAnalyzer::H, PolAnalyzer::V),
    (PolAnalyzer::V, PolAnalyzer::V),
    (PolAnalyzer::V, PolAnalyzer::H),
    (PolAnalyzer::R, PolAnalyzer::H),
    (PolAnalyzer::R, PolAnalyzer::V),
    (PolAnalyzer::D, PolAnalyzer::V),
    (PolAnalyzer::D, PolAnalyzer::H),
    (PolAnalyzer::D, PolAnalyzer::R),
    (PolAnalyzer::D, PolAnalyzer::D),
    (PolAnalyzer::R, PolAnalyzer::D),
    (PolAnalyzer::H, PolAnalyzer::D),
    (PolAnalyzer::V, PolAnalyzer::D),
    (PolAnalyzer::V, PolAnalyzer::L),
    (PolAnalyzer::H, PolAnalyzer::L),
    (PolAnalyzer::R, PolAnalyzer::L),
];

/// The four analysis-interferometer phase settings that deliver a complete
/// time-bin projection set.
pub const TIMEBIN_PHASE_SETTINGS: [(f64, f64); 4] =
    [(0.0, 0.0), (0.0, FRAC_PI_2), (FRAC_PI_2, 0.0), (FRAC_PI_2, FRAC_PI_2)];

/// Complete 16-projector polarization set (dim 4, rank 16).
pub fn standard_pol_set() -> ProjectorSet {
    let projectors: Vec<LabeledProjector> = POL_TOMOGRAPHY_PAIRS
        .iter()
        .map(|&(xx, x)| {
            let setting = MeasurementSetting::from_analyzers(xx, x, 0.0, 0.0, 0.0, false);
            LabeledProjector { label: setting.pol_label.clone(), ket: setting.polarization_pair_ket() }
        })
        .collect();
    let subgroup = ["HH", "HV", "VV", "VH"]
        .iter()
        .map(|l| projectors.iter().position(|p| p.label == *l).unwrap())
        .collect();
    ProjectorSet::new(4, projectors, subgroup).expect("canonical polarization set is well formed")
}

/// Projectors delivered by the four phase settings, deduplicated by
/// phase-gauge-fixed ket equality (the time-basis projections recur in every
/// setting). Yields 16 distinct projections of rank 16.
pub fn timebin_set_from_phases() -> ProjectorSet {
    let mut projectors: Vec<LabeledProjector> = Vec::new();
    for &(phi_xx, phi_x) in &TIMEBIN_PHASE_SETTINGS {
        let setting =
            MeasurementSetting::from_analyzers(PolAnalyzer::H, PolAnalyzer::H, phi_xx, phi_x, 0.0, true);
        for rxx in ArrivalRegion::ALL {
            for rx in ArrivalRegion::ALL {
                let (ket, _) = timebin_projector(rxx, rx, phi_xx, phi_x);
                let duplicate = projectors
                    .iter()
                    .any(|p| p.ket.phase_invariant_distance(&ket) < 1e-12);
                if !duplicate {
                    projectors.push(LabeledProjector { label: setting.region_label(rxx, rx), ket });
                }
            }
        }
    }
    let subgroup = ["EE", "EL", "LE", "LL"]
        .iter()
        .map(|l| projectors.iter().position(|p| p.label == *l).unwrap())
        .collect();
    ProjectorSet::new(4, projectors, subgroup).expect("time-bin set is well formed")
}

/// Tensor products of the polarization set with the time-bin set:
/// 256 projections of rank 256 on the 16-dim hyper space.
pub fn hyper_set() -> ProjectorSet {
    let pol = standard_pol_set();
    let tb = timebin_set_from_phases();
    let mut projectors = Vec::with_capacity(pol.len() * tb.len());
    for p in pol.projectors() {
        for t in tb.projectors() {
            projectors.push(LabeledProjector {
                label: format!("{}:{}", p.label, t.label),
                ket: tensor_kets(&p.ket, &t.ket).unwrap(),
            });
        }
    }
    let mut subgroup = Vec::with_capacity(16);
    for pl in ["HH", "HV", "VV", "VH"] {
        for tl in ["EE", "EL", "LE", "LL"] {
            let label = format!("{pl}:{tl}");
            subgroup.push(projectors.iter().position(|p| p.label == label).unwrap());
        }
    }
    ProjectorSet::new(16, projectors, subgroup).expect("hyper set is well formed")
}
