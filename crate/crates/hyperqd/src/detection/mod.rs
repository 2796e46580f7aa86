//! Measurement model: waveplate polarization analyzers, unbalanced Michelson
//! time-bin analysis, Born-rule region probabilities, and synthetic
//! coincidence histograms.
//!
//! Each photon passes a half-wave plate, a quarter-wave plate and a
//! horizontal polarizer, then an unbalanced interferometer whose short and
//! long arms carry amplitude 1/2 each (two 50/50 passes); the long arm adds
//! the propagation phase e^{−iφ_arm}. A photon emitted in bin b and taking
//! path q arrives in region b+q ∈ {early, middle, late}; the middle region
//! superposes the two indistinguishable paths, so its effective projector is
//! (|early⟩ + e^{−iφ}|late⟩)/√2 with POVM weight 1/2, while the outer regions
//! project on the time basis with weight 1/4.

mod histogram;

pub use histogram::{
    extract_projection_counts, histogram_to_table, parse_histogram_table, parse_projection_counts,
    projection_counts_to_table, synthesize_histogram, CoincidenceHistogram, ProjectionCounts,
};

use num_complex::Complex64 as C64;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::qlin::{tensor_kets, ComplexMatrix, DensityMatrix, Ket, QlinError};

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("invalid measurement setting: {0}")]
    InvalidSetting(String),
    #[error("region windows overlap or are malformed: {0}")]
    BadWindows(String),
    #[error("histogram table parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Qlin(#[from] QlinError),
}

// ── Polarization analyzers ───────────────────────────────────────────────────

/// Jones matrix of a quarter-wave plate with fast axis at `theta_deg` from
/// horizontal (slow-axis retardance +π/2).
pub fn qwp_matrix(theta_deg: f64) -> ComplexMatrix {
    let th = theta_deg.to_radians();
    let (s, c) = th.sin_cos();
    let i = C64::new(0.0, 1.0);
    let one = C64::ONE;
    ComplexMatrix::from_rows(
        2,
        2,
        vec![
            one * c * c + i * s * s,
            (one - i) * s * c,
            (one - i) * s * c,
            one * s * s + i * c * c,
        ],
    )
    .unwrap()
}

/// Jones matrix of a half-wave plate with fast axis at `theta_deg`.
pub fn hwp_matrix(theta_deg: f64) -> ComplexMatrix {
    let th = theta_deg.to_radians();
    let (s2, c2) = (2.0 * th).sin_cos();
    ComplexMatrix::from_rows(
        2,
        2,
        vec![C64::new(c2, 0.0), C64::new(s2, 0.0), C64::new(s2, 0.0), C64::new(-c2, 0.0)],
    )
    .unwrap()
}

/// Polarization ket the analyzer chain transmits: light passes the half-wave
/// plate, then the quarter-wave plate, then a horizontal polarizer, so the
/// projection ket is HWP†(h)·QWP†(q)·|H⟩.
pub fn polarization_projector(qwp_deg: f64, hwp_deg: f64) -> Ket {
    let h = Ket::basis(2, 0);
    let after_qwp = qwp_matrix(qwp_deg).dagger().mul_vec(h.amplitudes());
    let after_hwp = hwp_matrix(hwp_deg).dagger().mul_vec(&after_qwp);
    Ket::normalize(after_hwp).expect("waveplates are unitary")
}

/// Named single-photon analyzer states and their waveplate angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolAnalyzer {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl PolAnalyzer {
    /// (qwp, hwp) angles in degrees realizing this projection.
    pub fn angles(&self) -> (f64, f64) {
        match self {
            PolAnalyzer::H => (0.0, 0.0),
            PolAnalyzer::V => (0.0, 45.0),
            PolAnalyzer::D => (0.0, 22.5),
            PolAnalyzer::A => (0.0, 67.5),
            PolAnalyzer::R => (45.0, 0.0),
            PolAnalyzer::L => (135.0, 0.0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PolAnalyzer::H => "H",
            PolAnalyzer::V => "V",
            PolAnalyzer::D => "D",
            PolAnalyzer::A => "A",
            PolAnalyzer::R => "R",
            PolAnalyzer::L => "L",
        }
    }

    /// The analytic target ket, for checking the waveplate pipeline.
    /// Circularity convention: R ≡ (|H⟩ − i|V⟩)/√2.
    pub fn ket(&self) -> Ket {
        let one = C64::ONE;
        let i = C64::new(0.0, 1.0);
        let amps = match self {
            PolAnalyzer::H => vec![one, C64::ZERO],
            PolAnalyzer::V => vec![C64::ZERO, one],
            PolAnalyzer::D => vec![one, one],
            PolAnalyzer::A => vec![one, -one],
            PolAnalyzer::R => vec![one, -i],
            PolAnalyzer::L => vec![one, i],
        };
        Ket::normalize(amps).unwrap()
    }
}

// ── Time-bin analysis ────────────────────────────────────────────────────────

/// Arrival-time region of one photon behind its analysis interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArrivalRegion {
    Early,
    Middle,
    Late,
}

impl ArrivalRegion {
    pub const ALL: [ArrivalRegion; 3] = [ArrivalRegion::Early, ArrivalRegion::Middle, ArrivalRegion::Late];

    pub fn index(&self) -> usize {
        match self {
            ArrivalRegion::Early => 0,
            ArrivalRegion::Middle => 1,
            ArrivalRegion::Late => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

/// Single-arm time-bin POVM element for an arrival region: (ket, weight)
/// with POVM = weight·|ket⟩⟨ket|. Outer regions resolve the time basis with
/// weight 1/4; the middle region projects on (|E⟩ + e^{−iφ}|L⟩)/√2 with
/// weight 1/2.
pub fn timebin_arm_projector(region: ArrivalRegion, phi: f64) -> (Ket, f64) {
    match region {
        ArrivalRegion::Early => (Ket::basis(2, 0), 0.25),
        ArrivalRegion::Late => (Ket::basis(2, 1), 0.25),
        ArrivalRegion::Middle => {
            let ket = Ket::normalize(vec![C64::ONE, C64::from_polar(1.0, -phi)]).unwrap();
            (ket, 0.5)
        }
    }
}

/// Two-photon time-bin projector for a region pair: tensor product of the
/// arm projectors, weight multiplied.
pub fn timebin_projector(
    region_xx: ArrivalRegion,
    region_x: ArrivalRegion,
    phi_xx: f64,
    phi_x: f64,
) -> (Ket, f64) {
    let (kxx, wxx) = timebin_arm_projector(region_xx, phi_xx);
    let (kx, wx) = timebin_arm_projector(region_x, phi_x);
    (tensor_kets(&kxx, &kx).unwrap(), wxx * wx)
}

/// Label for the single-arm time-bin projection: E/L for the time basis,
/// D/R for the φ = 0 and φ = π/2 energy-basis settings, M<phase> otherwise.
pub fn timebin_arm_label(region: ArrivalRegion, phi: f64) -> String {
    match region {
        ArrivalRegion::Early => "E".to_string(),
        ArrivalRegion::Late => "L".to_string(),
        ArrivalRegion::Middle => {
            let phi = normalize_phase(phi);
            if phi.abs() < 1e-9 || (phi - TAU).abs() < 1e-9 {
                "D".to_string()
            } else if (phi - TAU / 4.0).abs() < 1e-9 {
                "R".to_string()
            } else {
                format!("M{phi:.6}")
            }
        }
    }
}

fn normalize_phase(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    if p == TAU {
        0.0
    } else {
        p
    }
}

// ── Measurement settings ─────────────────────────────────────────────────────

/// One physical configuration: waveplate angles per arm, analysis
/// interferometer phases, pump phase, and whether the time-bin
/// interferometers are in the beam path.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSetting {
    pub qwp_xx: f64,
    pub hwp_xx: f64,
    pub qwp_x: f64,
    pub hwp_x: f64,
    pub phi_xx: f64,
    pub phi_x: f64,
    pub phi_p: f64,
    pub timebin_enabled: bool,
    /// Short label of the polarization pair, e.g. "HH"; used in exports.
    pub pol_label: String,
}

impl MeasurementSetting {
    pub fn new(
        qwp_xx: f64,
        hwp_xx: f64,
        qwp_x: f64,
        hwp_x: f64,
        phi_xx: f64,
        phi_x: f64,
        phi_p: f64,
        timebin_enabled: bool,
    ) -> Result<Self, DetectionError> {
        for (name, v) in [
            ("qwp_xx", qwp_xx),
            ("hwp_xx", hwp_xx),
            ("qwp_x", qwp_x),
            ("hwp_x", hwp_x),
            ("phi_xx", phi_xx),
            ("phi_x", phi_x),
            ("phi_p", phi_p),
        ] {
            if !v.is_finite() {
                return Err(DetectionError::InvalidSetting(format!("{name} must be finite")));
            }
        }
        let pol_label = format!("q{qwp_xx}h{hwp_xx}:q{qwp_x}h{hwp_x}");
        Ok(Self {
            qwp_xx,
            hwp_xx,
            qwp_x,
            hwp_x,
            phi_xx: normalize_phase(phi_xx),
            phi_x: normalize_phase(phi_x),
            phi_p: normalize_phase(phi_p),
            timebin_enabled,
            pol_label,
        })
    }

    /// Setting from named analyzers for both arms.
    pub fn from_analyzers(
        xx: PolAnalyzer,
        x: PolAnalyzer,
        phi_xx: f64,
        phi_x: f64,
        phi_p: f64,
        timebin_enabled: bool,
    ) -> Self {
        let (qxx, hxx) = xx.angles();
        let (qx, hx) = x.angles();
        let mut s = Self::new(qxx, hxx, qx, hx, phi_xx, phi_x, phi_p, timebin_enabled)
            .expect("named analyzer angles are finite");
        s.pol_label = format!("{}{}", xx.label(), x.label());
        s
    }

    /// Two-photon polarization projection ket from the waveplate pipeline.
    pub fn polarization_pair_ket(&self) -> Ket {
        let kxx = polarization_projector(self.qwp_xx, self.hwp_xx);
        let kx = polarization_projector(self.qwp_x, self.hwp_x);
        tensor_kets(&kxx, &kx).unwrap()
    }

    /// Full 16-dim projection ket and POVM weight for one arrival-region
    /// pair under this setting.
    pub fn region_projection(&self, rxx: ArrivalRegion, rx: ArrivalRegion) -> (Ket, f64) {
        let pol = self.polarization_pair_ket();
        let (tb, w) = timebin_projector(rxx, rx, self.phi_xx, self.phi_x);
        (tensor_kets(&pol, &tb).unwrap(), w)
    }

    /// Label of one region's projection, e.g. "EE" or "DR".
    pub fn region_label(&self, rxx: ArrivalRegion, rx: ArrivalRegion) -> String {
        format!(
            "{}{}",
            timebin_arm_label(rxx, self.phi_xx),
            timebin_arm_label(rx, self.phi_x)
        )
    }
}

// ── Born-rule probabilities ──────────────────────────────────────────────────

/// Probabilities of the nine arrival-region pairs (and their total) for a
/// state under a setting. With time-bin analysis disabled the whole
/// polarization-projected flux lands in `total` and the grid holds it at
/// the (early, early) slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionProbabilities {
    pub grid: [[f64; 3]; 3],
    /// Post-selected yield: sum of the nine region probabilities.
    pub total: f64,
}

impl RegionProbabilities {
    pub fn get(&self, rxx: ArrivalRegion, rx: ArrivalRegion) -> f64 {
        self.grid[rxx.index()][rx.index()]
    }

    /// Sums along anti-diagonals d = r_xx + r_x, the five-peak view.
    pub fn anti_diagonal_sums(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for i in 0..3 {
            for j in 0..3 {
                out[i + j] += self.grid[i][j];
            }
        }
        out
    }
}

/// Born-rule probability of each arrival-region pair.
pub fn outcome_probabilities(rho16: &DensityMatrix, setting: &MeasurementSetting) -> RegionProbabilities {
    assert_eq!(rho16.dim(), 16, "outcome probabilities need the 16-dim state");
    let mut grid = [[0.0; 3]; 3];
    if setting.timebin_enabled {
        for rxx in ArrivalRegion::ALL {
            for rx in ArrivalRegion::ALL {
                let (ket, w) = setting.region_projection(rxx, rx);
                grid[rxx.index()][rx.index()] = w * rho16.born(&ket);
            }
        }
    } else {
        grid[0][0] = polarization_only_probability(rho16, setting);
    }
    let total = grid.iter().flatten().sum();
    RegionProbabilities { grid, total }
}

/// Polarization projection probability with the interferometers removed:
/// tr(ρ · Π_pol ⊗ I_tb).
pub fn polarization_only_probability(rho16: &DensityMatrix, setting: &MeasurementSetting) -> f64 {
    let pol = setting.polarization_pair_ket();
    let mut p = 0.0;
    for tb in 0..4 {
        let ket = tensor_kets(&pol, &Ket::basis(4, tb)).unwrap();
        p += rho16.born(&ket);
    }
    p
}

/// Fraction of pairs not post-selected into any of the nine regions,
/// computed from the complementary outcome operators (polarizer rejection
/// and the interferometer port that exits back toward the source) rather
/// than from 1 − Σ regions, so the amplitude bookkeeping can be checked to
/// close.
pub fn non_postselected_fraction(rho16: &DensityMatrix, setting: &MeasurementSetting) -> f64 {
    let pol_xx = polarization_projector(setting.qwp_xx, setting.hwp_xx);
    let pol_x = polarization_projector(setting.qwp_x, setting.hwp_x);
    // per-photon 4-dim (pol ⊗ tb) outcome operators
    let arm_ops = |pol: &Ket, phi: f64| -> (ComplexMatrix, Vec<ComplexMatrix>) {
        let pass = pol.projector();
        let reject = &ComplexMatrix::identity(2) - &pass;
        let i2 = ComplexMatrix::identity(2);
        let mut lost = vec![reject.kron(&i2)];
        // input-port Kraus set: l0 = ½⟨E|, l1 = ½(e^{−iφ}⟨E| − ⟨L|), l2 = ½⟨L|
        let e = Ket::basis(2, 0).projector().scale(C64::new(0.25, 0.0));
        let l = Ket::basis(2, 1).projector().scale(C64::new(0.25, 0.0));
        let mid = Ket::normalize(vec![C64::ONE, -C64::from_polar(1.0, -phi)]).unwrap();
        let mid_op = mid.projector().scale(C64::new(0.5, 0.0));
        for op in [e, mid_op, l] {
            lost.push(pass.kron(&op));
        }
        let mut detected_total = ComplexMatrix::zeros(2, 2);
        for r in ArrivalRegion::ALL {
            let (k, w) = timebin_arm_projector(r, phi);
            detected_total = &detected_total + &k.projector().scale(C64::new(w, 0.0));
        }
        (pass.kron(&detected_total), lost)
    };
    let (det_xx, lost_xx) = arm_ops(&pol_xx, setting.phi_xx);
    let (det_x, lost_x) = arm_ops(&pol_x, setting.phi_x);

    // reorder per-photon (pol⊗tb) ⊗ (pol⊗tb) products into the composite
    // (pol_xx, pol_x, tb_xx, tb_x) ordering
    let compose = |a: &ComplexMatrix, b: &ComplexMatrix| -> ComplexMatrix {
        ComplexMatrix::from_fn(16, 16, |row, col| {
            let (pxx_r, px_r, txx_r, tx_r) = (row >> 3 & 1, row >> 2 & 1, row >> 1 & 1, row & 1);
            let (pxx_c, px_c, txx_c, tx_c) = (col >> 3 & 1, col >> 2 & 1, col >> 1 & 1, col & 1);
            a[(pxx_r * 2 + txx_r, pxx_c * 2 + txx_c)] * b[(px_r * 2 + tx_r, px_c * 2 + tx_c)]
        })
    };

    let mut lost_prob = 0.0;
    let trace_with = |op: &ComplexMatrix| -> f64 {
        let m = rho16.matrix();
        let mut acc = C64::ZERO;
        for i in 0..16 {
            for j in 0..16 {
                acc += m[(i, j)] * op[(j, i)];
            }
        }
        acc.re
    };
    // any combination involving at least one lost outcome
    for lx in &lost_xx {
        lost_prob += trace_with(&compose(lx, &det_x));
        for ly in &lost_x {
            lost_prob += trace_with(&compose(lx, ly));
        }
    }
    for ly in &lost_x {
        lost_prob += trace_with(&compose(&det_xx, ly));
    }
    lost_prob
}
