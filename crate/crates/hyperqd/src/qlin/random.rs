//! Seeded random states and unitaries, used by tests and sanity studies.

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::ComplexMatrix;
use super::state::{DensityMatrix, Ket};

fn gaussian_c64(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-ish random pure state from a complex Gaussian vector.
pub fn random_ket(dim: usize, rng: &mut impl Rng) -> Ket {
    loop {
        let amps: Vec<C64> = (0..dim).map(|_| gaussian_c64(rng)).collect();
        if let Ok(k) = Ket::normalize(amps) {
            return k;
        }
    }
}

/// Full-rank random density matrix ρ = GG†/tr(GG†) with Ginibre G.
pub fn random_density(dim: usize, rng: &mut impl Rng) -> DensityMatrix {
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
    let gg = &g * &g.dagger();
    let tr = gg.trace().re;
    DensityMatrix::new(gg.scale(C64::new(1.0 / tr, 0.0)).hermitian_part())
        .expect("Ginibre construction is physical")
}

/// Haar random unitary via Gram-Schmidt on a Ginibre matrix.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
    // modified Gram-Schmidt over columns
    let mut cols: Vec<Vec<C64>> = (0..dim)
        .map(|j| (0..dim).map(|i| g[(i, j)]).collect())
        .collect();
    for j in 0..dim {
        for k in 0..j {
            let proj: C64 = (0..dim).map(|i| cols[k][i].conj() * cols[j][i]).sum();
            for i in 0..dim {
                let sub = proj * cols[k][i];
                cols[j][i] -= sub;
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in cols[j].iter_mut() {
            *z /= norm;
        }
    }
    ComplexMatrix::from_fn(dim, dim, |i, j| cols[j][i])
}
