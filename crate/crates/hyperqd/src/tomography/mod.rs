//! State reconstruction from projection counts: projector-set generation,
//! linear inversion, maximum-likelihood refinement, and bootstrap errors.

mod bootstrap;
mod mle;
mod sets;

pub use bootstrap::{bootstrap_errors, BootstrapErrors, BootstrapOptions};
pub use mle::{mle_reconstruct, InitStrategy, MleConfig, MleOutcome};
pub use sets::{
    hermitian_basis_coefficients, hyper_set, matrix_from_coefficients, standard_pol_set,
    timebin_set_from_phases, LabeledProjector, ProjectorSet, POL_TOMOGRAPHY_PAIRS,
    TIMEBIN_PHASE_SETTINGS,
};

use thiserror::Error;

use crate::detection::ProjectionCounts;
use crate::qlin::{ComplexMatrix, QlinError};

#[derive(Debug, Error)]
pub enum TomoError {
    #[error("projector set is empty")]
    EmptySet,
    #[error("projector '{label}' has dim {got}, set expects {expected}")]
    DimMismatch { expected: usize, got: usize, label: String },
    #[error("count vector has {got} entries, set has {expected} projectors")]
    CountsMismatch { expected: usize, got: usize },
    #[error("degenerate counts: {0}")]
    BadCounts(String),
    #[error("measurement matrix is rank deficient; the set is not tomographically complete")]
    RankDeficient,
    #[error("projection label '{0}' does not belong to the projector set")]
    UnknownLabel(String),
    #[error(transparent)]
    Qlin(#[from] QlinError),
}

/// Least-squares inversion of measured frequencies onto the state space.
///
/// Solves probabilities = design · coefficients over the Hermitian operator
/// basis; the result is Hermitian by construction but may have negative
/// eigenvalues, which downstream consumers handle by physical projection or
/// MLE refinement.
pub fn linear_inversion(counts: &[f64], set: &ProjectorSet) -> Result<ComplexMatrix, TomoError> {
    if counts.len() != set.len() {
        return Err(TomoError::CountsMismatch { expected: set.len(), got: counts.len() });
    }
    let exposure = set.normalization(counts);
    if exposure <= 0.0 {
        return Err(TomoError::BadCounts("normalization subgroup has zero counts".into()));
    }
    let chol = set.gram_chol().ok_or(TomoError::RankDeficient)?;
    let m = set.dim() * set.dim();
    let mut rhs = vec![0.0; m];
    for (row, &n) in set.design().iter().zip(counts) {
        let p = n / exposure;
        for k in 0..m {
            rhs[k] += row[k] * p;
        }
    }
    let x = sets::cholesky_solve(m, chol, &rhs);
    Ok(matrix_from_coefficients(set.dim(), &x))
}

/// Merge labeled projection-count tables into a count vector aligned with a
/// projector set.
///
/// Identical projections recur across physical settings (the time-basis
/// projections appear in every phase setting); their counts are summed, after
/// which every projection of a campaign carries uniform exposure. Labels are
/// joined as `pol` for polarization-only tables, the region label for 4-dim
/// time-bin sets, and `pol:region` for the 16-dim hyper set.
pub fn assemble_counts(
    set: &ProjectorSet,
    tables: &[ProjectionCounts],
) -> Result<Vec<f64>, TomoError> {
    let mut out = vec![0.0; set.len()];
    for table in tables {
        for (region_label, &count) in &table.counts {
            let label = if !table.setting.timebin_enabled {
                table.setting.pol_label.clone()
            } else if set.dim() == 4 {
                region_label.clone()
            } else {
                format!("{}:{}", table.setting.pol_label, region_label)
            };
            let idx = set.index_of(&label).ok_or(TomoError::UnknownLabel(label))?;
            out[idx] += count as f64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::qlin::random::random_density;
    use crate::qlin::{eig_hermitian, project_to_physical, DensityMatrix, Ket, C64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, Poisson};

    fn bell() -> Ket {
        Ket::normalize(vec![C64::ONE, C64::ZERO, C64::ZERO, C64::ONE]).unwrap()
    }

    fn exact_counts(set: &ProjectorSet, rho: &DensityMatrix, scale: f64) -> Vec<f64> {
        set.probabilities(rho.matrix()).iter().map(|p| p * scale).collect()
    }

    fn poisson_counts(set: &ProjectorSet, rho: &DensityMatrix, scale: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        set.probabilities(rho.matrix())
            .iter()
            .map(|&p| {
                let mean = p * scale;
                if mean <= 0.0 {
                    0.0
                } else {
                    Poisson::new(mean).unwrap().sample(&mut rng)
                }
            })
            .collect()
    }

    #[test]
    fn pol_set_is_complete_and_well_conditioned() {
        let set = standard_pol_set();
        assert_eq!(set.len(), 16);
        assert_eq!(set.completeness_rank(), 16);
        assert!(set.condition_number().is_finite());
        assert!(set.condition_number() < 1e3, "condition {}", set.condition_number());
        for p in set.projectors() {
            assert!((p.ket.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn timebin_set_has_sixteen_distinct_projections() {
        let set = timebin_set_from_phases();
        assert_eq!(set.len(), 16);
        assert_eq!(set.completeness_rank(), 16);
        // enumeration before deduplication: 9 regions × 4 settings
        assert_eq!(TIMEBIN_PHASE_SETTINGS.len() * 9, 36);
        let ee: Vec<_> = set.projectors().iter().filter(|p| p.label == "EE").collect();
        let ll: Vec<_> = set.projectors().iter().filter(|p| p.label == "LL").collect();
        assert_eq!(ee.len(), 1);
        assert_eq!(ll.len(), 1);
    }

    #[test]
    fn hyper_set_has_rank_256() {
        let set = hyper_set();
        assert_eq!(set.len(), 256);
        assert_eq!(set.completeness_rank(), 256);
    }

    #[test]
    fn hyper_projectors_marginalize_to_factors() {
        // summing the hyper design rows over a complete partner subgroup
        // reproduces the polarization factor's design row
        let pol = standard_pol_set();
        let hyper = hyper_set();
        let rho = crate::source::build_hyper_state(&crate::source::SourceParams::default())
            .unwrap()
            .rho16;
        let pol_marginal = crate::qlin::partial_trace(&rho, crate::qlin::Keep::First, (4, 4)).unwrap();
        let hp = hyper.probabilities(rho.matrix());
        for (i, p) in pol.projectors().iter().enumerate() {
            let mut summed = 0.0;
            for tl in ["EE", "EL", "LE", "LL"] {
                let idx = hyper.index_of(&format!("{}:{}", p.label, tl)).unwrap();
                summed += hp[idx];
            }
            let direct = pol.probabilities(pol_marginal.matrix())[i];
            assert!((summed - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_subgroup_probabilities_sum_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for set in [standard_pol_set(), timebin_set_from_phases()] {
            let rho = random_density(4, &mut rng);
            let probs = set.probabilities(rho.matrix());
            let s: f64 = set.norm_subgroup().iter().map(|&i| probs[i]).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        let set = hyper_set();
        let rho = random_density(16, &mut rng);
        let probs = set.probabilities(rho.matrix());
        let s: f64 = set.norm_subgroup().iter().map(|&i| probs[i]).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_inversion_recovers_bell_state_exactly() {
        let set = standard_pol_set();
        let rho = DensityMatrix::from_ket(&bell());
        let counts = exact_counts(&set, &rho, 1.0);
        let m = linear_inversion(&counts, &set).unwrap();
        assert!((&m - rho.matrix()).max_norm() < 1e-10);
    }

    #[test]
    fn linear_inversion_round_trips_random_states() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let set = standard_pol_set();
        for _ in 0..20 {
            let rho = random_density(4, &mut rng);
            let counts = exact_counts(&set, &rho, 1e6);
            let m = linear_inversion(&counts, &set).unwrap();
            let rec = project_to_physical(&m).unwrap();
            assert!(rec.trace_distance(&rho) < 1e-8);
        }
    }

    #[test]
    fn linear_inversion_is_linear_in_counts() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let set = standard_pol_set();
        let c1 = exact_counts(&set, &random_density(4, &mut rng), 1e4);
        let c2 = exact_counts(&set, &random_density(4, &mut rng), 1e4);
        for &alpha in &[0.25, 0.5, 0.75] {
            let mix: Vec<f64> =
                c1.iter().zip(&c2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let lhs = linear_inversion(&mix, &set).unwrap();
            let m1 = linear_inversion(&c1, &set).unwrap();
            let m2 = linear_inversion(&c2, &set).unwrap();
            let rhs = &m1.scale(C64::new(alpha, 0.0)) + &m2.scale(C64::new(1.0 - alpha, 0.0));
            assert!((&lhs - &rhs).max_norm() < 1e-10);
        }
    }

    #[test]
    fn linear_inversion_rejects_rank_deficient_sets() {
        // duplicate a single projector 16 times: rank 1
        let ket = bell();
        let projectors: Vec<LabeledProjector> = (0..16)
            .map(|i| LabeledProjector { label: format!("P{i}"), ket: ket.clone() })
            .collect();
        let set = ProjectorSet::new(4, projectors, vec![0]).unwrap();
        assert!(set.completeness_rank() < 16);
        let counts = vec![1.0; 16];
        assert!(matches!(linear_inversion(&counts, &set), Err(TomoError::RankDeficient)));
    }

    #[test]
    fn inversion_negativity_shrinks_with_counts() {
        // Poisson noise pushes the least-squares estimate outside the state
        // space; the most negative eigenvalue shrinks like 1/√N
        let set = standard_pol_set();
        let rho = DensityMatrix::from_ket(&bell());
        let mut worst = Vec::new();
        for (i, &n) in [1e3, 1e4, 1e5].iter().enumerate() {
            let mut acc: f64 = 0.0;
            let trials = 8;
            for t in 0..trials {
                let counts = poisson_counts(&set, &rho, n, 100 + (i * trials + t) as u64);
                let m = linear_inversion(&counts, &set).unwrap();
                let (evals, _) = eig_hermitian(&m.hermitian_part()).unwrap();
                acc += evals.last().unwrap().min(0.0).abs();
            }
            worst.push(acc / trials as f64);
        }
        assert!(worst[0] > worst[1] && worst[1] > worst[2], "negativity did not shrink: {worst:?}");
        let r1 = worst[0] / worst[1];
        let r2 = worst[1] / worst[2];
        let target = 10.0_f64.sqrt();
        for r in [r1, r2] {
            assert!(r > target / 2.2 && r < target * 2.2, "scaling ratio {r}");
        }
    }

    #[test]
    fn mle_round_trips_ideal_hyper_state() {
        let set = hyper_set();
        let psi = crate::source::hyper_target(0.0);
        let rho = DensityMatrix::from_ket(&psi);
        let counts = exact_counts(&set, &rho, 1e7);
        let out = mle_reconstruct(&counts, &set, &MleConfig::default()).unwrap();
        let f = metrics::fidelity_to_pure(&out.rho, &psi).unwrap();
        assert!(f > 0.999, "fidelity {f}");
        assert!(out.converged);
    }

    #[test]
    fn mle_recovers_maximally_mixed_from_noisy_counts() {
        let set = standard_pol_set();
        let rho = DensityMatrix::maximally_mixed(4);
        let counts = poisson_counts(&set, &rho, 1e5, 7);
        let out = mle_reconstruct(&counts, &set, &MleConfig::default()).unwrap();
        assert!(out.rho.trace_distance(&rho) < 0.02);
    }

    #[test]
    fn mle_beats_projected_linear_inversion_likelihood() {
        let set = standard_pol_set();
        let rho = DensityMatrix::from_ket(&bell());
        let counts = poisson_counts(&set, &rho, 1e3, 11);
        let exposure = set.normalization(&counts);
        let ll = |state: &DensityMatrix| -> f64 {
            set.probabilities(state.matrix())
                .iter()
                .zip(&counts)
                .map(|(&p, &n)| {
                    let mu = exposure * p;
                    if n > 0.0 { n * mu.max(1e-300).ln() - mu } else { -mu }
                })
                .sum()
        };
        let li = project_to_physical(&linear_inversion(&counts, &set).unwrap()).unwrap();
        let out = mle_reconstruct(&counts, &set, &MleConfig::default()).unwrap();
        assert!(
            out.final_loglik >= ll(&li) - 1e-9,
            "MLE {} below projected inversion {}",
            out.final_loglik,
            ll(&li)
        );
    }

    #[test]
    fn mle_rejects_all_zero_counts() {
        let set = standard_pol_set();
        let counts = vec![0.0; 16];
        assert!(matches!(
            mle_reconstruct(&counts, &set, &MleConfig::default()),
            Err(TomoError::BadCounts(_))
        ));
    }

    #[test]
    fn mle_fidelity_improves_with_counts() {
        let set = standard_pol_set();
        let rho = DensityMatrix::from_ket(&bell());
        let mut medians = Vec::new();
        for (block, &n) in [1e2, 1e3, 1e4].iter().enumerate() {
            let mut fids: Vec<f64> = (0..20)
                .map(|s| {
                    let counts = poisson_counts(&set, &rho, n, (block * 20 + s) as u64 + 500);
                    let out = mle_reconstruct(&counts, &set, &MleConfig::default()).unwrap();
                    metrics::fidelity_to_pure(&out.rho, &bell()).unwrap()
                })
                .collect();
            fids.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(0.5 * (fids[9] + fids[10]));
        }
        assert!(
            medians[0] <= medians[1] && medians[1] <= medians[2],
            "medians not monotone: {medians:?}"
        );
    }

    #[test]
    fn marginalization_commutes_with_reconstruction() {
        // exact-probability limit: reconstructing the hyper state and tracing
        // out time bin agrees with reconstructing the summed-count marginal
        let params = crate::source::SourceParams::default();
        let model = crate::source::build_hyper_state(&params).unwrap();
        let hyper = hyper_set();
        let pol = standard_pol_set();
        let hyper_counts = exact_counts(&hyper, &model.rho16, 1e7);
        let out16 = mle_reconstruct(&hyper_counts, &hyper, &MleConfig::default()).unwrap();
        let traced = crate::qlin::partial_trace(&out16.rho, crate::qlin::Keep::First, (4, 4)).unwrap();

        let mut pol_counts = vec![0.0; pol.len()];
        for (i, p) in pol.projectors().iter().enumerate() {
            for tl in ["EE", "EL", "LE", "LL"] {
                let idx = hyper.index_of(&format!("{}:{}", p.label, tl)).unwrap();
                pol_counts[i] += hyper_counts[idx];
            }
        }
        let out4 = mle_reconstruct(&pol_counts, &pol, &MleConfig::default()).unwrap();
        let dist = traced.trace_distance(&out4.rho);
        assert!(dist < 1e-6, "trace distance {dist}");
    }

    #[test]
    fn bootstrap_zero_variance_without_resampling() {
        let set = standard_pol_set();
        let rho = DensityMatrix::from_ket(&bell());
        let counts = exact_counts(&set, &rho, 1e4);
        let opts = BootstrapOptions { n_resamples: 10, seed: 1, resample: false };
        let errs = bootstrap_errors(&counts, &set, &MleConfig::default(), &opts, |r| {
            vec![metrics::fidelity_to_pure(r, &bell()).unwrap()]
        })
        .unwrap();
        assert!(errs.std_devs[0] < 1e-12, "std {}", errs.std_devs[0]);
    }

    #[test]
    fn bootstrap_requires_ten_resamples() {
        let set = standard_pol_set();
        let counts = vec![1.0; 16];
        let opts = BootstrapOptions::new(5, 1);
        assert!(bootstrap_errors(&counts, &set, &MleConfig::default(), &opts, |_| vec![0.0]).is_err());
    }

    #[test]
    fn bootstrap_errors_shrink_with_counts() {
        let set = standard_pol_set();
        let rho = DensityMatrix::from_ket(&bell());
        let mut sigmas = Vec::new();
        for &n in &[1e3, 1e4, 1e5] {
            let counts = poisson_counts(&set, &rho, n, 77);
            let opts = BootstrapOptions::new(40, 900);
            let errs = bootstrap_errors(&counts, &set, &MleConfig::default(), &opts, |r| {
                vec![metrics::fidelity_to_pure(r, &bell()).unwrap()]
            })
            .unwrap();
            sigmas.push(errs.std_devs[0]);
        }
        let target = 10.0_f64.sqrt();
        for pair in sigmas.windows(2) {
            let r = pair[0] / pair[1];
            assert!(r > target / 1.5 && r < target * 1.5, "bootstrap scaling {sigmas:?}");
        }
    }

    #[test]
    fn bootstrap_error_matches_paper_scale_at_desk_counts() {
        // 10³ pairs per setting on a dim-4 reconstruction: fidelity error of
        // order 0.01–0.1, the scale of quoted parenthetical uncertainties
        let set = standard_pol_set();
        let params = crate::source::SourceParams::default();
        let rho = crate::source::build_polarization_state(&params).unwrap();
        let counts = poisson_counts(&set, &rho, 1e3, 13);
        let opts = BootstrapOptions::new(60, 14);
        let errs = bootstrap_errors(&counts, &set, &MleConfig::default(), &opts, |r| {
            vec![metrics::fidelity_to_pure(r, &crate::source::polarization_bell()).unwrap()]
        })
        .unwrap();
        let sigma = errs.std_devs[0];
        assert!((0.005..0.15).contains(&sigma), "fidelity error {sigma}");
    }

    #[test]
    fn random_states_survive_mle_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let set = standard_pol_set();
        for _ in 0..5 {
            let rho = random_density(4, &mut rng);
            let counts = exact_counts(&set, &rho, 1e7);
            let out = mle_reconstruct(&counts, &set, &MleConfig::default()).unwrap();
            assert!(out.rho.trace_distance(&rho) < 1e-4, "distance {}", out.rho.trace_distance(&rho));
        }
    }

    #[test]
    fn maximally_mixed_init_also_converges() {
        let set = standard_pol_set();
        let rho = DensityMatrix::from_ket(&bell());
        let counts = poisson_counts(&set, &rho, 1e4, 19);
        let cfg = MleConfig { init: InitStrategy::MaximallyMixed, ..MleConfig::default() };
        let out = mle_reconstruct(&counts, &set, &cfg).unwrap();
        let f = metrics::fidelity_to_pure(&out.rho, &bell()).unwrap();
        assert!(f > 0.95, "fidelity {f} from mixed init");
    }

    #[test]
    fn assemble_counts_merges_identical_projections() {
        use crate::detection::{
            extract_projection_counts, synthesize_histogram, MeasurementSetting, PolAnalyzer,
        };
        let params = crate::source::SourceParams::default();
        let model = crate::source::build_hyper_state(&params).unwrap();
        let set = timebin_set_from_phases();
        let mut tables = Vec::new();
        for (i, &(pxx, px)) in TIMEBIN_PHASE_SETTINGS.iter().enumerate() {
            let s = MeasurementSetting::from_analyzers(PolAnalyzer::H, PolAnalyzer::H, pxx, px, 0.0, true);
            let h = synthesize_histogram(&model.rho16, &s, &params, 20_000, i as u64, 20.0);
            tables.push(extract_projection_counts(&h, &s).unwrap());
        }
        let counts = assemble_counts(&set, &tables).unwrap();
        assert_eq!(counts.len(), 16);
        // every projection saw exposure; time-basis labels merged 4 tables
        assert!(counts.iter().all(|&c| c > 0.0));
        let ee = counts[set.index_of("EE").unwrap()];
        let direct: u64 = tables.iter().map(|t| t.counts["EE"]).sum();
        assert_eq!(ee, direct as f64);
    }

    #[test]
    fn rng_streams_differ_per_resample() {
        let mut a = ChaCha12Rng::seed_from_u64(5);
        a.set_stream(1);
        let mut b = ChaCha12Rng::seed_from_u64(5);
        b.set_stream(2);
        let xa: u64 = a.random();
        let xb: u64 = b.random();
        assert_ne!(xa, xb);
    }
}
