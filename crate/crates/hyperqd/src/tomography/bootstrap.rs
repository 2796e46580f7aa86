//! Poisson-resampled bootstrap error bars for reconstruction metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};

use super::mle::{mle_reconstruct, MleConfig};
use super::sets::ProjectorSet;
use super::TomoError;
use crate::qlin::DensityMatrix;

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub n_resamples: usize,
    pub seed: u64,
    /// When false, every resample reuses the original counts (zero-variance
    /// reference mode).
    pub resample: bool,
}

impl BootstrapOptions {
    pub fn new(n_resamples: usize, seed: u64) -> Self {
        Self { n_resamples, seed, resample: true }
    }
}

/// Per-metric bootstrap standard deviations, in the order produced by the
/// metric closure.
#[derive(Debug, Clone)]
pub struct BootstrapErrors {
    pub std_devs: Vec<f64>,
    pub n_resamples: usize,
}

/// Poisson-resample the counts, re-run the reconstruction and the metric
/// closure per resample, and return sample standard deviations. Resample r
/// draws from an independent random stream derived from (seed, r), so runs
/// are reproducible and resamples could execute concurrently.
pub fn bootstrap_errors(
    counts: &[f64],
    set: &ProjectorSet,
    cfg: &MleConfig,
    opts: &BootstrapOptions,
    mut metrics: impl FnMut(&DensityMatrix) -> Vec<f64>,
) -> Result<BootstrapErrors, TomoError> {
    if opts.n_resamples < 10 {
        return Err(TomoError::BadCounts(format!(
            "bootstrap needs at least 10 resamples, got {}",
            opts.n_resamples
        )));
    }
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(opts.n_resamples);
    for r in 0..opts.n_resamples {
        let resampled = if opts.resample {
            let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64 + 1);
            counts
                .iter()
                .map(|&c| {
                    if c <= 0.0 {
                        0.0
                    } else {
                        Poisson::new(c).expect("positive mean").sample(&mut rng)
                    }
                })
                .collect::<Vec<f64>>()
        } else {
            counts.to_vec()
        };
        let outcome = mle_reconstruct(&resampled, set, cfg)?;
        samples.push(metrics(&outcome.rho));
    }
    let n_metrics = samples[0].len();
    let n = samples.len() as f64;
    let mut std_devs = Vec::with_capacity(n_metrics);
    for k in 0..n_metrics {
        let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        std_devs.push(var.max(0.0).sqrt());
    }
    Ok(BootstrapErrors { std_devs, n_resamples: opts.n_resamples })
}
