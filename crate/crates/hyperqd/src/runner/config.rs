//! Run configuration and the flat key-value config format.
//!
//! The format is one `key = value` pair per line with dotted section
//! prefixes (`source.tau_x = 400`); `#` starts a comment. Unknown keys are
//! rejected with the offending key named, and every run echoes its full
//! effective configuration in this format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use super::RunnerError;
use crate::source::SourceParams;
use crate::tomography::{InitStrategy, MleConfig};

/// The four measurement campaigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Campaign {
    /// 16 polarization settings with the interferometers excluded.
    PolOnly,
    /// 4 interferometer phase settings at fixed HH polarization.
    TbAtHh,
    /// Full 16 × 16 = 256-projection tomography of the 16-dim state.
    Hyper256,
    /// Hyper-campaign data reduced to each 4-dim subspace by summing the
    /// partner's basis projections before reconstruction.
    SubspaceFromHyper,
}

impl Campaign {
    pub const ALL: [Campaign; 4] =
        [Campaign::PolOnly, Campaign::TbAtHh, Campaign::Hyper256, Campaign::SubspaceFromHyper];

    pub fn as_str(&self) -> &'static str {
        match self {
            Campaign::PolOnly => "pol-only",
            Campaign::TbAtHh => "tb-at-HH",
            Campaign::Hyper256 => "hyper-256",
            Campaign::SubspaceFromHyper => "subspace-from-hyper",
        }
    }

    pub fn parse(s: &str) -> Result<Self, RunnerError> {
        match s.to_ascii_lowercase().as_str() {
            "pol-only" => Ok(Campaign::PolOnly),
            "tb-at-hh" => Ok(Campaign::TbAtHh),
            "hyper-256" => Ok(Campaign::Hyper256),
            "subspace-from-hyper" => Ok(Campaign::SubspaceFromHyper),
            _ => Err(RunnerError::Config {
                field: "campaign".into(),
                reason: format!(
                    "unknown campaign '{s}'; expected one of pol-only, tb-at-HH, hyper-256, subspace-from-hyper"
                ),
            }),
        }
    }
}

/// Reference values the report compares reconstructions against.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRefs {
    pub f_pol: f64,
    pub c_pol: f64,
    pub f_tb: f64,
    pub c_tb: f64,
    pub f_hyper: f64,
}

impl Default for BenchmarkRefs {
    fn default() -> Self {
        Self { f_pol: 0.81, c_pol: 0.70, f_tb: 0.87, c_tb: 0.76, f_hyper: 0.55 }
    }
}

/// Everything a reproducible run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: SourceParams,
    pub campaign: Campaign,
    pub n_pairs_per_setting: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub bin_width_ps: f64,
    pub mle: MleConfig,
    pub bootstrap_resamples: usize,
    pub benchmarks: BenchmarkRefs,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: SourceParams::default(),
            campaign: Campaign::Hyper256,
            n_pairs_per_setting: 10_000,
            seed: 1,
            output_dir: PathBuf::from("out"),
            bin_width_ps: 20.0,
            mle: MleConfig::default(),
            bootstrap_resamples: 50,
            benchmarks: BenchmarkRefs::default(),
        }
    }
}

impl RunConfig {
    /// Parse the flat key-value format, starting from defaults.
    pub fn from_kv_str(text: &str) -> Result<Self, RunnerError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| RunnerError::Config {
                field: format!("line {}", lineno + 1),
                reason: format!("expected 'key = value', got '{line}'"),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Apply one key-value assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), RunnerError> {
        let bad = |reason: String| RunnerError::Config { field: key.to_string(), reason };
        let parse_f64 = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("not a number: '{v}'")));
        let parse_u64 = |v: &str| v.parse::<u64>().map_err(|_| bad(format!("not an integer: '{v}'")));
        match key {
            "source.tau_xx" => self.source.tau_xx = parse_f64(value)?,
            "source.tau_x" => self.source.tau_x = parse_f64(value)?,
            "source.fss" => self.source.fss = parse_f64(value)?,
            "source.eps" => self.source.eps = parse_f64(value)?,
            "source.phi_p" => self.source.phi_p = parse_f64(value)?,
            "source.delay" => self.source.delay = parse_f64(value)?,
            "source.rep_rate" => self.source.rep_rate = parse_f64(value)?,
            "source.cross_dephasing" => self.source.cross_dephasing = parse_f64(value)?,
            "source.tb_dephasing" => self.source.tb_dephasing = parse_f64(value)?,
            "source.background" => self.source.background = parse_f64(value)?,
            "source.jitter_sigma" => self.source.jitter_sigma = parse_f64(value)?,
            "source.double_exc_scale" => self.source.double_exc_scale = parse_f64(value)?,
            "campaign" => self.campaign = Campaign::parse(value)?,
            "n_pairs_per_setting" => self.n_pairs_per_setting = parse_u64(value)?,
            "seed" => self.seed = parse_u64(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "detection.bin_width_ps" => self.bin_width_ps = parse_f64(value)?,
            "mle.max_iterations" => self.mle.max_iterations = parse_u64(value)? as usize,
            "mle.rel_loglik_tol" => self.mle.rel_loglik_tol = parse_f64(value)?,
            "mle.init" => {
                self.mle.init = match value {
                    "linear-inversion" => InitStrategy::LinearInversion,
                    "maximally-mixed" => InitStrategy::MaximallyMixed,
                    _ => {
                        return Err(bad(format!(
                            "unknown init '{value}'; expected linear-inversion or maximally-mixed"
                        )))
                    }
                }
            }
            "bootstrap.resamples" => self.bootstrap_resamples = parse_u64(value)? as usize,
            "benchmark.f_pol" => self.benchmarks.f_pol = parse_f64(value)?,
            "benchmark.c_pol" => self.benchmarks.c_pol = parse_f64(value)?,
            "benchmark.f_tb" => self.benchmarks.f_tb = parse_f64(value)?,
            "benchmark.c_tb" => self.benchmarks.c_tb = parse_f64(value)?,
            "benchmark.f_hyper" => self.benchmarks.f_hyper = parse_f64(value)?,
            _ => return Err(bad("unknown configuration key".into())),
        }
        Ok(())
    }

    /// Full effective configuration in the key-value format; parsing it back
    /// reproduces this config exactly.
    pub fn to_kv_string(&self) -> String {
        let mut pairs: BTreeMap<&'static str, String> = BTreeMap::new();
        let s = &self.source;
        pairs.insert("source.tau_xx", s.tau_xx.to_string());
        pairs.insert("source.tau_x", s.tau_x.to_string());
        pairs.insert("source.fss", s.fss.to_string());
        pairs.insert("source.eps", s.eps.to_string());
        pairs.insert("source.phi_p", s.phi_p.to_string());
        pairs.insert("source.delay", s.delay.to_string());
        pairs.insert("source.rep_rate", s.rep_rate.to_string());
        pairs.insert("source.cross_dephasing", s.cross_dephasing.to_string());
        pairs.insert("source.tb_dephasing", s.tb_dephasing.to_string());
        pairs.insert("source.background", s.background.to_string());
        pairs.insert("source.jitter_sigma", s.jitter_sigma.to_string());
        pairs.insert("source.double_exc_scale", s.double_exc_scale.to_string());
        pairs.insert("campaign", self.campaign.as_str().to_string());
        pairs.insert("n_pairs_per_setting", self.n_pairs_per_setting.to_string());
        pairs.insert("seed", self.seed.to_string());
        pairs.insert("output_dir", self.output_dir.display().to_string());
        pairs.insert("detection.bin_width_ps", self.bin_width_ps.to_string());
        pairs.insert("mle.max_iterations", self.mle.max_iterations.to_string());
        pairs.insert("mle.rel_loglik_tol", self.mle.rel_loglik_tol.to_string());
        pairs.insert(
            "mle.init",
            match self.mle.init {
                InitStrategy::LinearInversion => "linear-inversion".to_string(),
                InitStrategy::MaximallyMixed => "maximally-mixed".to_string(),
            },
        );
        pairs.insert("bootstrap.resamples", self.bootstrap_resamples.to_string());
        pairs.insert("benchmark.f_pol", self.benchmarks.f_pol.to_string());
        pairs.insert("benchmark.c_pol", self.benchmarks.c_pol.to_string());
        pairs.insert("benchmark.f_tb", self.benchmarks.f_tb.to_string());
        pairs.insert("benchmark.c_tb", self.benchmarks.c_tb.to_string());
        pairs.insert("benchmark.f_hyper", self.benchmarks.f_hyper.to_string());
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
