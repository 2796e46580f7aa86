//! Arrival-time coincidence grids: Poissonian synthesis, window extraction,
//! and the delimiter-separated interchange format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{outcome_probabilities, ArrivalRegion, DetectionError, MeasurementSetting};
use crate::qlin::DensityMatrix;
use crate::source::SourceParams;

/// 2-D arrival-time count grid (τ_XX, τ_X) relative to the laser clock.
///
/// Bin 0 starts at −delay/2 so each arrival region occupies a contiguous,
/// disjoint window of width `delay` centered on its nominal arrival time
/// (0, delay, 2·delay). Arrival times are folded into one laser period.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_width_ps: f64,
    pub delay_ns: f64,
    pub period_ps: f64,
    pub seed: u64,
    pub n_bins: usize,
    /// Sparse counts keyed by (τ_xx bin, τ_x bin).
    pub grid: BTreeMap<(usize, usize), u64>,
    /// Pairs used for the synthesis, echoed for downstream normalization.
    pub n_pairs: u64,
}

impl CoincidenceHistogram {
    /// Left edge of bin 0 in ps (relative to the laser clock).
    pub fn origin_ps(&self) -> f64 {
        -0.5 * self.delay_ns * 1000.0
    }

    /// Bin index for an arrival time in ps, after folding into the period.
    pub fn bin_of(&self, t_ps: f64) -> usize {
        let folded = (t_ps - self.origin_ps()).rem_euclid(self.period_ps);
        ((folded / self.bin_width_ps) as usize).min(self.n_bins - 1)
    }

    /// Inclusive bin range [lo, hi] of one arrival region's window.
    pub fn region_window(&self, region: ArrivalRegion) -> (usize, usize) {
        let delay_ps = self.delay_ns * 1000.0;
        let lo_t = region.index() as f64 * delay_ps - 0.5 * delay_ps;
        let hi_t = lo_t + delay_ps;
        let lo = (((lo_t - self.origin_ps()) / self.bin_width_ps).ceil() as isize).max(0) as usize;
        let hi_excl = ((hi_t - self.origin_ps()) / self.bin_width_ps).ceil() as usize;
        (lo, hi_excl.min(self.n_bins).saturating_sub(1))
    }

    /// Windows of all nine region pairs, keyed by region indices.
    pub fn region_labels(&self) -> BTreeMap<(usize, usize), ((usize, usize), (usize, usize))> {
        let mut out = BTreeMap::new();
        for rxx in ArrivalRegion::ALL {
            for rx in ArrivalRegion::ALL {
                out.insert(
                    (rxx.index(), rx.index()),
                    (self.region_window(rxx), self.region_window(rx)),
                );
            }
        }
        out
    }

    pub fn total_counts(&self) -> u64 {
        self.grid.values().sum()
    }

    /// Counts inside one region-pair window.
    pub fn window_counts(&self, rxx: ArrivalRegion, rx: ArrivalRegion) -> u64 {
        let (xlo, xhi) = self.region_window(rxx);
        let (ylo, yhi) = self.region_window(rx);
        self.grid
            .iter()
            .filter(|(&(bx, by), _)| bx >= xlo && bx <= xhi && by >= ylo && by <= yhi)
            .map(|(_, &c)| c)
            .sum()
    }

    /// 1-D anti-diagonal view: counts binned by τ_xx + τ_x, the five-peak
    /// projection of the grid.
    pub fn anti_diagonal_profile(&self) -> BTreeMap<usize, u64> {
        let mut out = BTreeMap::new();
        for (&(bx, by), &c) in &self.grid {
            *out.entry(bx + by).or_insert(0) += c;
        }
        out
    }

    /// Marginal count profile along one axis (0 = τ_xx, 1 = τ_x).
    pub fn marginal(&self, axis: usize) -> BTreeMap<usize, u64> {
        let mut out = BTreeMap::new();
        for (&(bx, by), &c) in &self.grid {
            *out.entry(if axis == 0 { bx } else { by }).or_insert(0) += c;
        }
        out
    }
}

/// Draw a synthetic coincidence histogram: region counts are independent
/// Poisson with mean `n_pairs × region probability`, arrival times inside a
/// region are the nominal time plus the photon's exponential decay
/// (τ_XX for the biexciton axis, τ_X for the exciton axis) plus Gaussian
/// jitter; a uniform Poisson background floor adds a total of
/// `background × true coincidences`. Deterministic for a given seed.
pub fn synthesize_histogram(
    rho16: &DensityMatrix,
    setting: &MeasurementSetting,
    params: &SourceParams,
    n_pairs: u64,
    seed: u64,
    bin_width_ps: f64,
) -> CoincidenceHistogram {
    assert!(n_pairs > 0, "synthesize_histogram needs n_pairs > 0");
    assert!(bin_width_ps > 0.0);
    let period_ps = params.period_ps();
    let n_bins = (period_ps / bin_width_ps).ceil() as usize;
    let mut h = CoincidenceHistogram {
        bin_width_ps,
        delay_ns: params.delay,
        period_ps,
        seed,
        n_bins,
        grid: BTreeMap::new(),
        n_pairs,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let probs = outcome_probabilities(rho16, setting);
    let delay_ps = params.delay * 1000.0;

    let exp_xx = Exp::new(1.0 / params.tau_xx).expect("positive lifetime");
    let exp_x = Exp::new(1.0 / params.tau_x).expect("positive lifetime");
    let jitter = if params.jitter_sigma > 0.0 {
        Some(Normal::new(0.0, params.jitter_sigma).expect("positive sigma"))
    } else {
        None
    };

    let mut total_true_mean = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let mean = n_pairs as f64 * probs.grid[i][j];
            total_true_mean += mean;
            let count = poisson_draw(&mut rng, mean);
            for _ in 0..count {
                let mut t_xx = i as f64 * delay_ps + exp_xx.sample(&mut rng);
                let mut t_x = j as f64 * delay_ps + exp_x.sample(&mut rng);
                if let Some(n) = jitter {
                    t_xx += n.sample(&mut rng);
                    t_x += n.sample(&mut rng);
                }
                let key = (h.bin_of(t_xx), h.bin_of(t_x));
                *h.grid.entry(key).or_insert(0) += 1;
            }
        }
    }

    if params.background > 0.0 {
        let bg_total = poisson_draw(&mut rng, params.background * total_true_mean);
        for _ in 0..bg_total {
            let bx = rng.random_range(0..n_bins);
            let by = rng.random_range(0..n_bins);
            *h.grid.entry((bx, by)).or_insert(0) += 1;
        }
    }
    h
}

fn poisson_draw(rng: &mut impl Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

/// Integrated counts per labeled projection for one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCounts {
    pub setting: MeasurementSetting,
    pub counts: BTreeMap<String, u64>,
    pub total_pairs: u64,
}

impl ProjectionCounts {
    pub fn validate(&self) -> Result<(), DetectionError> {
        for (label, &c) in &self.counts {
            if c > self.total_pairs {
                return Err(DetectionError::Parse(format!(
                    "count for {label} ({c}) exceeds total pairs ({})",
                    self.total_pairs
                )));
            }
        }
        Ok(())
    }
}

/// Integrate the histogram's region windows into labeled projection counts.
///
/// With time-bin analysis enabled each of the nine windows becomes one
/// labeled count (labels from the projector the window realizes, e.g. "EE"
/// or "DD"); with it disabled all bins are summed into the single
/// polarization projection (label "ALL").
pub fn extract_projection_counts(
    h: &CoincidenceHistogram,
    setting: &MeasurementSetting,
) -> Result<ProjectionCounts, DetectionError> {
    let mut counts = BTreeMap::new();
    if setting.timebin_enabled {
        // windows tile [−Δ/2, 3Δ−Δ/2) disjointly by construction; verify
        let mut prev_hi: Option<usize> = None;
        for r in ArrivalRegion::ALL {
            let (lo, hi) = h.region_window(r);
            if hi < lo {
                return Err(DetectionError::BadWindows(format!("empty window for region {r:?}")));
            }
            if let Some(p) = prev_hi {
                if lo <= p {
                    return Err(DetectionError::BadWindows(format!(
                        "window for region {r:?} starts at bin {lo}, overlapping previous end {p}"
                    )));
                }
            }
            prev_hi = Some(hi);
        }
        for rxx in ArrivalRegion::ALL {
            for rx in ArrivalRegion::ALL {
                let label = setting.region_label(rxx, rx);
                let c = h.window_counts(rxx, rx);
                *counts.entry(label).or_insert(0) += c;
            }
        }
    } else {
        counts.insert("ALL".to_string(), h.total_counts());
    }
    let pc = ProjectionCounts { setting: setting.clone(), counts, total_pairs: h.n_pairs };
    pc.validate()?;
    Ok(pc)
}

// ── Interchange formats ──────────────────────────────────────────────────────

/// Histogram export: header with (bin_width_ps, delay_ns, seed), one row per
/// nonzero (τ_xx_bin, τ_x_bin, count), tab-separated.
pub fn histogram_to_table(h: &CoincidenceHistogram) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# bin_width_ps={} delay_ns={} seed={}",
        h.bin_width_ps, h.delay_ns, h.seed
    );
    let _ = writeln!(
        out,
        "# period_ps={} n_bins={} origin_ps={} n_pairs={}",
        h.period_ps,
        h.n_bins,
        h.origin_ps(),
        h.n_pairs
    );
    out.push_str("tau_xx_bin\ttau_x_bin\tcount\n");
    for (&(bx, by), &c) in &h.grid {
        let _ = writeln!(out, "{bx}\t{by}\t{c}");
    }
    out
}

/// Parse the histogram table format back into a histogram.
pub fn parse_histogram_table(text: &str) -> Result<CoincidenceHistogram, DetectionError> {
    let mut header: BTreeMap<String, f64> = BTreeMap::new();
    let mut grid = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line == "tau_xx_bin\ttau_x_bin\tcount" {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for kv in rest.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    let val = v
                        .parse::<f64>()
                        .map_err(|_| DetectionError::Parse(format!("bad header value in '{kv}'")))?;
                    header.insert(k.to_string(), val);
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(DetectionError::Parse(format!("expected 3 tab-separated fields, got '{line}'")));
        }
        let bx: usize = fields[0].parse().map_err(|_| DetectionError::Parse(format!("bad bin '{}'", fields[0])))?;
        let by: usize = fields[1].parse().map_err(|_| DetectionError::Parse(format!("bad bin '{}'", fields[1])))?;
        let c: u64 = fields[2].parse().map_err(|_| DetectionError::Parse(format!("bad count '{}'", fields[2])))?;
        grid.insert((bx, by), c);
    }
    let need = |k: &str| {
        header
            .get(k)
            .copied()
            .ok_or_else(|| DetectionError::Parse(format!("missing header field {k}")))
    };
    Ok(CoincidenceHistogram {
        bin_width_ps: need("bin_width_ps")?,
        delay_ns: need("delay_ns")?,
        period_ps: need("period_ps")?,
        seed: need("seed")? as u64,
        n_bins: need("n_bins")? as usize,
        n_pairs: need("n_pairs")? as u64,
        grid,
    })
}

/// Region-count export: one `label<TAB>count` row per projection, with the
/// setting echoed in the header.
pub fn projection_counts_to_table(pc: &ProjectionCounts) -> String {
    let s = &pc.setting;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# pol={} qwp_xx={} hwp_xx={} qwp_x={} hwp_x={} phi_xx={} phi_x={} phi_p={} timebin={} pairs={}",
        s.pol_label,
        s.qwp_xx,
        s.hwp_xx,
        s.qwp_x,
        s.hwp_x,
        s.phi_xx,
        s.phi_x,
        s.phi_p,
        s.timebin_enabled as u8,
        pc.total_pairs
    );
    for (label, c) in &pc.counts {
        let _ = writeln!(out, "{label}\t{c}");
    }
    out
}

/// Parse the region-count table format.
pub fn parse_projection_counts(text: &str) -> Result<ProjectionCounts, DetectionError> {
    let mut header: BTreeMap<String, String> = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for kv in rest.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    header.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        let (label, c) = line
            .split_once('\t')
            .ok_or_else(|| DetectionError::Parse(format!("expected 'label<TAB>count', got '{line}'")))?;
        let c: u64 = c.trim().parse().map_err(|_| DetectionError::Parse(format!("bad count '{c}'")))?;
        counts.insert(label.to_string(), c);
    }
    let get_f = |k: &str| -> Result<f64, DetectionError> {
        header
            .get(k)
            .ok_or_else(|| DetectionError::Parse(format!("missing header field {k}")))?
            .parse::<f64>()
            .map_err(|_| DetectionError::Parse(format!("bad header field {k}")))
    };
    let pol = header.get("pol").cloned().unwrap_or_default();
    let mut setting = MeasurementSetting::new(
        get_f("qwp_xx")?,
        get_f("hwp_xx")?,
        get_f("qwp_x")?,
        get_f("hwp_x")?,
        get_f("phi_xx")?,
        get_f("phi_x")?,
        get_f("phi_p")?,
        get_f("timebin")? != 0.0,
    )?;
    if !pol.is_empty() {
        setting.pol_label = pol;
    }
    let total_pairs = get_f("pairs")? as u64;
    let pc = ProjectionCounts { setting, counts, total_pairs };
    pc.validate()?;
    Ok(pc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::PolAnalyzer;
    use crate::source::{self, SourceParams};

    fn hh_setting() -> MeasurementSetting {
        MeasurementSetting::from_analyzers(PolAnalyzer::H, PolAnalyzer::H, 0.0, 0.0, 0.0, true)
    }

    fn ideal() -> (DensityMatrix, SourceParams) {
        let p = SourceParams::ideal();
        (source::build_hyper_state(&p).unwrap().rho16, p)
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (rho, p) = ideal();
        let a = synthesize_histogram(&rho, &hh_setting(), &p, 20_000, 99, 20.0);
        let b = synthesize_histogram(&rho, &hh_setting(), &p, 20_000, 99, 20.0);
        assert_eq!(a, b);
        let c = synthesize_histogram(&rho, &hh_setting(), &p, 20_000, 100, 20.0);
        assert_ne!(a.grid, c.grid);
    }

    #[test]
    fn null_projection_gives_empty_grid() {
        let (rho, p) = ideal();
        let vh = MeasurementSetting::from_analyzers(PolAnalyzer::V, PolAnalyzer::H, 0.0, 0.0, 0.0, true);
        let h = synthesize_histogram(&rho, &vh, &p, 1_000_000, 3, 20.0);
        assert_eq!(h.total_counts(), 0);
    }

    #[test]
    fn region_means_match_probabilities_over_seeds() {
        // law-of-large-numbers: mean over 100 seeds within 3 standard errors
        let (rho, p) = ideal();
        let setting = hh_setting();
        let probs = outcome_probabilities(&rho, &setting);
        let n_pairs = 4000u64;
        let n_seeds = 100;
        let mut sums = [[0.0_f64; 3]; 3];
        for seed in 0..n_seeds {
            let h = synthesize_histogram(&rho, &setting, &p, n_pairs, seed, 20.0);
            for rxx in ArrivalRegion::ALL {
                for rx in ArrivalRegion::ALL {
                    sums[rxx.index()][rx.index()] += h.window_counts(rxx, rx) as f64;
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let mean = sums[i][j] / n_seeds as f64;
                let expect = n_pairs as f64 * probs.grid[i][j];
                if expect == 0.0 {
                    // populated only by exponential-tail leakage from neighbors
                    assert!(mean < 0.003 * n_pairs as f64, "region ({i},{j}): leakage {mean}");
                    continue;
                }
                // window truncation loses a few % of the exponential tails,
                // so allow 3 standard errors plus the analytic tail loss
                let tail = expect * 0.06;
                let se = (expect / n_seeds as f64).sqrt();
                assert!(
                    (mean - expect).abs() < 3.0 * se + tail,
                    "region ({i},{j}): mean {mean} vs expectation {expect}"
                );
            }
        }
    }

    #[test]
    fn exciton_marginal_decays_at_its_lifetime() {
        let p = SourceParams { jitter_sigma: 0.0, ..SourceParams::ideal() };
        let rho = source::build_hyper_state(&p).unwrap().rho16;
        let h = synthesize_histogram(&rho, &hh_setting(), &p, 2_000_000, 17, 20.0);
        // log-linear fit of the τ_x marginal inside the early region window
        let marginal = h.marginal(1);
        let (lo, hi) = h.region_window(ArrivalRegion::Early);
        let origin = h.origin_ps();
        let mut pts = Vec::new();
        for (&bin, &c) in &marginal {
            if bin < lo || bin > hi || c == 0 {
                continue;
            }
            let t = origin + (bin as f64 + 0.5) * h.bin_width_ps;
            if t < 0.0 {
                continue;
            }
            pts.push((t, (c as f64).ln()));
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let tau_fit = -1.0 / slope;
        assert!(
            (tau_fit - 400.0).abs() / 400.0 < 0.05,
            "fitted exciton lifetime {tau_fit} ps"
        );
    }

    #[test]
    fn window_truncation_loses_the_analytic_tail() {
        // exponential tail beyond +delay/2 at τ = 400 ps: e^{−1500/400} ≈ 2.35%
        let analytic = (-1500.0_f64 / 400.0).exp();
        assert!((analytic - 0.023518).abs() < 1e-5);
        assert!(analytic < 0.025);

        // with the interferometers excluded everything is generated at the
        // nominal early arrival, so any count past the early window on the
        // exciton axis is pure truncation loss
        let p = SourceParams { jitter_sigma: 0.0, ..SourceParams::ideal() };
        let rho = source::build_hyper_state(&p).unwrap().rho16;
        let setting =
            MeasurementSetting::from_analyzers(PolAnalyzer::H, PolAnalyzer::H, 0.0, 0.0, 0.0, false);
        let h = synthesize_histogram(&rho, &setting, &p, 4_000_000, 5, 20.0);
        let marginal = h.marginal(1);
        let (lo, hi) = h.region_window(ArrivalRegion::Early);
        let mut inside = 0u64;
        let mut leaked = 0u64;
        for (&b, &c) in &marginal {
            if b >= lo && b <= hi {
                inside += c;
            } else {
                leaked += c;
            }
        }
        let frac = leaked as f64 / (inside + leaked) as f64;
        assert!((frac - analytic).abs() < 0.002, "tail fraction {frac} vs analytic {analytic}");
    }

    #[test]
    fn extraction_assigns_corner_counts_to_time_basis() {
        let (rho, p) = ideal();
        let setting = hh_setting();
        let h = synthesize_histogram(&rho, &setting, &p, 50_000, 11, 20.0);
        let pc = extract_projection_counts(&h, &setting).unwrap();
        assert_eq!(pc.counts.len(), 9);
        assert!(pc.counts.contains_key("EE"));
        assert!(pc.counts.contains_key("DD"));
        assert!(pc.counts["EE"] > 0);
    }

    #[test]
    fn four_phase_settings_label_sixteen_projections() {
        use std::f64::consts::FRAC_PI_2;
        let mut labels = std::collections::BTreeSet::new();
        let mut total = 0;
        for (pxx, px) in [(0.0, 0.0), (0.0, FRAC_PI_2), (FRAC_PI_2, 0.0), (FRAC_PI_2, FRAC_PI_2)] {
            let s = MeasurementSetting::from_analyzers(PolAnalyzer::H, PolAnalyzer::H, pxx, px, 0.0, true);
            for rxx in ArrivalRegion::ALL {
                for rx in ArrivalRegion::ALL {
                    labels.insert(s.region_label(rxx, rx));
                    total += 1;
                }
            }
        }
        assert_eq!(total, 36);
        assert_eq!(labels.len(), 16);
        for l in ["EE", "EL", "LE", "LL", "DD", "DR", "RD", "RR", "ED", "ER", "DE", "RE", "LD", "LR", "DL", "RL"] {
            assert!(labels.contains(l), "missing {l}");
        }
    }

    #[test]
    fn histogram_table_round_trip() {
        let (rho, p) = ideal();
        let h = synthesize_histogram(&rho, &hh_setting(), &p, 10_000, 21, 25.0);
        let text = histogram_to_table(&h);
        assert!(text.starts_with("# bin_width_ps=25 delay_ns=3 seed=21\n"));
        let back = parse_histogram_table(&text).unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn projection_counts_table_round_trip() {
        let (rho, p) = ideal();
        let setting = hh_setting();
        let h = synthesize_histogram(&rho, &setting, &p, 10_000, 22, 25.0);
        let pc = extract_projection_counts(&h, &setting).unwrap();
        let text = projection_counts_to_table(&pc);
        let back = parse_projection_counts(&text).unwrap();
        assert_eq!(pc.counts, back.counts);
        assert_eq!(pc.total_pairs, back.total_pairs);
        assert_eq!(pc.setting.pol_label, back.setting.pol_label);
    }
}
