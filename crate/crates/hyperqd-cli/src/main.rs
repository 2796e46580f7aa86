//! Command-line runner for the hyper-entangled photon-pair simulator.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 reconstruction
//! convergence warning, 4 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hyperqd::detection::parse_projection_counts;
use hyperqd::metrics;
use hyperqd::qlin::{read_density_matrix, write_density_matrix};
use hyperqd::runner::{self, Campaign, RunConfig, RunnerError};
use hyperqd::source;
use hyperqd::tomography::{
    assemble_counts, hyper_set, mle_reconstruct, standard_pol_set, timebin_set_from_phases,
};

#[derive(Parser)]
#[command(name = "hyperqd", version, about = "Simulate, reconstruct and quantify polarization x time-bin hyper-entangled photon pairs from a quantum-dot cascade")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key-value config file (dotted keys, e.g. `source.tau_x = 400`)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every setting derives its own stream from (seed, index)
    #[arg(long)]
    seed: Option<u64>,
    /// Pairs generated per measurement setting
    #[arg(long)]
    pairs: Option<u64>,
    /// Campaign: pol-only | tb-at-HH | hyper-256 | subspace-from-hyper
    #[arg(long)]
    campaign: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// End-to-end campaign: simulate, reconstruct, report
    Run(CommonArgs),
    /// Synthesize and export coincidence histograms and count tables only
    Simulate(CommonArgs),
    /// Reconstruct a density matrix from projection-count tables
    Tomo {
        /// Projector set: pol | timebin | hyper
        #[arg(long)]
        set: String,
        /// Count-table files (region-count export format), one per setting
        #[arg(long = "counts", required = true, num_args = 1..)]
        counts: Vec<PathBuf>,
        /// Where to write the density-matrix interchange file
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Metrics report for a stored density matrix
    Metrics {
        /// Density-matrix interchange file
        #[arg(long)]
        matrix: PathBuf,
        /// Pump phase used for the time-bin target state, radians
        #[arg(long, default_value_t = 0.0)]
        phi_p: f64,
    },
    /// Sweep the exciton analysis phase and fit the middle-peak visibility
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of phase points over [0, 2pi)
        #[arg(long, default_value_t = 16)]
        points: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<RunnerError>() {
                Some(RunnerError::Config { .. }) => 2,
                Some(_) => 4,
                None => 4,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load_config(&common)?;
            let outcome = runner::run(&cfg)?;
            print!("{}", outcome.report);
            println!("artifacts written to {}", cfg.output_dir.display());
            Ok(if outcome.convergence_warning { ExitCode::from(3) } else { ExitCode::SUCCESS })
        }
        Command::Simulate(common) => {
            let cfg = load_config(&common)?;
            let n = runner::simulate_only(&cfg)?;
            println!("simulated {n} settings into {}", cfg.output_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Tomo { set, counts, out, config } => {
            let cfg = match &config {
                Some(path) => RunConfig::from_kv_str(&read_text(path)?)?,
                None => RunConfig::default(),
            };
            let set = match set.as_str() {
                "pol" => standard_pol_set(),
                "timebin" => timebin_set_from_phases(),
                "hyper" => hyper_set(),
                other => {
                    return Err(RunnerError::Config {
                        field: "set".into(),
                        reason: format!("unknown projector set '{other}'; expected pol, timebin or hyper"),
                    }
                    .into())
                }
            };
            let mut tables = Vec::new();
            for path in &counts {
                tables.push(parse_projection_counts(&read_text(path)?)?);
            }
            let vector = assemble_counts(&set, &tables)?;
            let outcome = mle_reconstruct(&vector, &set, &cfg.mle)?;
            println!("projections: {}", set.len());
            println!("iterations: {}", outcome.iterations);
            println!("log-likelihood: {:.6}", outcome.final_loglik);
            println!("gradient norm: {:.3e}", outcome.grad_norm);
            println!("converged: {}", if outcome.converged { "yes" } else { "NO" });
            let text = write_density_matrix(&outcome.rho);
            match out {
                Some(path) => {
                    std::fs::write(&path, text)?;
                    println!("density matrix written to {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(if outcome.converged { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::Metrics { matrix, phi_p } => {
            let rho = read_density_matrix(&read_text(&matrix)?)?;
            match rho.dim() {
                4 => {
                    let pol_target = source::polarization_bell();
                    let tb_target = source::timebin_bell(phi_p);
                    println!("dim: 4");
                    println!("purity        = {:.6}", rho.purity());
                    println!("concurrence   = {:.6}", metrics::concurrence(&rho)?);
                    println!("F(pol Bell)   = {:.6}", metrics::fidelity_to_pure(&rho, &pol_target)?);
                    println!("F(tb Bell)    = {:.6}", metrics::fidelity_to_pure(&rho, &tb_target)?);
                }
                16 => {
                    let pol_target = source::polarization_bell();
                    let tb_target = source::timebin_bell(phi_p);
                    let f = metrics::hyper_fidelity(&rho, &pol_target, &tb_target)?;
                    let pol = metrics::subspace_report(&rho, metrics::Subspace::Polarization, &pol_target)?;
                    let tb = metrics::subspace_report(&rho, metrics::Subspace::Timebin, &tb_target)?;
                    println!("dim: 16");
                    println!("purity        = {:.6}", rho.purity());
                    println!("F_hyper       = {f:.6}");
                    println!("pol subspace:  F = {:.6}  C = {:.6}  purity = {:.6}", pol.fidelity, pol.concurrence, pol.purity);
                    println!("tb  subspace:  F = {:.6}  C = {:.6}  purity = {:.6}", tb.fidelity, tb.concurrence, tb.purity);
                }
                d => {
                    return Err(RunnerError::Config {
                        field: "matrix".into(),
                        reason: format!("metrics support dim 4 or 16 states, got {d}"),
                    }
                    .into())
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { common, points } => {
            let cfg = load_config(&common)?;
            let outcome = runner::sweep_phase(&cfg, points)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("sweep.tsv");
            std::fs::write(&path, &outcome.table)?;
            println!(
                "sweep: {} points, {} mode",
                outcome.rows.len(),
                if outcome.sampled { "sampled" } else { "exact" }
            );
            println!("offset    = {:.6}", outcome.offset);
            println!("amplitude = {:.6}", outcome.amplitude);
            println!("visibility= {:.6}", outcome.visibility);
            println!("table written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_config(common: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_kv_str(&read_text(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(pairs) = common.pairs {
        cfg.n_pairs_per_setting = pairs;
    }
    if let Some(campaign) = &common.campaign {
        cfg.campaign = Campaign::parse(campaign)?;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn read_text(path: &PathBuf) -> anyhow::Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| RunnerError::Io { path: path.display().to_string(), source: e }.into())
}
