//! Maximum-likelihood reconstruction over the triangular parameterization
//! ρ = T†T / tr(T†T).
//!
//! The Poissonian log-likelihood L(T) = Σᵢ nᵢ ln μᵢ − μᵢ with
//! μᵢ = N̂·⟨ψᵢ|ρ(T)|ψᵢ⟩ is maximized by nonlinear conjugate gradients
//! (Polak–Ribière with restarts) and an Armijo backtracking line search on
//! the real and imaginary parts of the upper-triangular entries of T. The
//! gradient has the closed form 2·T·M restricted to the triangle, where
//! M = (1/tr A)·Σᵢ (nᵢ/pᵢ − N̂)(Πᵢ − pᵢ·I) and A = T†T.

use num_complex::Complex64 as C64;

use super::linear_inversion;
use super::sets::ProjectorSet;
use super::TomoError;
use crate::qlin::{project_to_physical, ComplexMatrix, DensityMatrix};

/// Reconstruction controls.
#[derive(Debug, Clone)]
pub struct MleConfig {
    pub max_iterations: usize,
    pub rel_loglik_tol: f64,
    pub init: InitStrategy,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self { max_iterations: 10_000, rel_loglik_tol: 1e-10, init: InitStrategy::LinearInversion }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Physical projection of the linear-inversion estimate, falling back to
    /// the maximally mixed state when inversion fails.
    LinearInversion,
    MaximallyMixed,
}

/// Reconstruction result with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct MleOutcome {
    pub rho: DensityMatrix,
    pub iterations: usize,
    pub final_loglik: f64,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Maximize the Poisson likelihood of the counts under the projector set.
pub fn mle_reconstruct(
    counts: &[f64],
    set: &ProjectorSet,
    cfg: &MleConfig,
) -> Result<MleOutcome, TomoError> {
    if !(cfg.rel_loglik_tol > 0.0) {
        return Err(TomoError::BadCounts(format!(
            "rel_loglik_tol must be positive, got {}",
            cfg.rel_loglik_tol
        )));
    }
    if counts.len() != set.len() {
        return Err(TomoError::CountsMismatch { expected: set.len(), got: counts.len() });
    }
    if counts.iter().any(|&c| !c.is_finite() || c < 0.0) {
        return Err(TomoError::BadCounts("counts must be finite and nonnegative".into()));
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(TomoError::BadCounts("all counts are zero".into()));
    }
    let exposure = set.normalization(counts);
    if exposure <= 0.0 {
        return Err(TomoError::BadCounts(
            "normalization subgroup has zero counts; exposure cannot be estimated".into(),
        ));
    }

    let dim = set.dim();
    let init_rho = match cfg.init {
        InitStrategy::MaximallyMixed => DensityMatrix::maximally_mixed(dim),
        InitStrategy::LinearInversion => linear_inversion(counts, set)
            .ok()
            .and_then(|m| project_to_physical(&m).ok())
            .unwrap_or_else(|| DensityMatrix::maximally_mixed(dim)),
    };
    let mut t = upper_cholesky(&ridge(init_rho.matrix(), 1e-8 / dim as f64), dim);

    let problem = Problem { set, counts, exposure };
    let mut loglik = problem.loglik(&t);
    let mut grad = problem.gradient(&t);
    let mut dir = grad.clone();
    let mut g_dot_g = inner(&grad, &grad);
    let mut converged = false;
    let mut iterations = 0;
    let mut step = 1.0 / (1.0 + g_dot_g.sqrt());

    while iterations < cfg.max_iterations {
        iterations += 1;
        let slope = inner(&grad, &dir);
        if slope <= 0.0 {
            // stale conjugate direction; restart along the gradient
            dir = grad.clone();
            continue;
        }
        // Armijo backtracking
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..80 {
            let cand = add_scaled(&t, &dir, alpha);
            let cand_ll = problem.loglik(&cand);
            if cand_ll >= loglik + 1e-4 * alpha * slope {
                accepted = Some((cand, cand_ll, alpha));
                break;
            }
            alpha *= 0.5;
        }
        let Some((t_new, ll_new, used_alpha)) = accepted else {
            if g_dot_g.sqrt() < 1e-12 * (1.0 + loglik.abs()) {
                converged = true;
            }
            break;
        };
        let improvement = ll_new - loglik;
        t = t_new;
        // keep the parameterization scale bounded; ρ(T) is scale invariant
        let norm = t.frobenius_norm();
        if !(1e-3..=1e3).contains(&norm) {
            t = t.scale(C64::new(1.0 / norm, 0.0));
            dir = ComplexMatrix::zeros(dim, dim);
        }
        step = (used_alpha * 2.0).min(1e6);

        let grad_new = problem.gradient(&t);
        let g_new_dot = inner(&grad_new, &grad_new);
        // Polak–Ribière+ with automatic restart
        let beta = ((g_new_dot - inner(&grad_new, &grad)) / g_dot_g).max(0.0);
        dir = add_scaled(&grad_new, &dir, beta);
        if inner(&dir, &grad_new) <= 0.0 {
            dir = grad_new.clone();
        }
        grad = grad_new;
        g_dot_g = g_new_dot;

        if improvement.abs() <= cfg.rel_loglik_tol * (loglik.abs() + 1.0) {
            loglik = ll_new;
            converged = true;
            break;
        }
        loglik = ll_new;
    }

    let rho = rho_from_t(&t)?;
    Ok(MleOutcome { rho, iterations, final_loglik: loglik, converged, grad_norm: g_dot_g.sqrt() })
}

struct Problem<'a> {
    set: &'a ProjectorSet,
    counts: &'a [f64],
    exposure: f64,
}

impl Problem<'_> {
    fn probabilities(&self, t: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix, f64) {
        let a = &t.dagger() * t;
        let trace = a.trace().re;
        let probs: Vec<f64> = self
            .set
            .projectors()
            .iter()
            .map(|p| (a.sandwich(p.ket.amplitudes(), p.ket.amplitudes()).re / trace).max(0.0))
            .collect();
        (probs, a, trace)
    }

    fn loglik(&self, t: &ComplexMatrix) -> f64 {
        let (probs, _, _) = self.probabilities(t);
        let mut ll = 0.0;
        for (&n, &p) in self.counts.iter().zip(&probs) {
            let mu = self.exposure * p;
            if n > 0.0 {
                if mu <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                ll += n * mu.ln() - mu;
            } else {
                ll -= mu;
            }
        }
        ll
    }

    /// 2·T·M on the upper-triangular support.
    fn gradient(&self, t: &ComplexMatrix) -> ComplexMatrix {
        let (probs, _, trace) = self.probabilities(t);
        let dim = self.set.dim();
        let mut m = ComplexMatrix::zeros(dim, dim);
        let mut diag_shift = 0.0;
        for ((&n, &p), proj) in self.counts.iter().zip(&probs).zip(self.set.projectors()) {
            let coeff = if n > 0.0 { n / p.max(1e-300) - self.exposure } else { -self.exposure };
            let amps = proj.ket.amplitudes();
            for i in 0..dim {
                let ci = amps[i] * coeff;
                for j in 0..dim {
                    m[(i, j)] += ci * amps[j].conj();
                }
            }
            diag_shift += coeff * p;
        }
        for i in 0..dim {
            m[(i, i)] -= C64::new(diag_shift, 0.0);
        }
        let mut g = (t * &m).scale(C64::new(2.0 / trace, 0.0));
        for i in 0..dim {
            for j in 0..i {
                g[(i, j)] = C64::ZERO;
            }
        }
        g
    }
}

/// Re(tr(A†B)) over the triangular support shared by both operands.
fn inner(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.entries().iter().zip(b.entries()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn add_scaled(a: &ComplexMatrix, b: &ComplexMatrix, s: f64) -> ComplexMatrix {
    &a.clone() + &b.scale(C64::new(s, 0.0))
}

fn ridge(m: &ComplexMatrix, delta: f64) -> ComplexMatrix {
    let n = m.rows();
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)] += C64::new(delta, 0.0);
    }
    out.scale(C64::new(1.0 / (1.0 + delta * n as f64), 0.0))
}

/// Upper-triangular T with T†T = m, from the Cholesky factorization of a
/// positive-definite Hermitian matrix.
fn upper_cholesky(m: &ComplexMatrix, dim: usize) -> ComplexMatrix {
    // lower factor L with m = L L†, then T = L†
    let mut l = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = m[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)].conj();
            }
            if i == j {
                l[(i, i)] = C64::new(sum.re.max(1e-300).sqrt(), 0.0);
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    l.dagger()
}

fn rho_from_t(t: &ComplexMatrix) -> Result<DensityMatrix, TomoError> {
    let a = &t.dagger() * t;
    let trace = a.trace().re;
    if trace <= 0.0 {
        return Err(TomoError::BadCounts("parameterization collapsed to zero".into()));
    }
    let rho = a.scale(C64::new(1.0 / trace, 0.0)).hermitian_part();
    DensityMatrix::new(rho).map_err(TomoError::from)
}
