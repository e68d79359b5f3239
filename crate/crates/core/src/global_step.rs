//! Global step: one safeguarded method-of-multipliers update.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{NpasaError, Result};
use crate::kkt::Iterate;
use crate::model::Problem;
use crate::pco::{self, PcoConfig, Phase};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GsConfig {
    pub lambda_bar: f64,
    pub q: f64,
    pub pco: PcoConfig,
}

impl Default for GsConfig {
    fn default() -> Self {
        Self { lambda_bar: 1e6, q: 1.0, pco: PcoConfig::default() }
    }
}

#[derive(Clone, Debug)]
pub struct GsOutcome {
    pub iterate: Iterate,
    /// Whether the inner solve met its stopping test.
    pub converged: bool,
    /// `Em0(x', lambda', mu')` from the final stopping test.
    pub em0: f64,
    /// The safeguarded multiplier the subproblem was built with.
    pub lambda_safe: DVector<f64>,
    pub clamped: bool,
    pub inner_iters: usize,
    pub phases: Vec<Phase>,
}

/// Clamp each component into `[-bound, bound]`.
pub fn safeguard_lambda(lambda: &DVector<f64>, bound: f64) -> DVector<f64> {
    lambda.map(|v| v.clamp(-bound, bound))
}

/// Minimize `L_q(., lambda_safe)` over the polyhedron from `it.x`, then set
/// `lambda' = lambda_safe + 2q h(x')` and take `mu'` from the last projection.
pub fn run_gs(problem: &Problem, it: &Iterate, cfg: &GsConfig) -> Result<GsOutcome> {
    if !(cfg.lambda_bar > 0.0) || !(cfg.q >= 1.0) {
        return Err(NpasaError::InvalidParameter(format!(
            "global step needs lambda_bar > 0 and q >= 1 (got {}, {})",
            cfg.lambda_bar, cfg.q
        )));
    }
    it.check(problem)?;
    let lambda_safe = safeguard_lambda(&it.lambda, cfg.lambda_bar);
    let clamped = lambda_safe != it.lambda;
    let status = pco::solve_pco_aug_lag(problem, &lambda_safe, cfg.q, &it.x, &cfg.pco)?;
    let (h, _) = problem.constraints(&status.x)?;
    let lambda = &lambda_safe + h * (2.0 * cfg.q);
    if !status.converged {
        log::debug!(
            "global step inner solve stopped after {} iterations at Em0 = {:e}",
            status.iterations,
            status.metric
        );
    }
    Ok(GsOutcome {
        iterate: Iterate::new(status.x.clone(), lambda, status.projection.mu_recon.clone()),
        converged: status.converged,
        em0: status.metric,
        lambda_safe,
        clamped,
        inner_iters: status.iterations,
        phases: status.phases,
    })
}
