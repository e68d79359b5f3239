//! Local step: a perturbed Newton iteration on `h(w) = 0` over the polyhedron
//! followed by a multiplier step that alternates tangent-space primal solves
//! with multiplier least-squares fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NpasaError, Result};
use crate::kkt::{self, Iterate};
use crate::model::{Polyhedron, Problem};
use crate::pco::{self, PcoConfig};
use crate::polyproj;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LsConfig {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub tau: f64,
    pub p0: f64,
    pub gamma: f64,
    pub delta: f64,
    pub max_constraint_iters: usize,
    pub max_multiplier_iters: usize,
    /// Lower bound on the loop targets, so the loops never chase values below
    /// what the outer tolerance can resolve.
    pub target_floor: f64,
    /// Relative stopping tolerance for the quadratic and tangent subproblems.
    pub sub_epsilon: f64,
    pub pco: PcoConfig,
}

impl Default for LsConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            alpha: 0.1,
            beta: 10.0,
            sigma: 0.5,
            tau: 0.1,
            p0: 1e4,
            gamma: 1e-8,
            delta: 0.5,
            max_constraint_iters: 500,
            max_multiplier_iters: 500,
            target_floor: 0.0,
            sub_epsilon: 1e-13,
            pco: PcoConfig { max_iters: 500, ..PcoConfig::default() },
        }
    }
}

impl LsConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.theta) || !unit(self.sigma) || !unit(self.tau) || !unit(self.delta) {
            return Err(NpasaError::InvalidParameter("local step: theta, sigma, tau, delta must lie in (0,1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(self.beta >= 1.0) || !(self.p0 > 0.0) || !(self.gamma > 0.0) {
            return Err(NpasaError::InvalidParameter("local step: bad alpha, beta, p or gamma".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchReason {
    None,
    ConstraintPerturbation,
    InsufficientEm1Decrease,
    InsufficientE1Decrease,
    SubproblemFailure,
}

/// One accepted perturbed Newton step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintStepRecord {
    pub p: f64,
    pub alpha: f64,
    pub step: f64,
    pub h_before: f64,
    pub h_after: f64,
    pub reductions: usize,
}

#[derive(Clone, Debug)]
pub struct ConstraintStep {
    /// Final point; `None` when the step branched.
    pub w: Option<DVector<f64>>,
    pub records: Vec<ConstraintStepRecord>,
    pub branch: BranchReason,
    /// `alpha_{i+1}` of the rejected solve when branching on perturbation size.
    pub rejected_alpha: Option<f64>,
    pub iterations: usize,
}

impl ConstraintStep {
    pub fn min_alpha(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.alpha)
            .chain(self.rejected_alpha)
            .reduce(f64::min)
    }

    pub fn max_p(&self) -> Option<f64> {
        self.records.iter().map(|r| r.p).reduce(f64::max)
    }
}

/// Perturbed Newton iteration until `Ec(w) <= theta * target_em1`.
pub fn constraint_step(problem: &Problem, x: &DVector<f64>, target_em1: f64, cfg: &LsConfig) -> Result<ConstraintStep> {
    cfg.validate()?;
    let poly = problem.polyhedron();
    let target = (cfg.theta * target_em1).max(cfg.target_floor);
    let mut w = x.clone();
    let (mut h, mut jac) = problem.constraints(&w)?;
    let mut out = ConstraintStep { w: None, records: Vec::new(), branch: BranchReason::None, rejected_alpha: None, iterations: 0 };
    while h.norm_squared() > target {
        if out.iterations >= cfg.max_constraint_iters {
            log::debug!("constraint step hit its iteration cap");
            out.branch = BranchReason::ConstraintPerturbation;
            return Ok(out);
        }
        let h_norm = h.norm();
        let p = (cfg.beta * cfg.beta).max(1.0 / (h_norm * h_norm));
        let slack = polyproj::project_with_slack(&jac, &(-&h), &w, p, poly)?;
        let alpha = 1.0 - slack.scaled_slack_norm();
        if alpha < cfg.alpha {
            log::debug!("constraint step: alpha = {alpha:.3e} below {}", cfg.alpha);
            out.rejected_alpha = Some(alpha);
            out.branch = BranchReason::ConstraintPerturbation;
            return Ok(out);
        }
        let d = &slack.w_p - &w;
        let mut s = 1.0;
        let mut reductions = 0;
        let (w_new, h_new, jac_new) = loop {
            let trial = &w + &d * s;
            let (h_trial, jac_trial) = problem.constraints(&trial)?;
            if h_trial.norm() <= (1.0 - cfg.tau * alpha * s) * h_norm {
                break (trial, h_trial, jac_trial);
            }
            reductions += 1;
            if reductions > 60 {
                log::debug!("constraint step line search exhausted");
                out.branch = BranchReason::ConstraintPerturbation;
                return Ok(out);
            }
            s *= cfg.sigma;
        };
        out.records.push(ConstraintStepRecord { p, alpha, step: s, h_before: h_norm, h_after: h_new.norm(), reductions });
        out.iterations += 1;
        w = w_new;
        h = h_new;
        jac = jac_new;
    }
    out.w = Some(w);
    Ok(out)
}

/// Layout helpers between the stacked multiplier and its finite components.
struct FiniteMap {
    idx: Vec<usize>,
    /// Rows are the stacked gradients of the finite components.
    grads: DMatrix<f64>,
}

impl FiniteMap {
    fn new(poly: &Polyhedron) -> Self {
        let (idx, grads) = poly.finite_gradient_matrix();
        Self { idx, grads }
    }

    fn gather(&self, mu: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.idx.len(), self.idx.iter().map(|&i| mu[i]))
    }

    fn scatter(&self, eta: &DVector<f64>, len: usize) -> DVector<f64> {
        let mut mu = DVector::zeros(len);
        for (k, &i) in self.idx.iter().enumerate() {
            mu[i] = eta[k];
        }
        mu
    }

    /// `-r_i(z)` on finite components, floored at zero.
    fn distances(&self, poly: &Polyhedron, z: &DVector<f64>) -> DVector<f64> {
        let r = poly.residual(z);
        DVector::from_iterator(self.idx.len(), self.idx.iter().map(|&i| (-r[i]).max(0.0)))
    }
}

fn sub_config(cfg: &LsConfig, scale: f64) -> PcoConfig {
    PcoConfig { epsilon: cfg.sub_epsilon * (1.0 + scale), ..cfg.pco.clone() }
}

/// `argmin { Em0(z, nu, eta) + gamma |(nu, eta) - c|^2 : eta >= 0 }` over the
/// finite components of `eta`, where `c` is the warm start (zero without one).
/// Returns stacked `eta`.
pub fn mult_step_2a(
    problem: &Problem,
    z: &DVector<f64>,
    gamma: f64,
    warm: Option<(&DVector<f64>, &DVector<f64>)>,
    cfg: &LsConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(gamma > 0.0) {
        return Err(NpasaError::InvalidParameter(format!("gamma = {gamma}")));
    }
    let poly = problem.polyhedron();
    let ev = problem.eval(z)?;
    let fm = FiniteMap::new(poly);
    let (l, k, n) = (problem.l(), fm.idx.len(), problem.n());
    let dim = l + k;
    if dim == 0 {
        return Ok((DVector::zeros(0), DVector::zeros(poly.stacked_len())));
    }
    let mut b = DMatrix::zeros(n, dim);
    b.view_mut((0, 0), (n, l)).copy_from(&ev.jac_h.transpose());
    b.view_mut((0, l), (n, k)).copy_from(&fm.grads.transpose());
    let r = poly.residual(z);
    let r_f = DVector::from_iterator(k, fm.idx.iter().map(|&i| r[i]));
    let c = ev.grad_f.clone();
    let mut center = DVector::zeros(dim);
    if let Some((nu0, mu0)) = warm {
        center.rows_mut(0, l).copy_from(nu0);
        center.rows_mut(l, k).copy_from(&fm.gather(mu0).map(|v| v.max(0.0)));
    }
    let objective = |v: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let resid = &c + &b * v;
        let eta = v.rows(l, k);
        let shift = v - &center;
        let value = resid.norm_squared() - eta.dot(&r_f) + gamma * shift.norm_squared();
        let mut grad = b.tr_mul(&resid) * 2.0 + shift * (2.0 * gamma);
        for j in 0..k {
            grad[l + j] -= r_f[j];
        }
        Ok((value, grad))
    };
    let mut lo = DVector::from_element(dim, f64::NEG_INFINITY);
    lo.rows_mut(l, k).fill(0.0);
    let bounds = Polyhedron::boxed(lo, DVector::from_element(dim, f64::INFINITY))?;
    let start = center.clone();
    let scale = c.norm() * (1.0 + b.norm());
    let status = pco::solve_pco_generic(&objective, &bounds, &start, &sub_config(cfg, scale))?;
    if !status.converged && status.metric > (cfg.sub_epsilon * (1.0 + scale)).sqrt() {
        return Err(NpasaError::IterationLimit("multiplier least squares"));
    }
    let nu = status.x.rows(0, l).into_owned();
    let eta = fm.scatter(&status.x.rows(l, k).into_owned(), poly.stacked_len());
    Ok((nu, eta))
}

/// `argmin { Em1(z, nu, eta) : eta >= 0 }` by iterating over which branch of
/// `min(-r_i, eta_i)` is active. Returns stacked `eta` and the number of passes.
pub fn mult_step_2b(
    problem: &Problem,
    z: &DVector<f64>,
    nu: &DVector<f64>,
    eta_init: &DVector<f64>,
    cfg: &LsConfig,
) -> Result<(DVector<f64>, usize)> {
    let poly = problem.polyhedron();
    let ev = problem.eval(z)?;
    let fm = FiniteMap::new(poly);
    let k = fm.idx.len();
    if k == 0 {
        return Ok((DVector::zeros(poly.stacked_len()), 0));
    }
    let a = fm.distances(poly, z);
    let base = &ev.grad_f + ev.jac_h.tr_mul(nu);
    let gt = fm.grads.transpose();
    let quad_grad = |eta: &DVector<f64>| -> DVector<f64> { fm.grads.clone() * (&base + &gt * eta) * 2.0 };
    let em1_part = |eta: &DVector<f64>| -> f64 {
        let phi: f64 = (0..k).map(|i| a[i].min(eta[i]).powi(2)).sum();
        (&base + &gt * eta).norm_squared() + phi
    };

    let mut eta = fm.gather(eta_init).map(|v| v.max(0.0));
    // true: eta_i in [0, a_i] with eta_i^2; false: eta_i >= a_i with constant a_i^2.
    let tie = |v: f64, ai: f64| (v - ai).abs() <= 1e-12 * (1.0 + ai);
    let mut pattern: Vec<bool> = {
        let d = quad_grad(&eta);
        (0..k)
            .map(|i| if tie(eta[i], a[i]) { d[i] >= 0.0 } else { eta[i] < a[i] })
            .collect()
    };
    let mut best = (em1_part(&eta), eta.clone());
    let max_passes = (1usize << k.min(20)).min(200);
    let scale = base.norm() * (1.0 + fm.grads.norm());
    let sub = sub_config(cfg, scale);
    let mut passes = 0;
    loop {
        passes += 1;
        let mut lo = DVector::zeros(k);
        let mut hi = DVector::zeros(k);
        for i in 0..k {
            if pattern[i] {
                lo[i] = 0.0;
                hi[i] = a[i];
            } else {
                lo[i] = a[i];
                hi[i] = f64::INFINITY;
            }
        }
        let bounds = Polyhedron::boxed(lo, hi)?;
        let pat = pattern.clone();
        let objective = |e: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
            let resid = &base + &gt * e;
            let mut value = resid.norm_squared();
            let mut grad = fm.grads.clone() * resid * 2.0;
            for i in 0..k {
                if pat[i] {
                    value += e[i] * e[i];
                    grad[i] += 2.0 * e[i];
                } else {
                    value += a[i] * a[i];
                }
            }
            Ok((value, grad))
        };
        let status = pco::solve_pco_generic(&objective, &bounds, &eta, &sub)?;
        eta = status.x;
        let value = em1_part(&eta);
        if value < best.0 {
            best = (value, eta.clone());
        }
        let d = quad_grad(&eta);
        let mut changed = false;
        for i in 0..k {
            if !tie(eta[i], a[i]) {
                continue;
            }
            let want_e = if pattern[i] { d[i] >= 0.0 } else { d[i] + 2.0 * a[i] > 0.0 && a[i] > 0.0 };
            if want_e != pattern[i] {
                pattern[i] = want_e;
                changed = true;
            }
        }
        if !changed || passes >= max_passes {
            if changed {
                log::warn!("multiplier pattern search stopped after {passes} passes");
            }
            break;
        }
    }
    Ok((fm.scatter(&best.1, poly.stacked_len()), passes))
}

/// `argmin { L_p(z, nu) : grad h(z_i)(z - z_i) = 0, z in Omega }` with the
/// penalty measured from `h(z_i)`.
pub fn mult_step_2c(problem: &Problem, z_i: &DVector<f64>, nu: &DVector<f64>, p: f64, cfg: &LsConfig) -> Result<DVector<f64>> {
    let (h_ref, jac) = problem.constraints(z_i)?;
    let target = &jac * z_i;
    let tangent = problem.polyhedron().with_equality_rows(&jac, &target)?;
    let objective = |z: &DVector<f64>| kkt::penalized_lagrangian_with_ref(problem, z, nu, p, &h_ref);
    let (_, g0) = objective(z_i)?;
    let status = pco::solve_pco_generic(&objective, &tangent, z_i, &sub_config(cfg, g0.norm()))?;
    if !status.converged && status.metric > (cfg.sub_epsilon * (1.0 + g0.norm())).sqrt() {
        return Err(NpasaError::IterationLimit("tangent subproblem"));
    }
    Ok(status.x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsKind {
    Accepted,
    BranchToPhaseOne,
}

#[derive(Clone, Debug)]
pub struct LsOutcome {
    pub kind: LsKind,
    pub iterate: Iterate,
    pub reason: BranchReason,
    pub constraint: ConstraintStep,
    pub multiplier_iters: usize,
    pub max_p: f64,
    /// `Em1` along the multiplier step.
    pub em1_history: Vec<f64>,
    /// `Ec` at the end of the constraint step.
    pub ec_w: Option<f64>,
    /// `Em1` at the input iterate.
    pub em1_input: f64,
}

impl LsOutcome {
    fn branch(it: &Iterate, reason: BranchReason, constraint: ConstraintStep, em1_input: f64) -> Self {
        Self {
            kind: LsKind::BranchToPhaseOne,
            iterate: it.clone(),
            reason,
            constraint,
            multiplier_iters: 0,
            max_p: 0.0,
            em1_history: Vec::new(),
            ec_w: None,
            em1_input,
        }
    }

    pub fn inner_iters(&self) -> usize {
        self.constraint.iterations + self.multiplier_iters
    }
}

fn em1_at(problem: &Problem, z: &DVector<f64>, nu: &DVector<f64>, eta: &DVector<f64>) -> Result<f64> {
    let it = Iterate::new(z.clone(), nu.clone(), eta.clone());
    Ok(kkt::error_report(problem, &it)?.em1)
}

/// Constraint step followed by the multiplier step.
pub fn run_ls(problem: &Problem, it: &Iterate, cfg: &LsConfig) -> Result<LsOutcome> {
    cfg.validate()?;
    it.check(problem)?;
    let em1_input = kkt::error_report(problem, it)?.em1;
    let cs = constraint_step(problem, &it.x, em1_input, cfg)?;
    let Some(w) = cs.w.clone() else {
        return Ok(LsOutcome::branch(it, BranchReason::ConstraintPerturbation, cs, em1_input));
    };
    let ec_w = problem.constraints(&w)?.0.norm_squared();
    let target = (cfg.theta * ec_w).max(cfg.target_floor);

    let mut p = cfg.p0;
    let mut max_p = p;
    let mut z = w.clone();
    let first = mult_step_2a(problem, &z, cfg.gamma, Some((&it.lambda, &it.mu)), cfg)
        .and_then(|(nu, eta)| mult_step_2b(problem, &z, &nu, &eta, cfg).map(|(e, _)| (nu, e)));
    let (mut nu, mut eta) = match first {
        Ok(v) => v,
        Err(e) => {
            log::debug!("multiplier step failed: {e}");
            return Ok(LsOutcome::branch(it, BranchReason::SubproblemFailure, cs, em1_input));
        }
    };
    let mut em1 = em1_at(problem, &z, &nu, &eta)?;
    let mut history = vec![em1];
    let mut iters = 0;
    while em1 > target {
        if iters >= cfg.max_multiplier_iters {
            let mut out = LsOutcome::branch(it, BranchReason::InsufficientEm1Decrease, cs, em1_input);
            out.em1_history = history;
            out.ec_w = Some(ec_w);
            return Ok(out);
        }
        let step = mult_step_2c(problem, &z, &nu, p, cfg).and_then(|z_new| {
            let (nu_new, eta_2a) = mult_step_2a(problem, &z_new, cfg.gamma, Some((&nu, &eta)), cfg)?;
            let (eta_new, _) = mult_step_2b(problem, &z_new, &nu_new, &eta_2a, cfg)?;
            Ok((z_new, nu_new, eta_new))
        });
        let (z_new, nu_new, eta_new) = match step {
            Ok(v) => v,
            Err(e) => {
                log::debug!("multiplier step failed: {e}");
                let mut out = LsOutcome::branch(it, BranchReason::SubproblemFailure, cs, em1_input);
                out.em1_history = history;
                out.ec_w = Some(ec_w);
                return Ok(out);
            }
        };
        let em1_new = em1_at(problem, &z_new, &nu_new, &eta_new)?;
        history.push(em1_new);
        iters += 1;
        if em1_new > cfg.delta * em1 {
            let mut out = LsOutcome::branch(it, BranchReason::InsufficientEm1Decrease, cs, em1_input);
            out.em1_history = history;
            out.ec_w = Some(ec_w);
            out.multiplier_iters = iters;
            out.max_p = max_p;
            return Ok(out);
        }
        if em1_new > 0.9 * cfg.delta * em1 {
            p = (p * 10.0).min(1e12);
            max_p = max_p.max(p);
        }
        z = z_new;
        nu = nu_new;
        eta = eta_new;
        em1 = em1_new;
    }
    Ok(LsOutcome {
        kind: LsKind::Accepted,
        iterate: Iterate::new(z, nu, eta),
        reason: BranchReason::None,
        constraint: cs,
        multiplier_iters: iters,
        max_p,
        em1_history: history,
        ec_w: Some(ec_w),
        em1_input,
    })
}
