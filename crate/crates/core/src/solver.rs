//! Outer driver alternating the global step (phase one) and the local step
//! (phase two).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{NpasaError, Result};
use crate::global_step::{self, GsConfig};
use crate::kkt::{self, ErrorReport, Iterate};
use crate::local_step::{self, BranchReason, LsConfig, LsKind};
use crate::model::Problem;
use crate::pco::{self, PcoConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpasaConfig {
    pub epsilon: f64,
    pub theta: f64,
    pub phi: f64,
    pub lambda_bar: f64,
    pub q0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub tau: f64,
    pub p: f64,
    pub delta: f64,
    pub gamma: f64,
    pub max_outer_iters: usize,
    /// Inner optimizer settings for the global step.
    pub pco: PcoConfig,
    /// Inner optimizer settings for the local step subproblems.
    pub ls_pco: PcoConfig,
}

impl Default for NpasaConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            theta: 0.5,
            phi: 10.0,
            lambda_bar: 1e6,
            q0: 1.0,
            alpha: 0.1,
            beta: 10.0,
            sigma: 0.5,
            tau: 0.1,
            p: 1e4,
            delta: 0.5,
            gamma: 1e-8,
            max_outer_iters: 200,
            pco: PcoConfig::default(),
            ls_pco: LsConfig::default().pco,
        }
    }
}

impl NpasaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(NpasaError::InvalidParameter(what.to_string()));
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("theta must lie in (0,1)");
        }
        if !(self.phi > 1.0) {
            return bad("phi must exceed 1");
        }
        if !(self.lambda_bar > 0.0) {
            return bad("lambda_bar must be positive");
        }
        if !(self.q0 >= 1.0) || !self.q0.is_finite() {
            return bad("q0 must be at least 1");
        }
        self.pco.validate()?;
        self.ls_config().validate()
    }

    pub fn ls_config(&self) -> LsConfig {
        LsConfig {
            theta: self.theta,
            alpha: self.alpha,
            beta: self.beta,
            sigma: self.sigma,
            tau: self.tau,
            p0: self.p,
            gamma: self.gamma,
            delta: self.delta,
            target_floor: self.theta * self.epsilon * self.epsilon,
            pco: self.ls_pco.clone(),
            ..LsConfig::default()
        }
    }

    fn gs_config(&self, q: f64, inner_eps: f64) -> GsConfig {
        GsConfig { lambda_bar: self.lambda_bar, q, pco: PcoConfig { epsilon: inner_eps, ..self.pco.clone() } }
    }
}

/// `max(phi, 1/e_prev) * q_prev`.
pub fn update_penalty(q_prev: f64, e_prev: f64, phi: f64) -> Result<f64> {
    if !(q_prev >= 1.0) || !(phi > 1.0) || !(e_prev >= 0.0) {
        return Err(NpasaError::InvalidParameter(format!("update_penalty({q_prev}, {e_prev}, {phi})")));
    }
    if e_prev == 0.0 {
        return Err(NpasaError::InvalidParameter("penalty update at zero error".into()));
    }
    Ok(phi.max(1.0 / e_prev) * q_prev)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTag {
    One,
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    Start,
    /// Penalty update on entering phase one.
    EnterPhaseOne,
    GlobalStep,
    LocalStepAccepted,
    LocalStepRejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchTest {
    /// `Em1(x_k) <= theta * Ec(x_{k-1})`.
    Em1BelowThetaEcPrev,
    /// `E1(z) > theta * E1(x_k)`.
    E1AboveThetaE1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub to: PhaseTag,
    pub test: BranchTest,
    pub lhs: f64,
    pub rhs: f64,
}

impl Transition {
    pub fn holds(&self) -> bool {
        match self.test {
            BranchTest::Em1BelowThetaEcPrev => self.lhs <= self.rhs,
            BranchTest::E1AboveThetaE1 => self.lhs > self.rhs,
        }
    }
}

/// One line of the solver trace. Error fields describe the current iterate
/// `x_k` after the event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub phase: PhaseTag,
    pub event: TraceEvent,
    pub e0: Option<f64>,
    pub e1: f64,
    pub em0: Option<f64>,
    pub em1: f64,
    pub ec: f64,
    pub q: f64,
    pub e_best: f64,
    pub branch_reason: BranchReason,
    pub inner_iters: usize,
    /// `E1` at the iterate the step started from.
    pub e1_prev: Option<f64>,
    /// `E1` of the local step output, whether accepted or not.
    pub e1_candidate: Option<f64>,
    pub inner_converged: Option<bool>,
    pub min_alpha: Option<f64>,
    pub max_p: Option<f64>,
    pub transition: Option<Transition>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    OuterIterationLimit,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub iterate: Iterate,
    pub converged: bool,
    pub termination: Termination,
    pub report: ErrorReport,
    pub trace: Vec<TraceRecord>,
    pub global_steps: usize,
    pub local_steps: usize,
}

struct Driver<'o> {
    observer: Option<&'o mut dyn FnMut(&TraceRecord)>,
    /// Records already handed to the observer.
    emitted: usize,
    trace: Vec<TraceRecord>,
    /// `e_j` for `j = 0..=k`.
    e_hist: Vec<f64>,
    q: f64,
}

impl Driver<'_> {
    fn k(&self) -> usize {
        self.e_hist.len() - 1
    }

    fn e_best(&self) -> f64 {
        *self.e_hist.last().expect("e_0 is set at start")
    }

    fn advance(&mut self, e1: f64) {
        let e = e1.min(self.e_best());
        self.e_hist.push(e);
    }

    /// Hand every record except the last (which may still be amended) to the observer.
    fn flush(&mut self, all: bool) {
        let upto = if all { self.trace.len() } else { self.trace.len().saturating_sub(1) };
        if let Some(obs) = self.observer.as_mut() {
            for r in &self.trace[self.emitted..upto] {
                obs(r);
            }
        }
        self.emitted = self.emitted.max(upto);
    }

    fn record(&mut self, phase: PhaseTag, event: TraceEvent, rep: &ErrorReport) -> &mut TraceRecord {
        self.flush(true);
        self.trace.push(TraceRecord {
            k: self.k(),
            phase,
            event,
            e0: rep.e0,
            e1: rep.e1,
            em0: rep.em0,
            em1: rep.em1,
            ec: rep.ec,
            q: self.q,
            e_best: self.e_best(),
            branch_reason: BranchReason::None,
            inner_iters: 0,
            e1_prev: None,
            e1_candidate: None,
            inner_converged: None,
            min_alpha: None,
            max_p: None,
            transition: None,
        });
        self.trace.last_mut().expect("just pushed")
    }
}

/// `mu(x, 1)`: multipliers of the projection of `x - grad_x L(x, lambda)`.
fn projected_multiplier(problem: &Problem, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    let ev = problem.eval(x)?;
    let g = &ev.grad_f + ev.jac_h.tr_mul(lambda);
    let (_, projection) = pco::em0_via_projection(problem.polyhedron(), x, &g, 1.0)?;
    Ok(projection.mu_recon)
}

/// Run the two-phase method from `(x0, lambda0, mu0)`; `x0` is projected onto
/// the polyhedron first.
pub fn solve(
    problem: &Problem,
    x0: &DVector<f64>,
    lambda0: &DVector<f64>,
    mu0: &DVector<f64>,
    cfg: &NpasaConfig,
) -> Result<SolveResult> {
    solve_observed(problem, x0, lambda0, mu0, cfg, None)
}

/// As [`solve`], passing each trace record to `observer` once it is final.
pub fn solve_observed(
    problem: &Problem,
    x0: &DVector<f64>,
    lambda0: &DVector<f64>,
    mu0: &DVector<f64>,
    cfg: &NpasaConfig,
    observer: Option<&mut dyn FnMut(&TraceRecord)>,
) -> Result<SolveResult> {
    cfg.validate()?;
    let start = Iterate::new(x0.clone(), lambda0.clone(), mu0.clone());
    start.check(problem)?;
    if let Some(i) = x0.iter().position(|v| !v.is_finite()) {
        return Err(NpasaError::NonFinite { what: "starting point", index: i });
    }
    let x = crate::polyproj::project_point(problem.polyhedron(), x0)?;
    let mut it = Iterate::new(x, lambda0.clone(), mu0.clone());
    let mut rep = kkt::error_report(problem, &it)?;
    let ls_cfg = cfg.ls_config();
    let mut d = Driver { observer, emitted: 0, trace: Vec::new(), e_hist: vec![rep.e1], q: cfg.q0 };
    d.record(PhaseTag::One, TraceEvent::Start, &rep);

    let mut steps = 0usize;
    let mut global_steps = 0usize;
    let mut local_steps = 0usize;
    let mut phase = PhaseTag::One;
    let mut first_entry = true;
    let converged = loop {
        if rep.e1 <= cfg.epsilon {
            break true;
        }
        if steps >= cfg.max_outer_iters {
            break false;
        }
        match phase {
            PhaseTag::One => {
                if first_entry {
                    // e_{-1} and q_{-1} are taken as e_0 and q0.
                    first_entry = false;
                    d.q = update_penalty(cfg.q0, d.e_hist[0], cfg.phi)?;
                } else {
                    let k = d.k();
                    let e_prev = d.e_hist[k.saturating_sub(1)];
                    d.q = update_penalty(d.q, e_prev, cfg.phi)?;
                    it.mu = projected_multiplier(problem, &it.x, &it.lambda)?;
                    rep = kkt::error_report(problem, &it)?;
                }
                d.record(PhaseTag::One, TraceEvent::EnterPhaseOne, &rep);
                loop {
                    if rep.e1 <= cfg.epsilon || steps >= cfg.max_outer_iters {
                        break;
                    }
                    let inner_eps = cfg.epsilon.min(cfg.theta * rep.ec).max(cfg.theta * cfg.epsilon * cfg.epsilon);
                    let out = global_step::run_gs(problem, &it, &cfg.gs_config(d.q, inner_eps))?;
                    steps += 1;
                    global_steps += 1;
                    let e1_prev = rep.e1;
                    let ec_prev = rep.ec;
                    it = out.iterate;
                    rep = kkt::error_report(problem, &it)?;
                    d.advance(rep.e1);
                    let lhs = rep.em1;
                    let rhs = cfg.theta * ec_prev;
                    let branch = lhs <= rhs && rep.e1 > cfg.epsilon;
                    let r = d.record(PhaseTag::One, TraceEvent::GlobalStep, &rep);
                    r.inner_iters = out.inner_iters;
                    r.inner_converged = Some(out.converged);
                    r.e1_prev = Some(e1_prev);
                    if branch {
                        r.transition = Some(Transition { to: PhaseTag::Two, test: BranchTest::Em1BelowThetaEcPrev, lhs, rhs });
                        phase = PhaseTag::Two;
                        break;
                    }
                }
            }
            PhaseTag::Two => {
                let out = local_step::run_ls(problem, &it, &ls_cfg)?;
                steps += 1;
                local_steps += 1;
                let cand = match out.kind {
                    LsKind::Accepted => kkt::error_report(problem, &out.iterate)?,
                    LsKind::BranchToPhaseOne => rep.clone(),
                };
                let lhs = cand.e1;
                let rhs = cfg.theta * rep.e1;
                let e1_prev = rep.e1;
                let rejected = lhs > rhs;
                let reason = match (out.kind, rejected) {
                    (LsKind::BranchToPhaseOne, _) => out.reason,
                    (LsKind::Accepted, true) => BranchReason::InsufficientE1Decrease,
                    (LsKind::Accepted, false) => BranchReason::None,
                };
                if rejected {
                    let r = d.record(PhaseTag::Two, TraceEvent::LocalStepRejected, &rep);
                    r.branch_reason = reason;
                    r.e1_prev = Some(e1_prev);
                    r.e1_candidate = Some(lhs);
                    r.inner_iters = out.inner_iters();
                    r.min_alpha = out.constraint.min_alpha();
                    r.max_p = (out.max_p > 0.0).then_some(out.max_p);
                    r.transition = Some(Transition { to: PhaseTag::One, test: BranchTest::E1AboveThetaE1, lhs, rhs });
                    log::debug!("phase two rejected ({reason:?}): E1 {lhs:e} vs {rhs:e}");
                    phase = PhaseTag::One;
                } else {
                    let (inner, min_alpha, max_p) = (out.inner_iters(), out.constraint.min_alpha(), out.max_p);
                    it = out.iterate;
                    rep = cand;
                    d.advance(rep.e1);
                    let r = d.record(PhaseTag::Two, TraceEvent::LocalStepAccepted, &rep);
                    r.e1_prev = Some(e1_prev);
                    r.e1_candidate = Some(lhs);
                    r.inner_iters = inner;
                    r.min_alpha = min_alpha;
                    r.max_p = (max_p > 0.0).then_some(max_p);
                }
            }
        }
        d.flush(false);
        log::info!("k = {} E1 = {:e} q = {:e}", d.k(), rep.e1, d.q);
    };
    d.flush(true);
    Ok(SolveResult {
        iterate: it,
        converged,
        termination: if converged { Termination::Converged } else { Termination::OuterIterationLimit },
        report: rep,
        trace: d.trace,
        global_steps,
        local_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(update_penalty(1.0, 0.5, 10.0).unwrap(), 10.0);
        assert_eq!(update_penalty(1.0, 0.01, 10.0).unwrap(), 100.0);
        assert!(update_penalty(1.0, 0.0, 10.0).is_err());
    }

    #[test]
    fn p1_converges() {
        let p = registry::p1();
        let res = solve(&p, &v(&[0.0, 0.0]), &v(&[0.0]), &DVector::zeros(4), &NpasaConfig::default()).unwrap();
        assert!(res.converged, "{:#?}", res.trace);
        assert!(res.report.e1 <= 1e-8);
        assert!(res.trace.last().unwrap().k <= 15);
        assert!((&res.iterate.x - v(&[0.5, 0.5])).amax() < 1e-6);
    }

    #[test]
    fn kkt_start_needs_no_steps() {
        let p = registry::p1();
        let res = solve(&p, &v(&[0.5, 0.5]), &v(&[-0.5]), &DVector::zeros(4), &NpasaConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.local_steps + res.global_steps, 0);
    }

    #[test]
    fn p3_visits_phase_one_for_perturbation() {
        let p = registry::p3();
        let cfg = NpasaConfig { max_outer_iters: 6, ..Default::default() };
        let res = solve(&p, &v(&[2.0, 0.0]), &v(&[0.0]), &DVector::zeros(4), &cfg).unwrap();
        assert!(!res.converged);
        assert!(res.trace.iter().any(|r| r.branch_reason == BranchReason::ConstraintPerturbation));
        let qs: Vec<f64> =
            res.trace.iter().filter(|r| r.event == TraceEvent::EnterPhaseOne).map(|r| r.q).collect();
        assert!(qs.len() >= 2 && qs.windows(2).all(|w| w[1] > w[0]), "{qs:?}");
    }
}
