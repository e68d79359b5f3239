//! Polyhedral-constrained optimizer.
//!
//! Phase one takes nonmonotone gradient projection steps with Barzilai-Borwein
//! step lengths; phase two runs projected conjugate gradients on the current
//! active face. Branching between them compares the face-restricted gradient
//! norm `e_PASA` with the stopping metric scaled by `theta`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NpasaError, Result};
use crate::kkt;
use crate::model::{Polyhedron, Problem};
use crate::polyproj::{self, ProjectionResult};

/// A smooth function with gradient.
pub trait SmoothObjective {
    fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)>;
}

impl<F> SmoothObjective for F
where
    F: Fn(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcoConfig {
    pub theta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta_armijo: f64,
    pub memory: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub sigma: f64,
    pub max_iters: usize,
    /// Stop on `Em0 <= min(epsilon, theta * Ec)` instead of `Em0 <= epsilon`.
    pub alt_stop: bool,
}

impl Default for PcoConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            gamma: 0.5,
            epsilon: 1e-8,
            delta_armijo: 1e-4,
            memory: 8,
            alpha_min: 1e-8,
            alpha_max: 1e8,
            sigma: 0.5,
            max_iters: 2000,
            alt_stop: false,
        }
    }
}

impl PcoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.theta) || !unit(self.gamma) || !unit(self.delta_armijo) || !unit(self.sigma) {
            return Err(NpasaError::InvalidParameter("pco: theta, gamma, delta, sigma must lie in (0,1)".into()));
        }
        if !(self.epsilon > 0.0) || self.memory == 0 || !(self.alpha_min > 0.0) || self.alpha_min > self.alpha_max {
            return Err(NpasaError::InvalidParameter("pco: bad epsilon, memory or step bounds".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    One,
    Two,
}

/// Solver state shared by the two step kinds.
#[derive(Clone, Debug)]
pub struct PcoState {
    pub x: DVector<f64>,
    pub f: f64,
    pub g: DVector<f64>,
    pub alpha_bb: f64,
    history: VecDeque<f64>,
    cg: Option<CgMemory>,
}

#[derive(Clone, Debug)]
struct CgMemory {
    face: Vec<usize>,
    dir: DVector<f64>,
    ga: DVector<f64>,
}

impl PcoState {
    pub fn new(obj: &dyn SmoothObjective, x: DVector<f64>, cfg: &PcoConfig) -> Result<Self> {
        let (f, g) = obj.eval(&x)?;
        let gmax = g.amax();
        let alpha_bb = if gmax > 0.0 { (1.0 / gmax).clamp(cfg.alpha_min, cfg.alpha_max) } else { 1.0 };
        let mut history = VecDeque::with_capacity(cfg.memory);
        history.push_back(f);
        Ok(Self { x, f, g, alpha_bb, history, cg: None })
    }

    /// Largest of the last `memory` accepted objective values.
    pub fn reference_value(&self) -> f64 {
        self.history.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn accept(&mut self, x: DVector<f64>, f: f64, g: DVector<f64>, memory: usize) {
        self.x = x;
        self.f = f;
        self.g = g;
        if self.history.len() == memory {
            self.history.pop_front();
        }
        self.history.push_back(f);
    }
}

/// What a gradient projection step did.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NgpaInfo {
    pub step: f64,
    pub reference: f64,
    pub directional: f64,
    pub f_new: f64,
    pub reductions: usize,
}

/// What an active-face step did.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcoInfo {
    pub step: f64,
    pub blocked: bool,
    pub f_prev: f64,
    pub f_new: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepInfo {
    Ngpa(NgpaInfo),
    Lco(LcoInfo),
}

/// Per-iteration log entry; `step` is the step that produced this point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcoRecord {
    pub iter: usize,
    pub phase: Phase,
    pub f: f64,
    pub metric: f64,
    pub e_pasa: f64,
    pub big_e_pasa: f64,
    pub grad_norm: f64,
    pub theta: f64,
    pub undecided_empty: bool,
    pub step: Option<StepInfo>,
}

#[derive(Clone, Debug)]
pub struct PcoStatus {
    pub converged: bool,
    pub stalled: bool,
    pub x: DVector<f64>,
    pub f: f64,
    pub grad: DVector<f64>,
    pub metric: f64,
    pub iterations: usize,
    pub phases: Vec<Phase>,
    pub records: Vec<PcoRecord>,
    pub theta: f64,
    /// Projection of `x - grad` at the final point.
    pub projection: ProjectionResult,
}

/// Global and local error estimators of the inner optimizer at `x`.
#[derive(Clone, Debug)]
pub struct PasaErrors {
    pub big_e_pasa: f64,
    pub e_pasa: f64,
    pub y1: DVector<f64>,
    pub projection: ProjectionResult,
}

const FACE_TOL: f64 = 1e-9;
const MAX_REDUCTIONS: usize = 60;
/// Relative change in `f` below which decrease is judged from the slope.
const APPROX_WOLFE_TOL: f64 = 1e-10;

/// Armijo against `f_ref`, or, once `f` no longer changes measurably, the
/// slope form of the same test for a quadratic along `d`.
fn sufficient_decrease(f_new: f64, f_ref: f64, f_cur: f64, s: f64, gtd: f64, gtd_new: f64, delta: f64) -> bool {
    f_new <= f_ref + delta * s * gtd
        || ((f_new - f_cur).abs() <= APPROX_WOLFE_TOL * f_cur.abs() && gtd_new <= (2.0 * delta - 1.0) * gtd)
}

/// Orthonormal basis of the row space of the active constraint gradients.
struct Face {
    active: Vec<usize>,
    basis: DMatrix<f64>,
}

impl Face {
    fn at(poly: &Polyhedron, x: &DVector<f64>) -> Self {
        let active = polyproj::active_set(poly, x, FACE_TOL);
        let n = poly.n();
        if active.is_empty() {
            return Self { active, basis: DMatrix::zeros(n, 0) };
        }
        let mut g = DMatrix::zeros(active.len(), n);
        for (row, &i) in active.iter().enumerate() {
            g.set_row(row, &poly.stacked_gradient(i).transpose());
        }
        let svd = g.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let smax = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > 1e-10 * smax.max(1e-300))
            .collect();
        let mut basis = DMatrix::zeros(n, keep.len());
        for (col, &i) in keep.iter().enumerate() {
            basis.set_column(col, &v_t.row(i).transpose());
        }
        Self { active, basis }
    }

    /// Component of `v` tangent to the face.
    fn restrict(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.basis.ncols() == 0 {
            return v.clone();
        }
        let coef = self.basis.tr_mul(v);
        let mut out = v - &self.basis * coef;
        let corr = self.basis.tr_mul(&out);
        out -= &self.basis * corr;
        out
    }
}

/// `E_PASA = |P(x - g) - x|`, `e_PASA = |g restricted to the active face|`.
pub fn pasa_errors(poly: &Polyhedron, x: &DVector<f64>, g: &DVector<f64>) -> Result<PasaErrors> {
    let projection = polyproj::project(poly, &(x - g))?;
    let y1 = projection.y_star.clone();
    let face = Face::at(poly, x);
    let e_pasa = face.restrict(g).norm();
    Ok(PasaErrors { big_e_pasa: (&y1 - x).norm(), e_pasa, y1, projection })
}

/// `Em0(x, lambda_bar + 2qh, mu(x, alpha)/alpha)` through one projection:
/// `-g'd + (1/alpha^2 - 1/alpha)|d|^2` with `d = P(x - alpha g) - x`.
pub fn em0_via_projection(poly: &Polyhedron, x: &DVector<f64>, g: &DVector<f64>, alpha: f64) -> Result<(f64, ProjectionResult)> {
    if !(alpha > 0.0) {
        return Err(NpasaError::InvalidParameter(format!("alpha = {alpha}")));
    }
    let projection = polyproj::project(poly, &(x - g * alpha))?;
    let d = &projection.y_star - x;
    let value = em0_from_step(g, &d, alpha)?;
    Ok((value, projection))
}

fn em0_from_step(g: &DVector<f64>, d: &DVector<f64>, alpha: f64) -> Result<f64> {
    let value = -g.dot(d) + (1.0 / (alpha * alpha) - 1.0 / alpha) * d.norm_squared();
    let scale = 1.0 + g.norm() * d.norm();
    if value < -1e-10 * scale {
        return Err(NpasaError::Consistency(format!("projected Em0 = {value:e} is negative")));
    }
    Ok(value.max(0.0))
}

/// One nonmonotone gradient projection step.
pub fn ngpa_step(obj: &dyn SmoothObjective, poly: &Polyhedron, state: &mut PcoState, cfg: &PcoConfig) -> Result<NgpaInfo> {
    let trial = &state.x - &state.g * state.alpha_bb;
    let y = polyproj::project_point(poly, &trial)?;
    let d = &y - &state.x;
    let reference = state.reference_value();
    let directional = state.g.dot(&d);
    if d.amax() == 0.0 || directional >= 0.0 {
        return Ok(NgpaInfo { step: 0.0, reference, directional, f_new: state.f, reductions: 0 });
    }
    let mut s = 1.0;
    let mut reductions = 0;
    let (x_new, f_new, g_new) = loop {
        let x_new = &state.x + &d * s;
        let (f_new, g_new) = obj.eval(&x_new)?;
        if sufficient_decrease(f_new, reference, state.f, s, directional, g_new.dot(&d), cfg.delta_armijo) {
            break (x_new, f_new, g_new);
        }
        reductions += 1;
        if reductions > MAX_REDUCTIONS {
            return Err(NpasaError::LineSearchStall(reductions - 1));
        }
        s *= cfg.sigma;
    };
    let sv = &x_new - &state.x;
    let zv = &g_new - &state.g;
    let sz = sv.dot(&zv);
    state.alpha_bb = if sz <= 0.0 {
        cfg.alpha_max
    } else {
        (sv.norm_squared() / sz).clamp(cfg.alpha_min, cfg.alpha_max)
    };
    state.accept(x_new, f_new, g_new, cfg.memory);
    state.cg = None;
    Ok(NgpaInfo { step: s, reference, directional, f_new, reductions })
}

/// Largest step along `d` keeping the inactive constraints satisfied, and the
/// constraint that blocks it.
fn max_feasible_step(poly: &Polyhedron, x: &DVector<f64>, d: &DVector<f64>, face: &[usize]) -> (f64, Option<usize>) {
    let r = poly.residual(x);
    let (m, n) = (poly.m(), poly.n());
    let ad = poly.a() * d;
    let mut best = (f64::INFINITY, None);
    for i in poly.finite_indices() {
        if face.contains(&i) {
            continue;
        }
        let rate = if i < m {
            -ad[i]
        } else if i < 2 * m {
            ad[i - m]
        } else if i < 2 * m + n {
            -d[i - 2 * m]
        } else {
            d[i - 2 * m - n]
        };
        if rate > 0.0 {
            let t = (-r[i]).max(0.0) / rate;
            if t < best.0 {
                best = (t, Some(i));
            }
        }
    }
    best
}

/// One projected conjugate gradient step on the active face at `state.x`.
pub fn lco_step(obj: &dyn SmoothObjective, poly: &Polyhedron, state: &mut PcoState, cfg: &PcoConfig) -> Result<LcoInfo> {
    let face = Face::at(poly, &state.x);
    let ga = face.restrict(&state.g);
    let f_prev = state.f;
    if ga.norm() <= 1e-300 || ga.norm() <= 1e-15 * state.g.norm() {
        state.cg = None;
        return Ok(LcoInfo { step: 0.0, blocked: false, f_prev, f_new: f_prev });
    }
    let mut d = -&ga;
    if let Some(mem) = &state.cg {
        if mem.face == face.active {
            let denom = mem.ga.norm_squared();
            let beta = if denom > 0.0 { (ga.dot(&(&ga - &mem.ga)) / denom).max(0.0) } else { 0.0 };
            let cand = &d + &mem.dir * beta;
            let cand = face.restrict(&cand);
            if state.g.dot(&cand) < -1e-12 * ga.norm() * cand.norm() {
                d = cand;
            }
        }
    }
    let gtd = state.g.dot(&d);
    let (s_max, blocker) = max_feasible_step(poly, &state.x, &d, &face.active);

    // Secant curvature along d; exact for quadratics.
    let dn = d.norm();
    let h = 1e-4 * (1.0 + state.x.amax()) / dn;
    let (_, g_probe) = obj.eval(&(&state.x + &d * h))?;
    let curvature = d.dot(&(&g_probe - &state.g)) / h;
    let s_star = if curvature > 0.0 { -gtd / curvature } else { f64::INFINITY };
    let mut s = s_star.min(s_max);
    if !s.is_finite() {
        s = (1.0 + state.x.amax()) / dn;
    }
    let mut blocked = s >= s_max;
    let mut reductions = 0;
    let (x_new, f_new, g_new) = loop {
        let mut x_new = &state.x + &d * s;
        if blocked {
            snap(poly, &mut x_new, blocker);
        }
        let (f_new, g_new) = obj.eval(&x_new)?;
        if sufficient_decrease(f_new, state.f, state.f, s, gtd, g_new.dot(&d), cfg.delta_armijo) {
            break (x_new, f_new, g_new);
        }
        reductions += 1;
        if reductions > MAX_REDUCTIONS {
            return Err(NpasaError::LineSearchStall(reductions - 1));
        }
        s *= cfg.sigma;
        blocked = false;
    };
    // Monotone by construction; keep the nonmonotone memory current as well.
    state.accept(x_new, f_new, g_new, cfg.memory);
    state.cg = if blocked { None } else { Some(CgMemory { face: face.active, dir: d, ga }) };
    Ok(LcoInfo { step: s, blocked, f_prev, f_new })
}

/// Put a variable that hit a bound exactly on it.
fn snap(poly: &Polyhedron, x: &mut DVector<f64>, blocker: Option<usize>) {
    let (m, n) = (poly.m(), poly.n());
    match blocker {
        Some(i) if i >= 2 * m && i < 2 * m + n => x[i - 2 * m] = poly.lo()[i - 2 * m],
        Some(i) if i >= 2 * m + n => x[i - 2 * m - n] = poly.hi()[i - 2 * m - n],
        _ => {}
    }
}

/// Which quantity the driver compares with `epsilon`.
enum Metric<'a> {
    /// `-g'(y(x,1) - x)`, optionally with the alternative test against `theta * Ec`.
    Em0 { constraint_error: Option<&'a dyn Fn(&DVector<f64>) -> Result<f64>> },
    Pasa,
}

struct Measured {
    metric: f64,
    errors: PasaErrors,
    undecided_empty: bool,
    target: f64,
}

fn measure(poly: &Polyhedron, state: &PcoState, metric: &Metric<'_>, cfg: &PcoConfig) -> Result<Measured> {
    let errors = pasa_errors(poly, &state.x, &state.g)?;
    let (value, target) = match metric {
        Metric::Em0 { constraint_error } => {
            let d = &errors.y1 - &state.x;
            let value = em0_from_step(&state.g, &d, 1.0)?;
            let target = match constraint_error {
                Some(ec) if cfg.alt_stop => cfg.epsilon.min(cfg.theta * ec(&state.x)?),
                _ => cfg.epsilon,
            };
            (value, target)
        }
        Metric::Pasa => (errors.big_e_pasa, cfg.epsilon),
    };
    let r = poly.residual(&state.x);
    let undecided_empty = poly
        .finite_indices()
        .into_iter()
        .all(|i| !(-r[i] > 0.0 && -r[i] <= errors.big_e_pasa));
    Ok(Measured { metric: value, errors, undecided_empty, target })
}

fn run(obj: &dyn SmoothObjective, poly: &Polyhedron, x0: &DVector<f64>, cfg: &PcoConfig, metric: Metric<'_>) -> Result<PcoStatus> {
    cfg.validate()?;
    let u1 = polyproj::project_point(poly, x0)?;
    let mut state = PcoState::new(obj, u1, cfg)?;
    let mut theta = cfg.theta;
    let mut phase = Phase::One;
    let mut iterations = 0;
    let mut phases = Vec::new();
    let mut records = Vec::new();
    let mut stalled = false;
    let mut m = measure(poly, &state, &metric, cfg)?;
    records.push(record(0, phase, &state, &m, theta, None));

    while m.metric > m.target && iterations < cfg.max_iters {
        let step = match phase {
            Phase::One => ngpa_step(obj, poly, &mut state, cfg).map(StepInfo::Ngpa),
            Phase::Two => lco_step(obj, poly, &mut state, cfg).map(StepInfo::Lco),
        };
        let step = match step {
            Ok(s) => s,
            Err(NpasaError::LineSearchStall(k)) => {
                log::debug!("inner line search stalled after {k} reductions");
                stalled = true;
                break;
            }
            Err(e) => return Err(e),
        };
        iterations += 1;
        phases.push(phase);
        m = measure(poly, &state, &metric, cfg)?;
        let threshold = |t: f64| t * m.metric;
        match phase {
            Phase::One => {
                if m.undecided_empty && m.errors.e_pasa < threshold(theta) {
                    theta *= cfg.gamma;
                }
                if m.errors.e_pasa >= threshold(theta) {
                    phase = Phase::Two;
                }
            }
            Phase::Two => {
                if m.errors.e_pasa < threshold(theta) {
                    phase = Phase::One;
                }
            }
        }
        records.push(record(iterations, phase, &state, &m, theta, Some(step)));
        // A stationary point in phase one cannot move; let the metric decide.
        if let StepInfo::Ngpa(info) = step {
            if info.step == 0.0 && m.metric > m.target && phase == Phase::One {
                stalled = true;
                break;
            }
        }
    }
    Ok(PcoStatus {
        converged: m.metric <= m.target,
        stalled,
        f: state.f,
        metric: m.metric,
        iterations,
        phases,
        records,
        theta,
        projection: m.errors.projection,
        grad: state.g,
        x: state.x,
    })
}

fn record(iter: usize, phase: Phase, state: &PcoState, m: &Measured, theta: f64, step: Option<StepInfo>) -> PcoRecord {
    PcoRecord {
        iter,
        phase,
        f: state.f,
        metric: m.metric,
        e_pasa: m.errors.e_pasa,
        big_e_pasa: m.errors.big_e_pasa,
        grad_norm: state.g.norm(),
        theta,
        undecided_empty: m.undecided_empty,
        step,
    }
}

/// Minimize `L_q(x, lambda_bar)` over the problem's polyhedron, stopping on
/// `Em0(u, lambda_bar + 2q h(u), mu(u, 1)) <= epsilon`.
pub fn solve_pco_aug_lag(problem: &Problem, lambda_bar: &DVector<f64>, q: f64, x0: &DVector<f64>, cfg: &PcoConfig) -> Result<PcoStatus> {
    if !(q > 0.0) {
        return Err(NpasaError::InvalidParameter(format!("penalty q = {q}")));
    }
    let obj = |x: &DVector<f64>| kkt::aug_lagrangian(problem, x, lambda_bar, q);
    let ec = |x: &DVector<f64>| -> Result<f64> { Ok(problem.constraints(x)?.0.norm_squared()) };
    run(&obj, problem.polyhedron(), x0, cfg, Metric::Em0 { constraint_error: Some(&ec) })
}

/// Minimize a smooth function over `poly`, stopping on `E_PASA <= epsilon`.
pub fn solve_pco_generic(obj: &dyn SmoothObjective, poly: &Polyhedron, x0: &DVector<f64>, cfg: &PcoConfig) -> Result<PcoStatus> {
    run(obj, poly, x0, cfg, Metric::Pasa)
}
