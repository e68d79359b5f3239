//! Euclidean projection onto a polyhedron with dual recovery.
//!
//! The projection `min 1/2 |y - x_bar|^2 s.t. y in Omega` is solved by a dual
//! active-set method (Goldfarb-Idnani with identity Hessian). The row duals
//! `pi` it produces satisfy `y = clamp(x_bar + A'pi, lo, hi)` and are turned
//! into a full stacked inequality multiplier by [`reconstruct_multipliers`].

use nalgebra::{DMatrix, DVector};

use crate::error::{NpasaError, Result};
use crate::model::Polyhedron;

/// Farkas certificate for an empty polyhedron.
///
/// `weights` is indexed like the stacked residual. For every `x`,
/// `sum_i weights_i * r_i(x) = gap > 0`, so some `r_i(x)` is positive.
#[derive(Clone, Debug, PartialEq)]
pub struct InfeasibilityCertificate {
    pub weights: Vec<f64>,
    pub gap: f64,
}

impl InfeasibilityCertificate {
    /// `(|sum_i weights_i grad r_i|_inf, sum_i weights_i r_i(x))` at any `x`.
    pub fn check(&self, poly: &Polyhedron, x: &DVector<f64>) -> (f64, f64) {
        let mut combo = DVector::zeros(poly.n());
        let r = poly.residual(x);
        let mut value = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                combo += poly.stacked_gradient(i) * w;
                value += w * r[i];
            }
        }
        (combo.amax(), value)
    }
}

/// Residuals of the reconstructed multiplier: stationarity of the projection
/// Lagrangian, primal feasibility, multiplier sign and complementarity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReconstructionResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub sign: f64,
    pub complementarity: f64,
}

impl ReconstructionResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.sign)
            .max(self.complementarity)
    }
}

/// Variables at their lower bound, at their upper bound, and free.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActiveSets {
    pub at_lower: Vec<usize>,
    pub at_upper: Vec<usize>,
    pub free: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ProjectionResult {
    pub y_star: DVector<f64>,
    pub pi_star: DVector<f64>,
    pub active_sets: ActiveSets,
    /// Stacked `[gamma1; gamma2; upsilon1; upsilon2]`.
    pub mu_recon: DVector<f64>,
    pub residuals: ReconstructionResiduals,
}

#[derive(Clone, Debug)]
pub struct SlackProjectionResult {
    pub w_p: DVector<f64>,
    pub y_p: DVector<f64>,
    pub p: f64,
}

impl SlackProjectionResult {
    /// Slack in the scaled coordinates `sqrt(p) * y`.
    pub fn scaled_slack_norm(&self) -> f64 {
        self.p.sqrt() * self.y_p.norm()
    }
}

const DEPENDENT_TOL: f64 = 1e-10;
const ACTIVE_TOL: f64 = 1e-9;
const RECON_TOL: f64 = 1e-6;

/// One constraint `normal' y >= rhs`, or `normal' y = rhs` when `equality`.
#[derive(Clone, Debug)]
struct Constraint {
    normal: DVector<f64>,
    norm: f64,
    rhs: f64,
    equality: bool,
    /// Stacked index carrying a nonnegative weight (lower side for equalities).
    stacked: usize,
    /// Stacked index of the upper side of an equality.
    stacked_upper: usize,
}

impl Constraint {
    fn new(normal: DVector<f64>, rhs: f64, equality: bool, stacked: usize, stacked_upper: usize) -> Self {
        let norm = normal.norm();
        Self { normal, norm, rhs, equality, stacked, stacked_upper }
    }

    fn slack(&self, y: &DVector<f64>) -> f64 {
        self.normal.dot(y) - self.rhs
    }

    fn tol(&self, y: &DVector<f64>) -> f64 {
        1e-12 * (1.0 + self.rhs.abs() + self.norm * y.amax())
    }
}

fn build_constraints(poly: &Polyhedron) -> std::result::Result<Vec<Constraint>, InfeasibilityCertificate> {
    let (m, n) = (poly.m(), poly.n());
    let stacked_len = poly.stacked_len();
    let mut out = Vec::new();
    let mut push = |normal: DVector<f64>, rhs: f64, equality: bool, lower: usize, upper: usize| {
        if normal.amax() == 0.0 {
            // 0 >= rhs (or 0 = rhs) must hold on its own.
            let bad_lower = rhs > 0.0;
            let bad_upper = equality && rhs < 0.0;
            if bad_lower || bad_upper {
                let mut weights = vec![0.0; stacked_len];
                let idx = if bad_lower { lower } else { upper };
                weights[idx] = 1.0;
                return Err(InfeasibilityCertificate { weights, gap: rhs.abs() });
            }
            return Ok(());
        }
        out.push(Constraint::new(normal, rhs, equality, lower, upper));
        Ok(())
    };
    for j in 0..m {
        let a = poly.a().row(j).transpose();
        let (bl, bu) = (poly.bl()[j], poly.bu()[j]);
        if bl == bu {
            push(a, bl, true, j, m + j)?;
        } else {
            if bl.is_finite() {
                push(a.clone(), bl, false, j, j)?;
            }
            if bu.is_finite() {
                push(-a, -bu, false, m + j, m + j)?;
            }
        }
    }
    for k in 0..n {
        let (lo, hi) = (poly.lo()[k], poly.hi()[k]);
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        let lower = 2 * m + k;
        let upper = 2 * m + n + k;
        if lo == hi {
            push(e, lo, true, lower, upper)?;
        } else {
            if lo.is_finite() {
                push(e.clone(), lo, false, lower, lower)?;
            }
            if hi.is_finite() {
                push(-e, -hi, false, upper, upper)?;
            }
        }
    }
    Ok(out)
}

fn certificate(cons: &[Constraint], stacked_len: usize, weights: &[(usize, f64)]) -> InfeasibilityCertificate {
    let mut stacked = vec![0.0; stacked_len];
    let mut gap = 0.0;
    for &(c, w) in weights {
        let con = &cons[c];
        gap += w * con.rhs;
        if con.equality && w < 0.0 {
            stacked[con.stacked_upper] += -w;
        } else {
            stacked[con.stacked] += w.max(0.0);
        }
    }
    InfeasibilityCertificate { weights: stacked, gap }
}

/// Thin QR of the active normals.
struct ActiveFactor {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl ActiveFactor {
    fn new(cons: &[Constraint], active: &[usize], n: usize) -> Self {
        let k = active.len();
        if k == 0 {
            return Self { q: DMatrix::zeros(n, 0), r: DMatrix::zeros(0, 0) };
        }
        let mut nm = DMatrix::zeros(n, k);
        for (col, &c) in active.iter().enumerate() {
            nm.set_column(col, &cons[c].normal);
        }
        let qr = nm.qr();
        Self { q: qr.q(), r: qr.r() }
    }

    /// Primal direction `z = (I - QQ')n` and dual direction `r = R^{-1} Q'n`.
    fn directions(&self, normal: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        if self.q.ncols() == 0 {
            return (normal.clone(), DVector::zeros(0));
        }
        let qt_n = self.q.tr_mul(normal);
        let mut z = normal - &self.q * &qt_n;
        let corr = self.q.tr_mul(&z);
        z -= &self.q * &corr;
        let r = self
            .r
            .solve_upper_triangular(&qt_n)
            .unwrap_or_else(|| DVector::from_element(qt_n.len(), f64::NAN));
        (z, r)
    }
}

/// Solve the projection over the constraint list; returns `(y, active, u)`.
fn dual_active_set(
    x_bar: &DVector<f64>,
    cons: &[Constraint],
    stacked_len: usize,
) -> Result<(DVector<f64>, Vec<usize>, Vec<f64>)> {
    let n = x_bar.len();
    let mut y = x_bar.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();

    for (c, con) in cons.iter().enumerate().filter(|(_, c)| c.equality) {
        let factor = ActiveFactor::new(cons, &active, n);
        let (z, r) = factor.directions(&con.normal);
        let s = con.slack(&y);
        if z.norm() <= DEPENDENT_TOL * con.norm {
            if s.abs() > 1e-9 * (1.0 + con.rhs.abs() + con.norm * y.amax()) {
                let sign = -s.signum();
                let mut w = vec![(c, sign)];
                w.extend(active.iter().zip(r.iter()).map(|(&a, &rj)| (a, -sign * rj)));
                return Err(NpasaError::Infeasible(Some(certificate(cons, stacked_len, &w))));
            }
            continue;
        }
        let t = -s / z.dot(&con.normal);
        y += &z * t;
        for (uj, rj) in u.iter_mut().zip(r.iter()) {
            *uj -= t * rj;
        }
        active.push(c);
        u.push(t);
    }

    let max_iters = 100 + 20 * cons.len();
    let mut iters = 0;
    loop {
        let mut pick: Option<(usize, f64)> = None;
        for (c, con) in cons.iter().enumerate() {
            if con.equality || active.contains(&c) {
                continue;
            }
            let s = con.slack(&y);
            if s < -con.tol(&y) {
                let scaled = s / con.norm;
                if pick.map_or(true, |(_, best)| scaled < best) {
                    pick = Some((c, scaled));
                }
            }
        }
        let Some((p, _)) = pick else { break };
        let np = &cons[p].normal;
        let mut u_new = 0.0;
        loop {
            iters += 1;
            if iters > max_iters {
                return Err(NpasaError::IterationLimit("projection"));
            }
            let factor = ActiveFactor::new(cons, &active, n);
            let (z, r) = factor.directions(np);
            let mut t1 = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for (pos, &c) in active.iter().enumerate() {
                if cons[c].equality {
                    continue;
                }
                if r[pos] > 1e-14 {
                    let ratio = u[pos] / r[pos];
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(pos);
                    }
                }
            }
            let zn = z.dot(np);
            let sp = cons[p].slack(&y);
            let t2 = if z.norm() > DEPENDENT_TOL * cons[p].norm && zn > 0.0 {
                (-sp / zn).max(0.0)
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                let mut w = vec![(p, 1.0)];
                w.extend(active.iter().zip(r.iter()).map(|(&a, &rj)| (a, -rj)));
                return Err(NpasaError::Infeasible(Some(certificate(cons, stacked_len, &w))));
            }
            if t2.is_finite() {
                y += &z * t;
            }
            for (uj, rj) in u.iter_mut().zip(r.iter()) {
                *uj -= t * rj;
            }
            u_new += t;
            if t2 <= t1 {
                active.push(p);
                u.push(u_new);
                break;
            }
            let pos = drop.expect("finite partial step has a blocking constraint");
            active.remove(pos);
            u.remove(pos);
        }
    }

    polish(x_bar, cons, &mut y, &active, &mut u);
    Ok((y, active, u))
}

/// Re-solve `y = x_bar + N u`, `N'y = b` on the final active set to shed drift.
fn polish(x_bar: &DVector<f64>, cons: &[Constraint], y: &mut DVector<f64>, active: &[usize], u: &mut [f64]) {
    if active.is_empty() {
        *y = x_bar.clone();
        return;
    }
    let n = x_bar.len();
    let factor = ActiveFactor::new(cons, active, n);
    let b = DVector::from_iterator(active.len(), active.iter().map(|&c| cons[c].rhs));
    let mut nm = DMatrix::zeros(n, active.len());
    for (col, &c) in active.iter().enumerate() {
        nm.set_column(col, &cons[c].normal);
    }
    let rhs = b - nm.tr_mul(x_bar);
    let Some(tmp) = factor.r.tr_solve_upper_triangular(&rhs) else { return };
    let Some(u_new) = factor.r.solve_upper_triangular(&tmp) else { return };
    let y_new = x_bar + &nm * &u_new;
    let violation = |pt: &DVector<f64>| {
        cons.iter()
            .map(|c| {
                let s = c.slack(pt);
                if c.equality { s.abs() } else { (-s).max(0.0) }
            })
            .fold(0.0_f64, f64::max)
    };
    let sign_ok = active
        .iter()
        .zip(u_new.iter())
        .all(|(&c, &uj)| cons[c].equality || uj >= -1e-12 * (1.0 + uj.abs()));
    if sign_ok && u_new.iter().all(|v| v.is_finite()) && violation(&y_new) <= violation(y).max(1e-14) {
        *y = y_new;
        for (dst, src) in u.iter_mut().zip(u_new.iter()) {
            *dst = *src;
        }
    }
}

/// Euclidean projection of `x_bar` onto `poly`, with duals and multipliers.
pub fn project(poly: &Polyhedron, x_bar: &DVector<f64>) -> Result<ProjectionResult> {
    if x_bar.len() != poly.n() {
        return Err(NpasaError::Dimension(format!(
            "projection point has length {}, polyhedron has {} variables",
            x_bar.len(),
            poly.n()
        )));
    }
    if x_bar.iter().any(|v| !v.is_finite()) {
        let index = x_bar.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(NpasaError::NonFinite { what: "projection input", index });
    }
    let m = poly.m();
    let (y, pi) = if poly.is_box() {
        (poly.clamp_to_box(x_bar), DVector::zeros(0))
    } else {
        let cons = build_constraints(poly).map_err(|c| NpasaError::Infeasible(Some(c)))?;
        let (y, active, u) = dual_active_set(x_bar, &cons, poly.stacked_len())?;
        let mut pi = DVector::zeros(m);
        for (&c, &uj) in active.iter().zip(u.iter()) {
            let con = &cons[c];
            if con.stacked < m {
                pi[con.stacked] += uj;
            } else if con.stacked < 2 * m {
                pi[con.stacked - m] -= uj;
            }
        }
        (y, pi)
    };
    let (mu_recon, residuals) = reconstruct_multipliers(poly, x_bar, &pi, &y)?;
    let active_sets = variable_partition(poly, &y);
    Ok(ProjectionResult { y_star: y, pi_star: pi, active_sets, mu_recon, residuals })
}

/// Projected point only.
pub fn project_point(poly: &Polyhedron, x_bar: &DVector<f64>) -> Result<DVector<f64>> {
    if poly.is_box() {
        return Ok(poly.clamp_to_box(x_bar));
    }
    Ok(project(poly, x_bar)?.y_star)
}

fn variable_partition(poly: &Polyhedron, y: &DVector<f64>) -> ActiveSets {
    let mut sets = ActiveSets::default();
    for k in 0..poly.n() {
        let (lo, hi) = (poly.lo()[k], poly.hi()[k]);
        let tol = ACTIVE_TOL * (1.0 + y[k].abs());
        if lo.is_finite() && (y[k] - lo).abs() <= tol {
            sets.at_lower.push(k);
        } else if hi.is_finite() && (y[k] - hi).abs() <= tol {
            sets.at_upper.push(k);
        } else {
            sets.free.push(k);
        }
    }
    sets
}

/// Build the stacked inequality multiplier from row duals.
///
/// With `v = x_bar + A'pi`, the row blocks are `max(pi, 0)` and `max(-pi, 0)`,
/// and the bound blocks absorb what the clamp removed:
/// `upsilon1 = (lo - v)^+`, `upsilon2 = (v - hi)^+`.
pub fn reconstruct_multipliers(
    poly: &Polyhedron,
    x_bar: &DVector<f64>,
    pi_star: &DVector<f64>,
    y_star: &DVector<f64>,
) -> Result<(DVector<f64>, ReconstructionResiduals)> {
    let (m, n) = (poly.m(), poly.n());
    if pi_star.len() != m || y_star.len() != n || x_bar.len() != n {
        return Err(NpasaError::Dimension("multiplier reconstruction inputs".into()));
    }
    let v = x_bar + poly.a().tr_mul(pi_star);
    let mut mu = DVector::zeros(2 * m + 2 * n);
    for j in 0..m {
        if poly.bl()[j].is_finite() {
            mu[j] = pi_star[j].max(0.0);
        }
        if poly.bu()[j].is_finite() {
            mu[m + j] = (-pi_star[j]).max(0.0);
        }
    }
    for k in 0..n {
        let (lo, hi) = (poly.lo()[k], poly.hi()[k]);
        if lo.is_finite() {
            mu[2 * m + k] = (lo - v[k]).max(0.0);
        }
        if hi.is_finite() {
            mu[2 * m + n + k] = (v[k] - hi).max(0.0);
        }
    }
    let residuals = reconstruction_residuals(poly, x_bar, &mu, y_star);
    let scale = 1.0 + x_bar.amax().max(y_star.amax()) + pi_star.amax();
    let checks = [
        ("stationarity", residuals.stationarity),
        ("feasibility", residuals.feasibility),
        ("sign", residuals.sign),
        ("complementarity", residuals.complementarity),
    ];
    for (condition, residual) in checks {
        if !(residual <= RECON_TOL * scale) {
            return Err(NpasaError::Reconstruction { condition, residual });
        }
    }
    Ok((mu, residuals))
}

/// Residuals of the projection KKT system `y - x_bar + grad r' mu = 0`,
/// `r(y) <= 0`, `mu >= 0`, `mu_i r_i(y) = 0`.
pub fn reconstruction_residuals(
    poly: &Polyhedron,
    x_bar: &DVector<f64>,
    mu: &DVector<f64>,
    y: &DVector<f64>,
) -> ReconstructionResiduals {
    let stat = y - x_bar + poly.grad_r_transpose_mul(mu);
    let r = poly.residual(y);
    let mut out = ReconstructionResiduals { stationarity: stat.amax(), ..Default::default() };
    for i in poly.finite_indices() {
        out.feasibility = out.feasibility.max(r[i]);
        out.sign = out.sign.max(-mu[i]);
        out.complementarity = out.complementarity.max((mu[i] * r[i]).abs());
    }
    out
}

/// Minimizer of `1/2|w - w_bar|^2 + p/2 |y|^2` over `M(w - w_bar) + y = c`, `w in Omega`.
pub fn project_with_slack(
    m_mat: &DMatrix<f64>,
    c: &DVector<f64>,
    w_bar: &DVector<f64>,
    p: f64,
    poly: &Polyhedron,
) -> Result<SlackProjectionResult> {
    let n = poly.n();
    let l = m_mat.nrows();
    if m_mat.ncols() != n || c.len() != l || w_bar.len() != n {
        return Err(NpasaError::Dimension("slack projection inputs".into()));
    }
    if !(p > 0.0) || !p.is_finite() {
        return Err(NpasaError::InvalidParameter(format!("slack penalty p = {p}")));
    }
    if l == 0 {
        let y = project_point(poly, w_bar)?;
        return Ok(SlackProjectionResult { w_p: y, y_p: DVector::zeros(0), p });
    }
    // Substituting y = t / sqrt(p) turns the problem into a plain projection
    // of (w_bar, 0) in the joint (w, t) space.
    let m = poly.m();
    let root = p.sqrt();
    let mut a = DMatrix::zeros(m + l, n + l);
    a.view_mut((0, 0), (m, n)).copy_from(poly.a());
    a.view_mut((m, 0), (l, n)).copy_from(m_mat);
    for j in 0..l {
        a[(m + j, n + j)] = 1.0 / root;
    }
    let target = c + m_mat * w_bar;
    let mut bl = DVector::zeros(m + l);
    let mut bu = DVector::zeros(m + l);
    bl.rows_mut(0, m).copy_from(poly.bl());
    bu.rows_mut(0, m).copy_from(poly.bu());
    bl.rows_mut(m, l).copy_from(&target);
    bu.rows_mut(m, l).copy_from(&target);
    let mut lo = DVector::from_element(n + l, f64::NEG_INFINITY);
    let mut hi = DVector::from_element(n + l, f64::INFINITY);
    lo.rows_mut(0, n).copy_from(poly.lo());
    hi.rows_mut(0, n).copy_from(poly.hi());
    let joint = Polyhedron::new(a, bl, bu, lo, hi)?;
    let mut start = DVector::zeros(n + l);
    start.rows_mut(0, n).copy_from(w_bar);
    let res = project(&joint, &start)?;
    let w_p = res.y_star.rows(0, n).into_owned();
    let y_p = res.y_star.rows(n, l).into_owned() / root;
    Ok(SlackProjectionResult { w_p, y_p, p })
}

/// Stacked indices with `|r_i(x)| <= tol`.
pub fn active_set(poly: &Polyhedron, x: &DVector<f64>, tol: f64) -> Vec<usize> {
    let r = poly.residual(x);
    poly.finite_indices()
        .into_iter()
        .filter(|&i| r[i].abs() <= tol)
        .collect()
}

/// Largest `n + m` accepted by [`oracle_project`].
pub const ORACLE_LIMIT: usize = 10;

/// Exact projection by enumerating candidate active sets. Exponential; for tests.
pub fn oracle_project(poly: &Polyhedron, x_bar: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = (poly.m(), poly.n());
    if n + m > ORACLE_LIMIT {
        return Err(NpasaError::OracleLimit(format!("n + m = {} exceeds {ORACLE_LIMIT}", n + m)));
    }
    // Per row/variable: none, lower side or upper side (one choice when bounds coincide).
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for j in 0..m {
        let mut g = Vec::new();
        if poly.bl()[j].is_finite() {
            g.push(j);
        }
        if poly.bu()[j].is_finite() && poly.bu()[j] != poly.bl()[j] {
            g.push(m + j);
        }
        groups.push(g);
    }
    for k in 0..n {
        let mut g = Vec::new();
        if poly.lo()[k].is_finite() {
            g.push(2 * m + k);
        }
        if poly.hi()[k].is_finite() && poly.hi()[k] != poly.lo()[k] {
            g.push(2 * m + n + k);
        }
        groups.push(g);
    }
    let grads: Vec<DVector<f64>> = (0..poly.stacked_len()).map(|i| poly.stacked_gradient(i)).collect();
    let zero = DVector::zeros(n);
    let r0 = poly.residual(&zero);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut chosen: Vec<usize> = Vec::new();
    enumerate(poly, x_bar, &groups, 0, &mut chosen, &grads, &r0, &mut best);
    best.map(|(_, y)| y).ok_or(NpasaError::Infeasible(None))
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    poly: &Polyhedron,
    x_bar: &DVector<f64>,
    groups: &[Vec<usize>],
    depth: usize,
    chosen: &mut Vec<usize>,
    grads: &[DVector<f64>],
    r0: &DVector<f64>,
    best: &mut Option<(f64, DVector<f64>)>,
) {
    let n = x_bar.len();
    if depth == groups.len() {
        if let Some(y) = affine_projection(x_bar, chosen, grads, r0) {
            if poly.contains(&y, 1e-9 * (1.0 + y.amax())) {
                let d = (&y - x_bar).norm_squared();
                if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                    *best = Some((d, y));
                }
            }
        }
        return;
    }
    enumerate(poly, x_bar, groups, depth + 1, chosen, grads, r0, best);
    if chosen.len() < n {
        for &i in &groups[depth] {
            chosen.push(i);
            enumerate(poly, x_bar, groups, depth + 1, chosen, grads, r0, best);
            chosen.pop();
        }
    }
}

/// Projection of `x_bar` onto `{y : r_i(y) = 0, i in set}`; `None` if dependent.
fn affine_projection(x_bar: &DVector<f64>, set: &[usize], grads: &[DVector<f64>], r0: &DVector<f64>) -> Option<DVector<f64>> {
    let k = set.len();
    if k == 0 {
        return Some(x_bar.clone());
    }
    let n = x_bar.len();
    let mut g = DMatrix::zeros(k, n);
    let mut resid = DVector::zeros(k);
    for (row, &i) in set.iter().enumerate() {
        g.set_row(row, &grads[i].transpose());
        // r_i(y) = grad_i' y + r_i(0)
        resid[row] = grads[i].dot(x_bar) + r0[i];
    }
    let gram = &g * g.transpose();
    let chol = gram.clone().cholesky()?;
    let l = chol.l();
    let dmax = (0..k).map(|i| l[(i, i)]).fold(0.0_f64, f64::max);
    let dmin = (0..k).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
    if dmin <= 1e-7 * dmax {
        return None;
    }
    let w = chol.solve(&resid);
    Some(x_bar - g.transpose() * w)
}
