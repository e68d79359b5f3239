//! Problem representation: polyhedral feasible set, smooth oracles, JSON ingestion
//! and finite-difference verification of user supplied derivatives.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::error::{NpasaError, Result};

/// Feasible set `{x : bl <= A x <= bu, lo <= x <= hi}`.
///
/// The stacked inequality view used throughout the solver is
/// `r(x) = [bl - A x; A x - bu; lo - x; x - hi] <= 0`, of length `2m + 2n`.
/// Components belonging to infinite bounds evaluate to `-inf` and carry no
/// multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron {
    a: DMatrix<f64>,
    bl: DVector<f64>,
    bu: DVector<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
}

/// Which block of the stacked inequality vector an index falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StackedKind {
    RowLower(usize),
    RowUpper(usize),
    VarLower(usize),
    VarUpper(usize),
}

impl Polyhedron {
    pub fn new(
        a: DMatrix<f64>,
        bl: DVector<f64>,
        bu: DVector<f64>,
        lo: DVector<f64>,
        hi: DVector<f64>,
    ) -> Result<Self> {
        let m = a.nrows();
        let n = a.ncols();
        if bl.len() != m || bu.len() != m {
            return Err(NpasaError::Dimension(format!(
                "row bounds have lengths {}/{} but A has {} rows",
                bl.len(),
                bu.len(),
                m
            )));
        }
        if lo.len() != n || hi.len() != n {
            return Err(NpasaError::Dimension(format!(
                "variable bounds have lengths {}/{} but A has {} columns",
                lo.len(),
                hi.len(),
                n
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(NpasaError::InvalidPolyhedron("A has non-finite entries".into()));
        }
        for j in 0..m {
            if bl[j].is_nan() || bu[j].is_nan() {
                return Err(NpasaError::InvalidPolyhedron(format!("row {j} has NaN bound")));
            }
            if bl[j] > bu[j] {
                return Err(NpasaError::InvalidPolyhedron(format!(
                    "row {j}: bl = {} > bu = {}",
                    bl[j], bu[j]
                )));
            }
            if bl[j] == f64::NEG_INFINITY && bu[j] == f64::INFINITY {
                return Err(NpasaError::InvalidPolyhedron(format!(
                    "row {j} is unbounded on both sides"
                )));
            }
            if bl[j] == f64::INFINITY || bu[j] == f64::NEG_INFINITY {
                return Err(NpasaError::InvalidPolyhedron(format!("row {j} bound is infinite on the wrong side")));
            }
        }
        for i in 0..n {
            if lo[i].is_nan() || hi[i].is_nan() {
                return Err(NpasaError::InvalidPolyhedron(format!("variable {i} has NaN bound")));
            }
            if lo[i] > hi[i] {
                return Err(NpasaError::InvalidPolyhedron(format!(
                    "variable {i}: lo = {} > hi = {}",
                    lo[i], hi[i]
                )));
            }
            if lo[i] == f64::INFINITY || hi[i] == f64::NEG_INFINITY {
                return Err(NpasaError::InvalidPolyhedron(format!("variable {i} bound is infinite on the wrong side")));
            }
        }
        Ok(Self { a, bl, bu, lo, hi })
    }

    /// All of `R^n`.
    pub fn free(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, n),
            bl: DVector::zeros(0),
            bu: DVector::zeros(0),
            lo: DVector::from_element(n, f64::NEG_INFINITY),
            hi: DVector::from_element(n, f64::INFINITY),
        }
    }

    /// Box `lo <= x <= hi` with no general rows.
    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        let n = lo.len();
        Self::new(DMatrix::zeros(0, n), DVector::zeros(0), DVector::zeros(0), lo, hi)
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn stacked_len(&self) -> usize {
        2 * self.m() + 2 * self.n()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn bl(&self) -> &DVector<f64> {
        &self.bl
    }

    pub fn bu(&self) -> &DVector<f64> {
        &self.bu
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn is_box(&self) -> bool {
        self.m() == 0
    }

    pub fn kind(&self, i: usize) -> StackedKind {
        let (m, n) = (self.m(), self.n());
        if i < m {
            StackedKind::RowLower(i)
        } else if i < 2 * m {
            StackedKind::RowUpper(i - m)
        } else if i < 2 * m + n {
            StackedKind::VarLower(i - 2 * m)
        } else {
            StackedKind::VarUpper(i - 2 * m - n)
        }
    }

    /// Whether stacked component `i` corresponds to a finite bound.
    pub fn is_finite(&self, i: usize) -> bool {
        match self.kind(i) {
            StackedKind::RowLower(j) => self.bl[j].is_finite(),
            StackedKind::RowUpper(j) => self.bu[j].is_finite(),
            StackedKind::VarLower(k) => self.lo[k].is_finite(),
            StackedKind::VarUpper(k) => self.hi[k].is_finite(),
        }
    }

    /// Indices of stacked components with finite bounds.
    pub fn finite_indices(&self) -> Vec<usize> {
        (0..self.stacked_len()).filter(|&i| self.is_finite(i)).collect()
    }

    /// Stacked residual `r(x)`; infinite bounds give `-inf`.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let (m, n) = (self.m(), self.n());
        let ax = &self.a * x;
        let mut r = DVector::zeros(2 * m + 2 * n);
        for j in 0..m {
            r[j] = self.bl[j] - ax[j];
            r[m + j] = ax[j] - self.bu[j];
        }
        for k in 0..n {
            r[2 * m + k] = self.lo[k] - x[k];
            r[2 * m + n + k] = x[k] - self.hi[k];
        }
        r
    }

    /// Gradient of stacked component `i` (row `i` of `[-A; A; -I; I]`).
    pub fn stacked_gradient(&self, i: usize) -> DVector<f64> {
        let n = self.n();
        match self.kind(i) {
            StackedKind::RowLower(j) => -self.a.row(j).transpose(),
            StackedKind::RowUpper(j) => self.a.row(j).transpose(),
            StackedKind::VarLower(k) => {
                let mut e = DVector::zeros(n);
                e[k] = -1.0;
                e
            }
            StackedKind::VarUpper(k) => {
                let mut e = DVector::zeros(n);
                e[k] = 1.0;
                e
            }
        }
    }

    /// `sum_i mu_i grad r_i`, skipping components with infinite bounds.
    pub fn grad_r_transpose_mul(&self, mu: &DVector<f64>) -> DVector<f64> {
        let (m, n) = (self.m(), self.n());
        let mut rows = DVector::zeros(m);
        for j in 0..m {
            let lower = if self.bl[j].is_finite() { mu[j] } else { 0.0 };
            let upper = if self.bu[j].is_finite() { mu[m + j] } else { 0.0 };
            rows[j] = upper - lower;
        }
        let mut out = self.a.tr_mul(&rows);
        for k in 0..n {
            if self.lo[k].is_finite() {
                out[k] -= mu[2 * m + k];
            }
            if self.hi[k].is_finite() {
                out[k] += mu[2 * m + n + k];
            }
        }
        out
    }

    /// Dense stacked Jacobian `[-A; A; -I; I]` restricted to finite components.
    pub fn finite_gradient_matrix(&self) -> (Vec<usize>, DMatrix<f64>) {
        let idx = self.finite_indices();
        let n = self.n();
        let mut g = DMatrix::zeros(idx.len(), n);
        for (r, &i) in idx.iter().enumerate() {
            g.set_row(r, &self.stacked_gradient(i).transpose());
        }
        (idx, g)
    }

    /// Largest violation `max_i r_i(x)^+` over finite components.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.residual(x)
            .iter()
            .fold(0.0_f64, |acc, &v| if v.is_finite() { acc.max(v) } else { acc })
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    /// Box-clamp `x` into `[lo, hi]` (ignores general rows).
    pub fn clamp_to_box(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .enumerate()
                .map(|(k, &v)| v.max(self.lo[k]).min(self.hi[k])),
        )
    }

    /// Append equality rows `rows * x = target`.
    pub fn with_equality_rows(&self, rows: &DMatrix<f64>, target: &DVector<f64>) -> Result<Self> {
        if rows.ncols() != self.n() || rows.nrows() != target.len() {
            return Err(NpasaError::Dimension("appended equality rows".into()));
        }
        let m = self.m();
        let k = rows.nrows();
        let n = self.n();
        let mut a = DMatrix::zeros(m + k, n);
        a.rows_mut(0, m).copy_from(&self.a);
        a.rows_mut(m, k).copy_from(rows);
        let mut bl = DVector::zeros(m + k);
        let mut bu = DVector::zeros(m + k);
        bl.rows_mut(0, m).copy_from(&self.bl);
        bu.rows_mut(0, m).copy_from(&self.bu);
        bl.rows_mut(m, k).copy_from(target);
        bu.rows_mut(m, k).copy_from(target);
        Self::new(a, bl, bu, self.lo.clone(), self.hi.clone())
    }
}

/// `1/2 x'Qx + c'x + d` with `Q` symmetrized on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl QuadraticForm {
    pub fn new(q: DMatrix<f64>, c: DVector<f64>, d: f64) -> Result<Self> {
        if !q.is_square() || q.nrows() != c.len() {
            return Err(NpasaError::Dimension(format!(
                "quadratic form: Q is {}x{}, c has length {}",
                q.nrows(),
                q.ncols(),
                c.len()
            )));
        }
        let q = (&q + q.transpose()) * 0.5;
        Ok(Self { q, c, d })
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x) + self.d
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x + &self.c
    }
}

/// Analytic oracles of a nonlinear program. Implementations must be pure.
pub trait NlpFunctions: Send + Sync {
    /// `(f(x), grad f(x))`.
    fn objective(&self, x: &DVector<f64>) -> (f64, DVector<f64>);

    /// `(h(x), Jacobian of h)` with the Jacobian stored `l x n`.
    fn constraints(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
}

/// Quadratic objective with quadratic equality constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticFunctions {
    pub objective: QuadraticForm,
    pub equalities: Vec<QuadraticForm>,
}

impl NlpFunctions for QuadraticFunctions {
    fn objective(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.objective.value(x), self.objective.gradient(x))
    }

    fn constraints(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let l = self.equalities.len();
        let mut h = DVector::zeros(l);
        let mut jac = DMatrix::zeros(l, x.len());
        for (j, form) in self.equalities.iter().enumerate() {
            h[j] = form.value(x);
            jac.set_row(j, &form.gradient(x).transpose());
        }
        (h, jac)
    }
}

/// A known primal-dual solution, used by tests and reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct KktPoint {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
}

/// A nonlinear program `min f(x) s.t. h(x) = 0, x in Omega`.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    n: usize,
    l: usize,
    functions: Arc<dyn NlpFunctions>,
    polyhedron: Polyhedron,
    pub known_kkt: Option<KktPoint>,
    quadratic: Option<QuadraticFunctions>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("l", &self.l)
            .field("m", &self.polyhedron.m())
            .finish()
    }
}

/// Everything the oracles return at one point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub f: f64,
    pub grad_f: DVector<f64>,
    pub h: DVector<f64>,
    pub jac_h: DMatrix<f64>,
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        l: usize,
        functions: Arc<dyn NlpFunctions>,
        polyhedron: Polyhedron,
    ) -> Result<Self> {
        if polyhedron.n() != n {
            return Err(NpasaError::Dimension(format!(
                "polyhedron has {} variables, problem has {}",
                polyhedron.n(),
                n
            )));
        }
        Ok(Self {
            name: name.into(),
            n,
            l,
            functions,
            polyhedron,
            known_kkt: None,
            quadratic: None,
        })
    }

    /// Problem whose oracles are the given quadratic forms.
    pub fn from_quadratic(
        name: impl Into<String>,
        functions: QuadraticFunctions,
        polyhedron: Polyhedron,
    ) -> Result<Self> {
        let n = functions.objective.c.len();
        for (j, e) in functions.equalities.iter().enumerate() {
            if e.c.len() != n {
                return Err(NpasaError::Structure(format!(
                    "equality {j} has dimension {}, expected {n}",
                    e.c.len()
                )));
            }
        }
        let l = functions.equalities.len();
        let mut p = Self::new(name, n, l, Arc::new(functions.clone()), polyhedron)?;
        p.quadratic = Some(functions);
        Ok(p)
    }

    pub fn with_known_kkt(mut self, kkt: KktPoint) -> Self {
        self.known_kkt = Some(kkt);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.polyhedron.m()
    }

    pub fn polyhedron(&self) -> &Polyhedron {
        &self.polyhedron
    }

    pub fn functions(&self) -> &Arc<dyn NlpFunctions> {
        &self.functions
    }

    /// Quadratic description, when the problem was built from one.
    pub fn quadratic(&self) -> Option<&QuadraticFunctions> {
        self.quadratic.as_ref()
    }

    fn check_len(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(NpasaError::Dimension(format!(
                "point has length {}, problem dimension is {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check_len(x)?;
        let (f, g) = self.functions.objective(x);
        if !f.is_finite() {
            return Err(NpasaError::NonFinite { what: "objective", index: 0 });
        }
        check_finite("objective gradient", g.iter())?;
        Ok((f, g))
    }

    pub fn constraints(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_len(x)?;
        let (h, jac) = self.functions.constraints(x);
        if h.len() != self.l || jac.nrows() != self.l || jac.ncols() != self.n {
            return Err(NpasaError::Dimension("constraint oracle output".into()));
        }
        check_finite("constraint", h.iter())?;
        check_finite("constraint Jacobian", jac.transpose().iter())?;
        Ok((h, jac))
    }

    /// Evaluate all oracles at `x`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<Evaluation> {
        let (f, grad_f) = self.objective(x)?;
        let (h, jac_h) = self.constraints(x)?;
        Ok(Evaluation { f, grad_f, h, jac_h })
    }
}

fn check_finite<'a>(what: &'static str, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for (index, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(NpasaError::NonFinite { what, index });
        }
    }
    Ok(())
}

/// Which oracle a flagged derivative entry belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeSource {
    Objective,
    Constraint(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeFlag {
    pub source: DerivativeSource,
    /// Zero-based variable index.
    pub component: usize,
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct DerivativeReport {
    pub max_rel_err_grad: f64,
    pub max_rel_err_jac: f64,
    pub tolerance: f64,
    pub flagged: Vec<DerivativeFlag>,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-6;
pub const DEFAULT_FD_TOL: f64 = 1e-5;

/// Compare analytic derivatives against central differences at `x`.
pub fn check_derivatives(problem: &Problem, x: &DVector<f64>, step: f64) -> Result<DerivativeReport> {
    check_derivatives_with_tol(problem, x, step, DEFAULT_FD_TOL)
}

pub fn check_derivatives_with_tol(
    problem: &Problem,
    x: &DVector<f64>,
    step: f64,
    tolerance: f64,
) -> Result<DerivativeReport> {
    if step <= 0.0 {
        return Err(NpasaError::InvalidParameter("finite-difference step must be positive".into()));
    }
    let base = problem.eval(x)?;
    let n = problem.n();
    let mut report = DerivativeReport {
        max_rel_err_grad: 0.0,
        max_rel_err_jac: 0.0,
        tolerance,
        flagged: Vec::new(),
    };
    for k in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += step;
        xm[k] -= step;
        let plus = problem.eval(&xp)?;
        let minus = problem.eval(&xm)?;

        let fd = (plus.f - minus.f) / (2.0 * step);
        let err = relative_error(base.grad_f[k], fd);
        report.max_rel_err_grad = report.max_rel_err_grad.max(err);
        if err > tolerance {
            report.flagged.push(DerivativeFlag {
                source: DerivativeSource::Objective,
                component: k,
                analytic: base.grad_f[k],
                finite_difference: fd,
                rel_err: err,
            });
        }
        for j in 0..problem.l() {
            let fd = (plus.h[j] - minus.h[j]) / (2.0 * step);
            let err = relative_error(base.jac_h[(j, k)], fd);
            report.max_rel_err_jac = report.max_rel_err_jac.max(err);
            if err > tolerance {
                report.flagged.push(DerivativeFlag {
                    source: DerivativeSource::Constraint(j),
                    component: k,
                    analytic: base.jac_h[(j, k)],
                    finite_difference: fd,
                    rel_err: err,
                });
            }
        }
    }
    Ok(report)
}

fn relative_error(analytic: f64, approx: f64) -> f64 {
    (analytic - approx).abs() / analytic.abs().max(approx.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// JSON ingestion

/// Parse a problem from the quadratic JSON schema.
pub fn load_problem_json(text: &str) -> Result<Problem> {
    let root: Value = serde_json::from_str(text).map_err(|e| NpasaError::Parse {
        path: "$".into(),
        message: e.to_string(),
    })?;
    let obj = as_object(&root, "$")?;
    let n = as_usize(field(obj, "n", "$")?, "$.n")?;
    let name = match obj.get("name") {
        Some(v) => as_str(v, "$.name")?.to_string(),
        None => "json".to_string(),
    };

    let objective = parse_form(field(obj, "objective", "$")?, n, "$.objective")?;
    let equalities = match obj.get("equalities") {
        Some(v) => as_array(v, "$.equalities")?
            .iter()
            .enumerate()
            .map(|(j, e)| parse_form(e, n, &format!("$.equalities[{j}]")))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let polyhedron = match obj.get("polyhedron") {
        Some(v) => parse_polyhedron(v, n, "$.polyhedron")?,
        None => Polyhedron::free(n),
    };
    Problem::from_quadratic(name, QuadraticFunctions { objective, equalities }, polyhedron)
}

/// Inverse of [`load_problem_json`]; only defined for quadratic problems.
pub fn problem_to_json(problem: &Problem) -> Result<String> {
    let quad = problem.quadratic().ok_or_else(|| {
        NpasaError::Structure(format!("problem '{}' is not quadratic", problem.name))
    })?;
    let poly = problem.polyhedron();
    let value = json!({
        "name": problem.name,
        "n": problem.n(),
        "objective": form_to_json(&quad.objective),
        "equalities": quad.equalities.iter().map(form_to_json).collect::<Vec<_>>(),
        "polyhedron": {
            "A": matrix_to_json(poly.a()),
            "bl": bounds_to_json(poly.bl()),
            "bu": bounds_to_json(poly.bu()),
            "lo": bounds_to_json(poly.lo()),
            "hi": bounds_to_json(poly.hi()),
        }
    });
    serde_json::to_string_pretty(&value).map_err(|e| NpasaError::Parse {
        path: "$".into(),
        message: e.to_string(),
    })
}

fn form_to_json(form: &QuadraticForm) -> Value {
    json!({
        "Q": matrix_to_json(&form.q),
        "c": form.c.iter().copied().collect::<Vec<f64>>(),
        "d": form.d,
    })
}

fn matrix_to_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array(m.row(i).iter().map(|&v| json!(v)).collect()))
            .collect(),
    )
}

fn bounds_to_json(v: &DVector<f64>) -> Value {
    Value::Array(
        v.iter()
            .map(|&b| {
                if b == f64::INFINITY {
                    json!("inf")
                } else if b == f64::NEG_INFINITY {
                    json!("-inf")
                } else {
                    json!(b)
                }
            })
            .collect(),
    )
}

fn parse_err(path: &str, message: impl Into<String>) -> NpasaError {
    NpasaError::Parse { path: path.to_string(), message: message.into() }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| parse_err(&format!("{path}.{key}"), "missing required field"))
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| parse_err(path, "expected object"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| parse_err(path, "expected array"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| parse_err(path, "expected string"))
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| parse_err(path, "expected non-negative integer"))
}

fn as_number(v: &Value, path: &str) -> Result<f64> {
    match v {
        Value::Number(num) => num.as_f64().ok_or_else(|| parse_err(path, "number out of range")),
        Value::String(s) => match s.as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => Err(parse_err(path, format!("unrecognized numeric string '{s}'"))),
        },
        _ => Err(parse_err(path, "expected number")),
    }
}

fn parse_vector(v: &Value, path: &str, allow_inf: bool) -> Result<DVector<f64>> {
    let items = as_array(v, path)?;
    let mut out = DVector::zeros(items.len());
    for (i, item) in items.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let x = as_number(item, &p)?;
        if !allow_inf && !x.is_finite() {
            return Err(parse_err(&p, "infinite value not allowed here"));
        }
        out[i] = x;
    }
    Ok(out)
}

fn parse_matrix(v: &Value, cols: usize, path: &str) -> Result<DMatrix<f64>> {
    let rows = as_array(v, path)?;
    let mut out = DMatrix::zeros(rows.len(), cols);
    for (i, row) in rows.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let entries = parse_vector(row, &p, false)?;
        if entries.len() != cols {
            return Err(NpasaError::Structure(format!(
                "{p} has {} entries, expected {cols}",
                entries.len()
            )));
        }
        out.set_row(i, &entries.transpose());
    }
    Ok(out)
}

fn parse_form(v: &Value, n: usize, path: &str) -> Result<QuadraticForm> {
    let obj = as_object(v, path)?;
    let q = match obj.get("Q") {
        Some(qv) => {
            let q = parse_matrix(qv, n, &format!("{path}.Q"))?;
            if q.nrows() != n {
                return Err(NpasaError::Structure(format!(
                    "{path}.Q has {} rows, expected {n}",
                    q.nrows()
                )));
            }
            q
        }
        None => DMatrix::zeros(n, n),
    };
    let c = match obj.get("c") {
        Some(cv) => {
            let c = parse_vector(cv, &format!("{path}.c"), false)?;
            if c.len() != n {
                return Err(NpasaError::Structure(format!(
                    "{path}.c has length {}, expected {n}",
                    c.len()
                )));
            }
            c
        }
        None => DVector::zeros(n),
    };
    let d = match obj.get("d") {
        Some(dv) => as_number(dv, &format!("{path}.d"))?,
        None => 0.0,
    };
    if !d.is_finite() {
        return Err(parse_err(&format!("{path}.d"), "must be finite"));
    }
    QuadraticForm::new(q, c, d)
}

fn parse_polyhedron(v: &Value, n: usize, path: &str) -> Result<Polyhedron> {
    let obj = as_object(v, path)?;
    let bl = match obj.get("bl") {
        Some(b) => Some(parse_vector(b, &format!("{path}.bl"), true)?),
        None => None,
    };
    let bu = match obj.get("bu") {
        Some(b) => Some(parse_vector(b, &format!("{path}.bu"), true)?),
        None => None,
    };
    let declared_m = match obj.get("m") {
        Some(mv) => Some(as_usize(mv, &format!("{path}.m"))?),
        None => None,
    };
    let m = declared_m
        .or(bl.as_ref().map(|b| b.len()))
        .or(bu.as_ref().map(|b| b.len()))
        .unwrap_or(0);
    let a = match obj.get("A") {
        Some(av) => parse_matrix(av, n, &format!("{path}.A"))?,
        None if m > 0 => {
            return Err(NpasaError::Structure(format!(
                "{path}.A is missing but {m} rows are declared"
            )))
        }
        None => DMatrix::zeros(0, n),
    };
    if a.nrows() != m {
        return Err(NpasaError::Structure(format!(
            "{path}.A has {} rows, bounds declare {m}",
            a.nrows()
        )));
    }
    let bl = bl.unwrap_or_else(|| DVector::from_element(m, f64::NEG_INFINITY));
    let bu = bu.unwrap_or_else(|| DVector::from_element(m, f64::INFINITY));
    if bl.len() != m || bu.len() != m {
        return Err(NpasaError::Structure(format!(
            "{path}: bl/bu lengths {}/{} do not match {m} rows",
            bl.len(),
            bu.len()
        )));
    }
    let lo = match obj.get("lo") {
        Some(b) => parse_vector(b, &format!("{path}.lo"), true)?,
        None => DVector::from_element(n, f64::NEG_INFINITY),
    };
    let hi = match obj.get("hi") {
        Some(b) => parse_vector(b, &format!("{path}.hi"), true)?,
        None => DVector::from_element(n, f64::INFINITY),
    };
    if lo.len() != n || hi.len() != n {
        return Err(NpasaError::Structure(format!(
            "{path}: lo/hi lengths {}/{} do not match n = {n}",
            lo.len(),
            hi.len()
        )));
    }
    Polyhedron::new(a, bl, bu, lo, hi)
}
