//! Built-in test problems.
//!
//! | name | objective | equality | polyhedron |
//! |------|-----------|----------|------------|
//! | p1 | `1/2 |x|^2` | `x1 + x2 = 1` | `R^2` |
//! | p2 | `(x1-2)^2 + (x2+1)^2` | `x1^2 + x2^2 = 2` | `x >= 0` |
//! | p3 | `1/2 |x|^2` | `x1^2 + x2^2 = 1` | `x1 >= 2` (infeasible) |
//! | p4 | Rosenbrock | `x1 + x2 = 1` | `R^2` |

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{NpasaError, Result};
use crate::model::{KktPoint, NlpFunctions, Polyhedron, Problem, QuadraticForm, QuadraticFunctions};

/// Names of the compiled-in problems, in listing order.
pub fn names() -> Vec<&'static str> {
    if cfg!(feature = "builtin-problems") {
        vec!["p1", "p2", "p3", "p4"]
    } else {
        Vec::new()
    }
}

/// Look up a compiled-in problem by (case-insensitive) name.
pub fn get(name: &str) -> Result<Problem> {
    let lower = name.to_ascii_lowercase();
    if !names().contains(&lower.as_str()) {
        return Err(NpasaError::UnknownProblem(name.to_string()));
    }
    Ok(match lower.as_str() {
        "p1" => p1(),
        "p2" => p2(),
        "p3" => p3(),
        _ => p4(),
    })
}

pub fn all() -> Vec<Problem> {
    names().into_iter().filter_map(|n| get(n).ok()).collect()
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn linear(c: &[f64], d: f64) -> QuadraticForm {
    let n = c.len();
    QuadraticForm::new(DMatrix::zeros(n, n), v(c), d).expect("valid form")
}

pub fn p1() -> Problem {
    let functions = QuadraticFunctions {
        objective: QuadraticForm::new(DMatrix::identity(2, 2), DVector::zeros(2), 0.0).expect("valid form"),
        equalities: vec![linear(&[1.0, 1.0], -1.0)],
    };
    Problem::from_quadratic("p1", functions, Polyhedron::free(2))
        .expect("p1 is well formed")
        .with_known_kkt(KktPoint {
            x: v(&[0.5, 0.5]),
            lambda: v(&[-0.5]),
            mu: DVector::zeros(4),
        })
}

pub fn p2() -> Problem {
    let functions = QuadraticFunctions {
        objective: QuadraticForm::new(DMatrix::identity(2, 2) * 2.0, v(&[-4.0, 2.0]), 5.0).expect("valid form"),
        equalities: vec![QuadraticForm::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2), -2.0)
            .expect("valid form")],
    };
    let poly = Polyhedron::boxed(DVector::zeros(2), DVector::from_element(2, f64::INFINITY)).expect("box");
    let s = 2.0_f64.sqrt();
    // stacked mu layout with m = 0: [lo_1, lo_2, hi_1, hi_2]
    Problem::from_quadratic("p2", functions, poly)
        .expect("p2 is well formed")
        .with_known_kkt(KktPoint {
            x: v(&[s, 0.0]),
            lambda: v(&[s - 1.0]),
            mu: v(&[0.0, 2.0, 0.0, 0.0]),
        })
}

pub fn p3() -> Problem {
    let functions = QuadraticFunctions {
        objective: QuadraticForm::new(DMatrix::identity(2, 2), DVector::zeros(2), 0.0).expect("valid form"),
        equalities: vec![QuadraticForm::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2), -1.0)
            .expect("valid form")],
    };
    let poly = Polyhedron::boxed(v(&[2.0, f64::NEG_INFINITY]), DVector::from_element(2, f64::INFINITY))
        .expect("box");
    Problem::from_quadratic("p3", functions, poly).expect("p3 is well formed")
}

/// Rosenbrock's function restricted to the line `x1 + x2 = 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct RosenbrockLine;

impl NlpFunctions for RosenbrockLine {
    fn objective(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let (a, b) = (x[0], x[1]);
        let t = b - a * a;
        let f = 100.0 * t * t + (1.0 - a) * (1.0 - a);
        let g = v(&[-400.0 * a * t - 2.0 * (1.0 - a), 200.0 * t]);
        (f, g)
    }

    fn constraints(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        (v(&[x[0] + x[1] - 1.0]), DMatrix::from_row_slice(1, 2, &[1.0, 1.0]))
    }
}

pub fn p4() -> Problem {
    // Along x2 = 1 - x1 stationarity reduces to 400t^3 + 600t^2 - 198t - 202 = 0.
    let mut t: f64 = 0.62;
    for _ in 0..50 {
        let g = ((400.0 * t + 600.0) * t - 198.0) * t - 202.0;
        let dg = (1200.0 * t + 1200.0) * t - 198.0;
        let step = g / dg;
        t -= step;
        if step.abs() < 1e-16 {
            break;
        }
    }
    let x = v(&[t, 1.0 - t]);
    let (_, grad) = RosenbrockLine.objective(&x);
    Problem::new("p4", 2, 1, Arc::new(RosenbrockLine), Polyhedron::free(2))
        .expect("p4 is well formed")
        .with_known_kkt(KktPoint {
            x,
            lambda: v(&[-grad[1]]),
            mu: DVector::zeros(4),
        })
}
