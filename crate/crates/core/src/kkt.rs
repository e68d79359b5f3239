//! Lagrangian functions and KKT error estimators.
//!
//! With `L(x, lambda, mu) = f + lambda'h + mu'r` the estimators are
//!
//! ```text
//! Em0 = |grad L|^2 - mu'r(x)            (defined for x in Omega, mu >= 0)
//! Em1 = |grad L|^2 + |min(-r(x), mu)|^2
//! Ec  = |h(x)|^2
//! E0  = sqrt(Em0 + Ec),  E1 = sqrt(Em1 + Ec)
//! ```

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{NpasaError, Result};
use crate::model::{Evaluation, Problem};

/// Tolerance on `x in Omega` for the restricted estimators.
pub const D0_FEAS_TOL: f64 = 1e-10;
/// Tolerance on `mu >= 0` for the restricted estimators.
pub const D0_SIGN_TOL: f64 = 1e-12;

/// Primal-dual point. `mu` is aligned with the stacked residual `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
}

impl Iterate {
    pub fn new(x: DVector<f64>, lambda: DVector<f64>, mu: DVector<f64>) -> Self {
        Self { x, lambda, mu }
    }

    /// `x` with zero multipliers sized for `problem`.
    pub fn primal(problem: &Problem, x: DVector<f64>) -> Self {
        Self {
            x,
            lambda: DVector::zeros(problem.l()),
            mu: DVector::zeros(problem.polyhedron().stacked_len()),
        }
    }

    pub fn check(&self, problem: &Problem) -> Result<()> {
        if self.x.len() != problem.n()
            || self.lambda.len() != problem.l()
            || self.mu.len() != problem.polyhedron().stacked_len()
        {
            return Err(NpasaError::Dimension(format!(
                "iterate lengths ({}, {}, {}) do not match problem ({}, {}, {})",
                self.x.len(),
                self.lambda.len(),
                self.mu.len(),
                problem.n(),
                problem.l(),
                problem.polyhedron().stacked_len()
            )));
        }
        Ok(())
    }
}

/// KKT condition residuals, in order: stationarity, equality feasibility,
/// polyhedral feasibility, multiplier sign, complementarity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub equality: f64,
    pub inequality: f64,
    pub sign: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.as_array().into_iter().fold(0.0, f64::max)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.stationarity,
            self.equality,
            self.inequality,
            self.sign,
            self.complementarity,
        ]
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.as_array().iter().all(|&r| r <= tol)
    }
}

/// The five estimators at one iterate. `e0`/`em0` are `None` off `D0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub e0: Option<f64>,
    pub e1: f64,
    pub em0: Option<f64>,
    pub em1: f64,
    pub ec: f64,
    pub kkt: KktResiduals,
}

/// `grad f + J' lambda + grad r' mu` from a prepared evaluation.
pub fn lagrangian_grad_from(problem: &Problem, ev: &Evaluation, lambda: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
    let mut g = &ev.grad_f + ev.jac_h.tr_mul(lambda);
    g += problem.polyhedron().grad_r_transpose_mul(mu);
    g
}

pub fn lagrangian_grad(problem: &Problem, it: &Iterate) -> Result<DVector<f64>> {
    it.check(problem)?;
    let ev = problem.eval(&it.x)?;
    Ok(lagrangian_grad_from(problem, &ev, &it.lambda, &it.mu))
}

/// Componentwise minimum.
pub fn phi_min(u: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if u.len() != v.len() {
        return Err(NpasaError::Dimension(format!("phi_min: lengths {} and {}", u.len(), v.len())));
    }
    Ok(u.zip_map(v, f64::min))
}

/// Whether `(x, mu)` lies in the domain of `E0`/`Em0`.
pub fn in_d0(problem: &Problem, x: &DVector<f64>, mu: &DVector<f64>) -> bool {
    let poly = problem.polyhedron();
    poly.contains(x, D0_FEAS_TOL)
        && poly
            .finite_indices()
            .into_iter()
            .all(|i| mu[i] >= -D0_SIGN_TOL)
}

/// Estimators from an existing evaluation, avoiding a second oracle call.
pub fn error_report_from(problem: &Problem, ev: &Evaluation, it: &Iterate) -> Result<ErrorReport> {
    it.check(problem)?;
    let poly = problem.polyhedron();
    let r = poly.residual(&it.x);
    let grad_l = lagrangian_grad_from(problem, ev, &it.lambda, &it.mu);
    let gl2 = grad_l.norm_squared();
    let ec = ev.h.norm_squared();

    let mut phi2 = 0.0;
    let mut mu_r = 0.0;
    let mut mu_r_abs = 0.0;
    let mut infeas = 0.0_f64;
    let mut sign = 0.0_f64;
    let mut comp = 0.0_f64;
    for i in poly.finite_indices() {
        let (ri, mi) = (r[i], it.mu[i]);
        let phi = (-ri).min(mi);
        phi2 += phi * phi;
        mu_r += mi * ri;
        mu_r_abs += (mi * ri).abs();
        infeas = infeas.max(ri);
        sign = sign.max(-mi);
        comp = comp.max((ri * mi).abs());
    }
    let em1 = gl2 + phi2;

    let em0 = if in_d0(problem, &it.x, &it.mu) {
        let raw = gl2 - mu_r;
        // On D0 the expression is nonnegative; tiny negatives come from rounding
        // and from the feasibility tolerance on x.
        let slack = 1e-12 * (1.0 + gl2 + mu_r_abs)
            + poly
                .finite_indices()
                .into_iter()
                .map(|i| it.mu[i].max(0.0) * r[i].max(0.0))
                .sum::<f64>();
        if raw < 0.0 {
            if raw < -slack {
                return Err(NpasaError::Consistency(format!("Em0 = {raw:e} is negative on D0")));
            }
            Some(0.0)
        } else {
            Some(raw)
        }
    } else {
        None
    };

    let kkt = KktResiduals {
        stationarity: grad_l.amax(),
        equality: ev.h.amax(),
        inequality: infeas.max(0.0),
        sign: sign.max(0.0),
        complementarity: comp,
    };
    Ok(ErrorReport {
        e0: em0.map(|m| (m + ec).sqrt()),
        e1: (em1 + ec).sqrt(),
        em0,
        em1,
        ec,
        kkt,
    })
}

pub fn error_report(problem: &Problem, it: &Iterate) -> Result<ErrorReport> {
    it.check(problem)?;
    let ev = problem.eval(&it.x)?;
    error_report_from(problem, &ev, it)
}

/// KKT residuals and whether all are within `tol`.
pub fn kkt_check(problem: &Problem, it: &Iterate, tol: f64) -> Result<(KktResiduals, bool)> {
    let report = error_report(problem, it)?;
    Ok((report.kkt, report.kkt.passes(tol)))
}

/// `L_q(x, lambda) = f + lambda'h + q |h|^2` and its gradient.
pub fn aug_lagrangian(problem: &Problem, x: &DVector<f64>, lambda_bar: &DVector<f64>, q: f64) -> Result<(f64, DVector<f64>)> {
    let ev = problem.eval(x)?;
    Ok(aug_lagrangian_from(&ev, lambda_bar, q))
}

pub fn aug_lagrangian_from(ev: &Evaluation, lambda_bar: &DVector<f64>, q: f64) -> (f64, DVector<f64>) {
    let value = ev.f + lambda_bar.dot(&ev.h) + q * ev.h.norm_squared();
    let weights = lambda_bar + &ev.h * (2.0 * q);
    let grad = &ev.grad_f + ev.jac_h.tr_mul(&weights);
    (value, grad)
}

/// `f + nu'h + p |h(z) - h_ref|^2` and its gradient, with `h_ref = h(z_ref)`.
pub fn penalized_lagrangian_with_ref(
    problem: &Problem,
    z: &DVector<f64>,
    nu: &DVector<f64>,
    p: f64,
    h_ref: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let ev = problem.eval(z)?;
    let dh = &ev.h - h_ref;
    let value = ev.f + nu.dot(&ev.h) + p * dh.norm_squared();
    let weights = nu + dh * (2.0 * p);
    let grad = &ev.grad_f + ev.jac_h.tr_mul(&weights);
    Ok((value, grad))
}

pub fn penalized_lagrangian(
    problem: &Problem,
    z: &DVector<f64>,
    nu: &DVector<f64>,
    p: f64,
    z_ref: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let (h_ref, _) = problem.constraints(z_ref)?;
    penalized_lagrangian_with_ref(problem, z, nu, p, &h_ref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn p1_kkt_point_has_zero_gradient() {
        let p = registry::p1();
        let it = Iterate::new(v(&[0.5, 0.5]), v(&[-0.5]), DVector::zeros(4));
        let g = lagrangian_grad(&p, &it).unwrap();
        assert!(g.amax() < 1e-15);
        let rep = error_report(&p, &it).unwrap();
        assert!(rep.e0.unwrap() <= 1e-10 && rep.e1 <= 1e-10);
        let (res, ok) = kkt_check(&p, &it, 1e-8).unwrap();
        assert!(ok, "{res:?}");
    }

    #[test]
    fn gradient_without_multipliers_is_objective_gradient() {
        let p = registry::p2();
        let it = Iterate::primal(&p, v(&[0.3, 1.7]));
        let g = lagrangian_grad(&p, &it).unwrap();
        assert_eq!(g, v(&[2.0 * (0.3 - 2.0), 2.0 * (1.7 + 1.0)]));
    }

    #[test]
    fn p2_lagrangian_gradient_by_hand() {
        // grad f = (2(x1-2), 2(x2+1)) = (-2, 4), lambda grad h = 0.5 (2, 2)
        let p = registry::p2();
        let it = Iterate::new(v(&[1.0, 1.0]), v(&[0.5]), DVector::zeros(4));
        assert_eq!(lagrangian_grad(&p, &it).unwrap(), v(&[-1.0, 5.0]));
    }

    #[test]
    fn phi_min_cases() {
        assert_eq!(phi_min(&v(&[1.0, 2.0]), &v(&[3.0, 0.0])).unwrap(), v(&[1.0, 0.0]));
        let u = v(&[-1.0, 4.0]);
        assert_eq!(phi_min(&u, &u).unwrap(), u);
        assert!(phi_min(&u, &v(&[1.0])).is_err());
    }

    #[test]
    fn phi_vanishes_at_strictly_complementary_kkt() {
        let p = registry::p2();
        let kkt = p.known_kkt.clone().unwrap();
        let r = p.polyhedron().residual(&kkt.x);
        let idx = p.polyhedron().finite_indices();
        let neg_r = DVector::from_iterator(idx.len(), idx.iter().map(|&i| -r[i]));
        let mu = DVector::from_iterator(idx.len(), idx.iter().map(|&i| kkt.mu[i]));
        assert!(phi_min(&neg_r, &mu).unwrap().amax() < 1e-15);
    }

    #[test]
    fn p1_origin_report() {
        let p = registry::p1();
        let rep = error_report(&p, &Iterate::primal(&p, v(&[0.0, 0.0]))).unwrap();
        assert_eq!(rep.ec, 1.0);
        assert_eq!(rep.em1, 0.0);
        assert_eq!(rep.e1, 1.0);
    }

    #[test]
    fn off_domain_marks_e0_undefined() {
        let p = registry::p2();
        let rep = error_report(&p, &Iterate::primal(&p, v(&[-0.5, 1.0]))).unwrap();
        assert!(rep.e0.is_none() && rep.em0.is_none());
        assert!((rep.kkt.inequality - 0.5).abs() < 1e-15);
        let it = Iterate::new(v(&[1.0, 1.0]), v(&[0.0]), v(&[0.0, -0.25, 0.0, 0.0]));
        let rep = error_report(&p, &it).unwrap();
        assert!(rep.e0.is_none());
        assert_eq!(rep.kkt.sign, 0.25);
    }

    #[test]
    fn box_violation_shows_in_feasibility_residual() {
        let p = registry::p3();
        let (res, ok) = kkt_check(&p, &Iterate::primal(&p, v(&[1.9, 0.0])), 1e-8).unwrap();
        assert!(!ok);
        assert!((res.inequality - 0.1).abs() < 1e-12);
    }

    #[test]
    fn aug_lagrangian_by_hand() {
        let p = registry::p1();
        let (val, grad) = aug_lagrangian(&p, &v(&[0.0, 0.0]), &v(&[0.0]), 1.0).unwrap();
        assert_eq!(val, 1.0);
        assert_eq!(grad, v(&[-2.0, -2.0]));
        let x = v(&[0.2, -0.7]);
        let lam = v(&[0.3]);
        let it = Iterate::new(x.clone(), lam.clone(), DVector::zeros(4));
        let (_, g0) = aug_lagrangian(&p, &x, &lam, 0.0).unwrap();
        assert_eq!(g0, lagrangian_grad(&p, &it).unwrap());
    }

    #[test]
    fn penalized_lagrangian_at_reference() {
        let p = registry::p2();
        let z = v(&[0.4, 0.9]);
        let nu = v(&[0.7]);
        let (val, _) = penalized_lagrangian(&p, &z, &nu, 10.0, &z).unwrap();
        let ev = p.eval(&z).unwrap();
        assert_eq!(val, ev.f + 0.7 * ev.h[0]);
        let (val2, _) = penalized_lagrangian(&p, &z, &nu, 20.0, &z).unwrap();
        assert_eq!(val, val2);
    }
}
