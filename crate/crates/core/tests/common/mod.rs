#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use npasa::model::Problem;
use npasa::Polyhedron;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// A nonempty polyhedron built around a random interior anchor, together with
/// that anchor. Rows mix equalities, ranges and one-sided bounds.
pub fn random_polyhedron(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Polyhedron, DVector<f64>) {
    let anchor = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let ax = &a * &anchor;
    let mut bl = DVector::zeros(m);
    let mut bu = DVector::zeros(m);
    let mut equalities = 0;
    for i in 0..m {
        let roll: f64 = rng.gen();
        if roll < 0.15 && equalities + 1 < n {
            equalities += 1;
            bl[i] = ax[i];
            bu[i] = ax[i];
        } else if roll < 0.55 {
            bl[i] = ax[i] - rng.gen_range(0.0..1.0);
            bu[i] = ax[i] + rng.gen_range(0.0..1.0);
        } else if roll < 0.8 {
            bl[i] = ax[i] - rng.gen_range(0.0..1.0);
            bu[i] = f64::INFINITY;
        } else {
            bl[i] = f64::NEG_INFINITY;
            bu[i] = ax[i] + rng.gen_range(0.0..1.0);
        }
    }
    let lo = DVector::from_fn(n, |j, _| {
        if rng.gen_bool(0.7) { anchor[j] - rng.gen_range(0.0..1.5) } else { f64::NEG_INFINITY }
    });
    let hi = DVector::from_fn(n, |j, _| {
        if rng.gen_bool(0.7) { anchor[j] + rng.gen_range(0.0..1.5) } else { f64::INFINITY }
    });
    (Polyhedron::new(a, bl, bu, lo, hi).expect("anchor is feasible"), anchor)
}

/// Stacked residual `[bl - Ax; Ax - bu; lo - x; x - hi]` written out directly.
pub fn stacked_residual(poly: &Polyhedron, x: &DVector<f64>) -> DVector<f64> {
    let (m, n) = (poly.m(), poly.n());
    let ax = poly.a() * x;
    let mut r = DVector::zeros(2 * m + 2 * n);
    for i in 0..m {
        r[i] = poly.bl()[i] - ax[i];
        r[m + i] = ax[i] - poly.bu()[i];
    }
    for j in 0..n {
        r[2 * m + j] = poly.lo()[j] - x[j];
        r[2 * m + n + j] = x[j] - poly.hi()[j];
    }
    r
}

/// `grad r' mu` written out directly; infinite entries of `r` are skipped.
pub fn grad_r_t(poly: &Polyhedron, mu: &DVector<f64>) -> DVector<f64> {
    let (m, n) = (poly.m(), poly.n());
    let mut row_weights = DVector::zeros(m);
    for i in 0..m {
        row_weights[i] = mu[m + i] - mu[i];
    }
    let mut out = poly.a().tr_mul(&row_weights);
    for j in 0..n {
        out[j] += mu[2 * m + n + j] - mu[2 * m + j];
    }
    out
}

/// `sum min(-r_i, mu_i)^2` and `mu'r` over finite components.
pub fn complementarity_terms(r: &DVector<f64>, mu: &DVector<f64>) -> (f64, f64) {
    let mut phi = 0.0;
    let mut mur = 0.0;
    for i in 0..r.len() {
        if r[i].is_finite() {
            phi += (-r[i]).min(mu[i]).powi(2);
            mur += mu[i] * r[i];
        }
    }
    (phi, mur)
}

/// Newton's method on the KKT system with the given active stacked indices,
/// unknowns `(x, lambda, mu_active)`, Jacobian by central differences of the
/// residual. Returns the solution and the final residual norm.
pub fn kkt_newton(
    problem: &Problem,
    x0: &DVector<f64>,
    lambda0: &DVector<f64>,
    active: &[usize],
    mu0: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>, f64) {
    let (n, l, k) = (problem.n(), problem.l(), active.len());
    let poly = problem.polyhedron().clone();
    let dim = n + l + k;
    let residual = |z: &DVector<f64>| -> DVector<f64> {
        let x = z.rows(0, n).into_owned();
        let lambda = z.rows(n, l).into_owned();
        let (_, g) = problem.objective(&x).expect("objective");
        let (h, jac) = problem.constraints(&x).expect("constraints");
        let mut mu = DVector::zeros(poly.stacked_len());
        for (j, &i) in active.iter().enumerate() {
            mu[i] = z[n + l + j];
        }
        let stat = g + jac.tr_mul(&lambda) + grad_r_t(&poly, &mu);
        let r = stacked_residual(&poly, &x);
        let mut out = DVector::zeros(dim);
        out.rows_mut(0, n).copy_from(&stat);
        out.rows_mut(n, l).copy_from(&h);
        for (j, &i) in active.iter().enumerate() {
            out[n + l + j] = r[i];
        }
        out
    };
    let mut z = DVector::zeros(dim);
    z.rows_mut(0, n).copy_from(x0);
    z.rows_mut(n, l).copy_from(lambda0);
    for (j, &i) in active.iter().enumerate() {
        z[n + l + j] = mu0[i];
    }
    let mut f = residual(&z);
    for _ in 0..100 {
        if f.norm() < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            let hstep = 1e-6 * (1.0 + z[c].abs());
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[c] += hstep;
            zm[c] -= hstep;
            jac.set_column(c, &((residual(&zp) - residual(&zm)) / (2.0 * hstep)));
        }
        let step = jac.lu().solve(&f).expect("nonsingular KKT matrix");
        let z_new = &z - step;
        let f_new = residual(&z_new);
        if f_new.norm() >= f.norm() && f.norm() < 1e-12 {
            break;
        }
        z = z_new;
        f = f_new;
    }
    let mut mu = DVector::zeros(poly.stacked_len());
    for (j, &i) in active.iter().enumerate() {
        mu[i] = z[n + l + j];
    }
    (z.rows(0, n).into_owned(), z.rows(n, l).into_owned(), mu, f.norm())
}

/// Least-squares slope of `log10 y` against `log10 x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log10()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
