//! Acceptance criteria. Runs without the libtest harness so the one
//! `PASS`/`FAIL` line per criterion is always printed; exits nonzero on failure.

mod common;

use std::panic;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use nalgebra::{DMatrix, DVector};
use npasa::kkt::{self, Iterate};
use npasa::local_step::{self, BranchReason, LsConfig};
use npasa::model::{Problem, QuadraticForm, QuadraticFunctions};
use npasa::pco;
use npasa::polyproj;
use npasa::registry;
use npasa::solver::{self, BranchTest, NpasaConfig, PhaseTag, SolveResult, TraceEvent};
use npasa::Polyhedron;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, title: &str, ok: bool, detail: &str) {
    println!("criterion {id} ({title}): {} - {detail}", if ok { "PASS" } else { "FAIL" });
}

/// Random point of the problem's polyhedron (registry polyhedra are boxes).
fn point_in(problem: &Problem, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let poly = problem.polyhedron();
    DVector::from_fn(problem.n(), |j, _| {
        let lo = poly.lo()[j];
        let hi = poly.hi()[j];
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => rng.gen_range(lo..=hi),
            (true, false) => lo + rng.gen_range(0.0..3.0),
            (false, true) => hi - rng.gen_range(0.0..3.0),
            (false, false) => rng.gen_range(-2.0..2.0),
        }
    })
}

fn random_mu(problem: &Problem, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let poly = problem.polyhedron();
    DVector::from_fn(poly.stacked_len(), |i, _| if poly.is_finite(i) { rng.gen_range(0.0..3.0) } else { 0.0 })
}

fn criterion_1_estimator_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let problems = registry::all();
    let mut worst_identity = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut order_violations = 0;
    let mut off_domain = 0;
    for s in 0..1000 {
        let p = &problems[s % problems.len()];
        let x = point_in(p, &mut rng);
        let lambda = DVector::from_fn(p.l(), |_, _| rng.gen_range(-3.0..3.0));
        let mu = random_mu(p, &mut rng);
        let rep = kkt::error_report(p, &Iterate::new(x.clone(), lambda.clone(), mu.clone())).unwrap();
        let (Some(e0), Some(em0)) = (rep.e0, rep.em0) else {
            off_domain += 1;
            continue;
        };
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        worst_identity = worst_identity.max(rel(e0 * e0, em0 + rep.ec)).max(rel(rep.e1 * rep.e1, rep.em1 + rep.ec));
        // Direct evaluation of the estimators from the definitions.
        let ev = p.eval(&x).unwrap();
        let poly = p.polyhedron();
        let grad_l = &ev.grad_f + ev.jac_h.tr_mul(&lambda) + grad_r_t(poly, &mu);
        let r = stacked_residual(poly, &x);
        let (phi, mur) = complementarity_terms(&r, &mu);
        let em0_direct = grad_l.norm_squared() - mur;
        let em1_direct = grad_l.norm_squared() + phi;
        let ec_direct = ev.h.norm_squared();
        worst_oracle = worst_oracle
            .max(rel(em0, em0_direct))
            .max(rel(rep.em1, em1_direct))
            .max(rel(rep.ec, ec_direct).min((rep.ec - ec_direct).abs()));
        if rep.e1 > e0 * (1.0 + 1e-12) || rep.em1 > em0 * (1.0 + 1e-12) {
            order_violations += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst_identity <= 1e-12 && worst_oracle <= 1e-12 && order_violations == 0 && off_domain == 0 && secs < 5.0;
    report(
        1,
        "estimator identities",
        ok,
        &format!(
            "identity rel err {worst_identity:.1e}, vs direct {worst_oracle:.1e}, order violations {order_violations}, off-domain {off_domain}, {secs:.2}s"
        ),
    );
    assert!(ok);
}

/// Random quadratic objective and equality constraints over a random polyhedron.
fn random_aug_lag_instance(rng: &mut ChaCha8Rng) -> (Problem, DVector<f64>, DVector<f64>, f64) {
    let n = rng.gen_range(1..=5);
    let m = rng.gen_range(0..=(4.min(10 - n)));
    let (poly, anchor) = random_polyhedron(rng, n, m);
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = b.transpose() * &b;
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let l = rng.gen_range(0..=2);
    let eqs = (0..l)
        .map(|_| {
            let qh = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5));
            let ch = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            QuadraticForm::new(qh, ch, rng.gen_range(-1.0..1.0)).unwrap()
        })
        .collect();
    let f = QuadraticFunctions { objective: QuadraticForm::new(q, c, 0.0).unwrap(), equalities: eqs };
    let problem = Problem::from_quadratic("random", f, poly).unwrap();
    // A point of the polyhedron: the projection of a perturbed anchor.
    let trial = &anchor + DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let x = polyproj::project_point(problem.polyhedron(), &trial).unwrap();
    let lambda_bar = DVector::from_fn(l, |_, _| rng.gen_range(-2.0..2.0));
    let q = rng.gen_range(1.0..20.0);
    (problem, x, lambda_bar, q)
}

fn criterion_2_em0_projection_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut sandwich_bad = 0;
    for _ in 0..200 {
        let (p, x, lambda_bar, q) = random_aug_lag_instance(&mut rng);
        let poly = p.polyhedron();
        let (_, g) = kkt::aug_lagrangian(&p, &x, &lambda_bar, q).unwrap();
        let r = stacked_residual(poly, &x);
        for alpha in [0.25, 0.5, 1.0] {
            let (value, proj) = pco::em0_via_projection(poly, &x, &g, alpha).unwrap();
            let mu = &proj.mu_recon / alpha;
            let grad_l = &g + grad_r_t(poly, &mu);
            let (_, mur) = complementarity_terms(&r, &mu);
            let explicit = grad_l.norm_squared() - mur;
            worst = worst.max((value - explicit).abs());
            if alpha == 1.0 {
                let e_pasa = (&proj.y_star - &x).norm();
                let tol = 1e-9 * (1.0 + value);
                if e_pasa * e_pasa > value + tol || value > g.norm() * e_pasa + tol {
                    sandwich_bad += 1;
                }
            }
        }
    }
    let ok = worst <= 1e-8 && sandwich_bad == 0;
    report(2, "Em0 projection identity", ok, &format!("max abs diff {worst:.1e}, sandwich violations {sandwich_bad}"));
    assert!(ok);
}

fn criterion_3_step_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = [0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 2.0, 5.0];
    let mut slope_bad = 0;
    let mut em0_bad = 0;
    for _ in 0..200 {
        let (p, x, lambda_bar, q) = random_aug_lag_instance(&mut rng);
        let poly = p.polyhedron();
        let (_, g) = kkt::aug_lagrangian(&p, &x, &lambda_bar, q).unwrap();
        let vals: Vec<(f64, f64, f64)> = grid
            .iter()
            .map(|&a| {
                let (em0, proj) = pco::em0_via_projection(poly, &x, &g, a).unwrap();
                (a, -g.dot(&(&proj.y_star - &x)), em0)
            })
            .collect();
        for (i, &(a, ga, ea)) in vals.iter().enumerate() {
            for &(b, gb, eb) in &vals[i..] {
                if ga > gb + 1e-9 {
                    slope_bad += 1;
                }
                if a <= b && b <= 1.0 && eb > ea + 1e-9 {
                    em0_bad += 1;
                }
            }
        }
    }
    let ok = slope_bad == 0 && em0_bad == 0;
    report(3, "step monotonicity", ok, &format!("-g'd violations {slope_bad}, Em0 violations {em0_bad}"));
    assert!(ok);
}

fn criterion_4_projection_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_oracle = 0.0f64;
    let mut worst_kkt = 0.0f64;
    let mut worst_idem = 0.0f64;
    let mut expansive = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(0..=4);
        let (poly, _) = random_polyhedron(&mut rng, n, m);
        let xb = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let zb = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let res = polyproj::project(&poly, &xb).unwrap();
        let oracle = polyproj::oracle_project(&poly, &xb).unwrap();
        worst_oracle = worst_oracle.max((&res.y_star - &oracle).amax());
        // Stationarity, feasibility, sign and complementarity from the definitions.
        let y = &res.y_star;
        let mu = &res.mu_recon;
        let r = stacked_residual(&poly, y);
        let stat = (y - &xb + grad_r_t(&poly, mu)).amax();
        let mut feas = 0.0f64;
        let mut sign = 0.0f64;
        let mut comp = 0.0f64;
        for i in 0..r.len() {
            if r[i].is_finite() {
                feas = feas.max(r[i]);
                comp = comp.max((mu[i] * r[i]).abs());
            } else {
                sign = sign.max(mu[i].abs());
            }
            sign = sign.max(-mu[i]);
        }
        worst_kkt = worst_kkt.max(stat).max(feas).max(sign).max(comp);
        let again = polyproj::project_point(&poly, y).unwrap();
        worst_idem = worst_idem.max((&again - y).amax());
        let pz = polyproj::project_point(&poly, &zb).unwrap();
        if (y - &pz).norm() > (&xb - &zb).norm() + 1e-10 {
            expansive += 1;
        }
    }
    let ok = worst_oracle <= 1e-8 && worst_kkt <= 1e-8 && worst_idem <= 1e-10 && expansive == 0;
    report(
        4,
        "projection correctness",
        ok,
        &format!(
            "oracle diff {worst_oracle:.1e}, multiplier residual {worst_kkt:.1e}, idempotence {worst_idem:.1e}, expansive pairs {expansive}"
        ),
    );
    assert!(ok);
}

/// `w_inf`: closest point to `w_bar` among the minimizers of
/// `|M(w - w_bar) - c|` over `{w : w_1 >= lo_1}`.
fn two_stage_oracle(mm: &DMatrix<f64>, c: &DVector<f64>, w_bar: &DVector<f64>, lo1: f64) -> DVector<f64> {
    // Stage one over the two candidate faces: bound active or inactive.
    let lsq = |cols: &[usize], fixed: &DVector<f64>| -> DVector<f64> {
        let sub = DMatrix::from_fn(mm.nrows(), cols.len(), |i, j| mm[(i, cols[j])]);
        let rhs = c - mm * (fixed - w_bar);
        let sol = (sub.transpose() * &sub).cholesky().expect("full column rank").solve(&sub.tr_mul(&rhs));
        let mut w = fixed.clone();
        for (j, &col) in cols.iter().enumerate() {
            w[col] += sol[j];
        }
        w
    };
    let n = w_bar.len();
    let mut candidates = Vec::new();
    let free = lsq(&(0..n).collect::<Vec<_>>(), w_bar);
    if free[0] >= lo1 {
        candidates.push(free);
    }
    let mut pinned = w_bar.clone();
    pinned[0] = lo1;
    candidates.push(lsq(&(1..n).collect::<Vec<_>>(), &pinned));
    let resid = |w: &DVector<f64>| (mm * (w - w_bar) - c).norm();
    let w_s = candidates.into_iter().min_by(|a, b| resid(a).total_cmp(&resid(b))).unwrap();
    // Stage two: project w_bar onto {w_1 >= lo1, M w = M w_s}.
    let target = mm * &w_s;
    let mut lo = DVector::from_element(n, f64::NEG_INFINITY);
    lo[0] = lo1;
    let poly = Polyhedron::new(mm.clone(), target.clone(), target, lo, DVector::from_element(n, f64::INFINITY)).unwrap();
    polyproj::oracle_project(&poly, w_bar).unwrap()
}

fn criterion_5_feasibility_detection_rate() {
    // Circle constraint linearized at (2, 0.5) on {x1 >= 2}, plus a second
    // row that keeps the linearization inconsistent.
    let w_bar = v(&[2.0, 0.5]);
    let mm = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 0.0, 1.0]);
    let c = v(&[-3.25, 0.7]);
    let poly = Polyhedron::boxed(v(&[2.0, f64::NEG_INFINITY]), DVector::from_element(2, f64::INFINITY)).unwrap();
    let w_inf = two_stage_oracle(&mm, &c, &w_bar, 2.0);
    let ps = [1e2, 1e3, 1e4, 1e5, 1e6];
    let errs: Vec<f64> = ps
        .iter()
        .map(|&p| (polyproj::project_with_slack(&mm, &c, &w_bar, p, &poly).unwrap().w_p - &w_inf).norm())
        .collect();
    let slope = loglog_slope(&ps, &errs);
    let ok = (-1.3..=-0.7).contains(&slope);
    report(5, "feasibility detection rate", ok, &format!("slope {slope:.3}, errors {:?}", errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()));
    assert!(ok);
}

fn criterion_6_constraint_step_contract() {
    let cfg = LsConfig::default();
    let cases: Vec<(Problem, Vec<[f64; 2]>)> = vec![
        (registry::p1(), vec![[0.0, 0.0], [3.0, -1.0], [-2.0, 5.0]]),
        (registry::p2(), vec![[1.2, 1.2], [3.0, 0.1], [0.5, 0.2], [0.0, 2.5]]),
        (registry::p4(), vec![[0.0, 0.0], [2.0, 2.0], [-1.5, 0.3]]),
    ];
    let mut armijo_bad = 0;
    let mut unfinished = Vec::new();
    let mut max_iters = 0;
    for (p, starts) in &cases {
        for s in starts {
            let x = v(s);
            // theta * target = 1e-20, i.e. |h| <= 1e-10.
            let cs = local_step::constraint_step(p, &x, 1e-20 / cfg.theta, &cfg).unwrap();
            for r in &cs.records {
                if r.h_after > (1.0 - cfg.tau * r.alpha * r.step) * r.h_before {
                    armijo_bad += 1;
                }
            }
            max_iters = max_iters.max(cs.iterations);
            let done = cs.w.as_ref().map(|w| p.constraints(w).unwrap().0.norm());
            if !matches!(done, Some(h) if h <= 1e-10) || cs.iterations > 30 {
                unfinished.push(format!("{} {s:?}", p.name));
            }
        }
    }
    let p3 = registry::p3();
    let cs = local_step::constraint_step(&p3, &v(&[2.0, 0.0]), 1e-12, &cfg).unwrap();
    let p3_ok = cs.w.is_none()
        && cs.branch == BranchReason::ConstraintPerturbation
        && cs.rejected_alpha.is_some_and(|a| a < cfg.alpha)
        && cs.iterations < 5;
    let ok = armijo_bad == 0 && unfinished.is_empty() && p3_ok;
    report(
        6,
        "constraint step contract",
        ok,
        &format!(
            "decrease violations {armijo_bad}, unfinished {unfinished:?}, max iterations {max_iters}, p3 branch at iteration {} with alpha {:?}",
            cs.iterations + 1,
            cs.rejected_alpha
        ),
    );
    assert!(ok);
}

/// Reference KKT point near the solver output, from Newton's method on the
/// KKT system at the converged active set.
fn reference_kkt(p: &Problem, res: &SolveResult) -> (DVector<f64>, f64, bool) {
    let x = &res.iterate.x;
    let r = stacked_residual(p.polyhedron(), x);
    let active: Vec<usize> = (0..r.len()).filter(|&i| r[i].is_finite() && r[i].abs() <= 1e-6).collect();
    let (xs, _, mu, resid) = kkt_newton(p, x, &res.iterate.lambda, &active, &res.iterate.mu);
    let signs_ok = active.iter().all(|&i| mu[i] >= -1e-10);
    (xs, resid, signs_ok)
}

fn starts() -> [[f64; 2]; 5] {
    [[0.0, 0.0], [3.0, -1.0], [-2.0, 2.5], [0.3, 1.7], [10.0, 10.0]]
}

fn criterion_7_end_to_end() {
    let cfg = NpasaConfig::default();
    let mut failures = Vec::new();
    let mut worst_e1 = 0.0f64;
    let mut worst_dx = 0.0f64;
    let mut worst_time = 0.0f64;
    let mut contraction_bad = 0;
    for p in [registry::p1(), registry::p2(), registry::p4()] {
        for s in starts() {
            let t = Instant::now();
            let res = solver::solve(&p, &v(&s), &DVector::zeros(p.l()), &DVector::zeros(p.polyhedron().stacked_len()), &cfg)
                .unwrap();
            let secs = t.elapsed().as_secs_f64();
            worst_time = worst_time.max(secs);
            worst_e1 = worst_e1.max(res.report.e1);
            let dx = if p.name == "p1" {
                (&res.iterate.x - v(&[0.5, 0.5])).norm()
            } else {
                let (xs, resid, signs_ok) = reference_kkt(&p, &res);
                if resid > 1e-10 || !signs_ok {
                    failures.push(format!("{} {s:?}: reference solve residual {resid:.1e}", p.name));
                }
                (&res.iterate.x - xs).norm()
            };
            worst_dx = worst_dx.max(dx);
            for r in res.trace.iter().filter(|r| r.event == TraceEvent::LocalStepAccepted) {
                if r.e1 > cfg.theta * r.e1_prev.unwrap() {
                    contraction_bad += 1;
                }
            }
            if !res.converged || res.report.e1 > 1e-8 || dx > 1e-6 || secs >= 2.0 {
                failures.push(format!("{} {s:?}: E1 {:.1e}, dx {dx:.1e}, {secs:.2}s", p.name, res.report.e1));
            }
        }
    }
    let ok = failures.is_empty() && contraction_bad == 0;
    report(
        7,
        "end-to-end convergence",
        ok,
        &format!(
            "15 runs, max E1 {worst_e1:.1e}, max distance {worst_dx:.1e}, max time {worst_time:.3}s, contraction violations {contraction_bad}, failures {failures:?}"
        ),
    );
    assert!(ok);
}

fn criterion_8_error_bound() {
    let p = registry::p1();
    let kkt = p.known_kkt.clone().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let radii = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let mut worst_spread = 0.0f64;
    let mut global = (f64::INFINITY, 0.0f64);
    for _ in 0..20 {
        let dir = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)).normalize();
        let ratios: Vec<f64> = radii
            .iter()
            .map(|&t| {
                let x = &kkt.x + dir.rows(0, 2) * t;
                let lambda = &kkt.lambda + dir.rows(2, 1) * t;
                let e1 = kkt::error_report(&p, &Iterate::new(x.clone(), lambda.clone(), kkt.mu.clone())).unwrap().e1;
                ((&x - &kkt.x).norm() + (&lambda - &kkt.lambda).norm()) / e1
            })
            .collect();
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        worst_spread = worst_spread.max(hi / lo);
        global = (global.0.min(lo), global.1.max(hi));
    }
    let ok = worst_spread <= 10.0 && global.1.is_finite();
    report(
        8,
        "error bound",
        ok,
        &format!("ratio range [{:.3}, {:.3}], worst per-direction spread {worst_spread:.3}", global.0, global.1),
    );
    assert!(ok);
}

fn bookkeeping_issues(res: &SolveResult, cfg: &NpasaConfig) -> Vec<String> {
    let mut issues = Vec::new();
    let mut last_q: Option<f64> = None;
    let mut last_e = f64::INFINITY;
    let mut prev_ec: Option<f64> = None;
    for (idx, r) in res.trace.iter().enumerate() {
        if r.e_best > last_e {
            issues.push(format!("record {idx}: e_k increased"));
        }
        last_e = r.e_best;
        if r.event == TraceEvent::EnterPhaseOne {
            let base = last_q.unwrap_or(cfg.q0);
            if r.q < cfg.phi * base {
                issues.push(format!("record {idx}: q {} < phi * {base}", r.q));
            }
            last_q = Some(r.q);
        }
        if let Some(t) = r.transition {
            if !t.holds() {
                issues.push(format!("record {idx}: logged operands do not satisfy the branch test"));
            }
            match (t.test, t.to) {
                (BranchTest::Em1BelowThetaEcPrev, PhaseTag::Two) => {
                    let expected = prev_ec.map(|ec| cfg.theta * ec);
                    if t.lhs != r.em1 || Some(t.rhs) != expected {
                        issues.push(format!("record {idx}: phase-one branch operands inconsistent"));
                    }
                }
                (BranchTest::E1AboveThetaE1, PhaseTag::One) => {
                    if Some(t.lhs) != r.e1_candidate || Some(t.rhs) != r.e1_prev.map(|e| cfg.theta * e) {
                        issues.push(format!("record {idx}: phase-two branch operands inconsistent"));
                    }
                }
                _ => issues.push(format!("record {idx}: transition test does not match its direction")),
            }
        }
        // A phase change without a logged transition is an error.
        if let Some(next) = res.trace.get(idx + 1) {
            let switches = next.phase != r.phase && next.event != TraceEvent::EnterPhaseOne
                || (next.event == TraceEvent::EnterPhaseOne && r.event != TraceEvent::Start && r.transition.is_none());
            if switches && r.transition.is_none() {
                issues.push(format!("record {idx}: unlogged phase change"));
            }
        }
        if matches!(r.event, TraceEvent::Start | TraceEvent::GlobalStep | TraceEvent::LocalStepAccepted) {
            prev_ec = Some(r.ec);
        }
    }
    issues
}

fn criterion_9_penalty_and_branch_bookkeeping() {
    let cfg = NpasaConfig::default();
    let mut traces = 0;
    let mut transitions = 0;
    let mut phase_one_entries = 0;
    let mut issues = Vec::new();
    let mut runs: Vec<(Problem, NpasaConfig)> = Vec::new();
    for p in [registry::p1(), registry::p2(), registry::p4()] {
        runs.push((p, cfg.clone()));
    }
    runs.push((registry::p3(), NpasaConfig { max_outer_iters: 12, ..cfg.clone() }));
    for (p, c) in &runs {
        for s in starts() {
            let res =
                solver::solve(p, &v(&s), &DVector::zeros(p.l()), &DVector::zeros(p.polyhedron().stacked_len()), c).unwrap();
            traces += 1;
            transitions += res.trace.iter().filter(|r| r.transition.is_some()).count();
            phase_one_entries += res.trace.iter().filter(|r| r.event == TraceEvent::EnterPhaseOne).count();
            issues.extend(bookkeeping_issues(&res, c).into_iter().map(|i| format!("{} {s:?}: {i}", p.name)));
        }
    }
    let ok = issues.is_empty() && transitions > 0;
    report(
        9,
        "penalty and branch bookkeeping",
        ok,
        &format!("{traces} traces, {transitions} transitions, {phase_one_entries} phase-one entries, issues {issues:?}"),
    );
    assert!(ok);
}

fn main() -> ExitCode {
    let criteria: [fn(); 9] = [
        criterion_1_estimator_identities,
        criterion_2_em0_projection_identity,
        criterion_3_step_monotonicity,
        criterion_4_projection_correctness,
        criterion_5_feasibility_detection_rate,
        criterion_6_constraint_step_contract,
        criterion_7_end_to_end,
        criterion_8_error_bound,
        criterion_9_penalty_and_branch_bookkeeping,
    ];
    let failed = criteria.iter().filter(|c| panic::catch_unwind(**c).is_err()).count();
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
