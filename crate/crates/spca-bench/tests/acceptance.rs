//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use irpg_core::driver::{irpg_run, irpg_run_observed, AccuracyPolicy, SolverConfig, Variant};
use irpg_core::manifold::{NormalCoords, StiefelPoint, TangentCoords};
use irpg_core::objective::{L1Norm, NonsmoothCost, ZeroCost};
use irpg_core::prox::{solve_ssn_global, SsnOptions, TangentProx};
use irpg_core::Mat;
use irpg_verify::{audit_certificates, audit_complexity, audit_descent, audit_error_bound, AuditReport};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spca_bench::bench::{build_instance, run_cell, summarize, CellResult, Instance};
use spca_bench::config::{Cell, LTilde0};
use spca_bench::data::NormalStream;

type Outcome = (bool, String);

fn smoke_instance(seed: u64) -> Instance {
    build_instance(256, 4, 20, 2.0, seed, LTilde0::FromData).unwrap()
}

fn random_point(n: usize, p: usize, seed: u64) -> StiefelPoint {
    let mut s = NormalStream::new(seed);
    StiefelPoint::from_polar(Mat::from_fn(n, p, |_, _| s.next_normal())).unwrap()
}

fn random_tangent(x: &StiefelPoint, rng: &mut ChaCha8Rng) -> Mat {
    let z = Mat::from_fn(x.n(), x.p(), |_, _| rng.random_range(-1.0..1.0));
    x.proj_tangent(&z).unwrap()
}

fn feasibility(x: &Mat) -> f64 {
    (x.transpose() * x - Mat::identity(x.ncols(), x.ncols())).norm()
}

fn tangency(x: &Mat, eta: &Mat) -> f64 {
    let xe = x.transpose() * eta;
    (&xe + xe.transpose()).norm()
}

fn criterion_tangency() -> Outcome {
    let mut worst_t: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    let mut checked = 0usize;
    let mut ok = true;
    let instances = [smoke_instance(1), build_instance(50, 3, 20, 2.0, 7, LTilde0::FromData).unwrap()];
    for inst in &instances {
        for variant in Variant::ALL {
            let mut config = SolverConfig::new(inst.l_tilde_0);
            config.max_outer = 300;
            let trace = irpg_run_observed(&inst.problem, inst.x0.clone(), &config, &AccuracyPolicy::new(variant), |obs| {
                let eta = &obs.solution.eta_hat;
                let t = tangency(obs.point.matrix(), eta);
                let f = feasibility(obs.point.matrix());
                ok &= t <= 1e-10 * (1.0 + eta.norm()) && f <= 1e-10;
                worst_t = worst_t.max(t / (1.0 + eta.norm()));
                worst_f = worst_f.max(f);
                checked += 1;
            })
            .unwrap();
            let f = feasibility(trace.final_point.matrix());
            ok &= f <= 1e-10;
            worst_f = worst_f.max(f);
        }
    }
    (ok && checked > 0, format!("{checked} directions, max tangency/(1+|eta|) {worst_t:.1e}, max feasibility {worst_f:.1e}"))
}

fn criterion_gradient() -> Outcome {
    let inst = build_instance(50, 3, 20, 2.0, 3, LTilde0::FromData).unwrap();
    let x = random_point(50, 3, 11);
    let f = |y: &StiefelPoint| inst.problem.smooth().eval(y.matrix());
    let grad = inst.problem.rgrad(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let xi = random_tangent(&x, &mut rng);
        let fd = (f(&x.retract(&(&xi * h)).unwrap()) - f(&x.retract(&(&xi * -h)).unwrap())) / (2.0 * h);
        let exact = grad.dot(&xi);
        worst = worst.max((fd - exact).abs() / exact.abs());
    }
    (worst <= 1e-5, format!("max relative error {worst:.2e} over 10 directions"))
}

fn criterion_prox_grid() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let lambda = rng.random_range(0.1..3.0);
        let z: f64 = rng.random_range(-5.0..5.0);
        let t: f64 = rng.random_range(0.01..2.0);
        let g = L1Norm::new(lambda).unwrap();
        let got = g.prox(&Mat::from_element(1, 1, z), t).unwrap()[(0, 0)];
        // grid of multiples of 1e-4 covering [min(0,z), max(0,z)] with margin
        let lo = ((z.min(0.0) - 0.01) / 1e-4).floor() as i64;
        let hi = ((z.max(0.0) + 0.01) / 1e-4).ceil() as i64;
        let objective = |v: f64| 0.5 * (v - z) * (v - z) + t * lambda * v.abs();
        let best = (lo..=hi)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
            .unwrap();
        worst = worst.max((got - best).abs());
    }
    (worst <= 1e-3, format!("max deviation from grid minimizer {worst:.1e} over 100 samples"))
}

fn criterion_linear_case() -> Outcome {
    let inst = build_instance(50, 3, 20, 0.0, 4, LTilde0::FromData).unwrap();
    let x = random_point(50, 3, 12);
    let l = inst.l_tilde_0;
    // model with the Euclidean gradient: the root is B^T egrad
    let egrad = inst.problem.smooth().egrad(x.matrix());
    let tp = TangentProx::new(&x, egrad.clone(), l, &ZeroCost).unwrap();
    let opts = SsnOptions { mu_cap: 0.0, ..Default::default() };
    let (root, iters) = tp.solve_to_tolerance(NormalCoords::zeros(x.normal_dim()), &opts, 1e-12).unwrap();
    let expect = x.normal_adjoint(&egrad).unwrap();
    let root_err = (&root.0 - &expect.0).norm() / (1.0 + expect.norm());
    // full solver with the Riemannian gradient
    let sol = solve_ssn_global(&inst.problem, &x, l, &f64::sqrt, &SsnOptions::default(), None).unwrap();
    let eta_err = (&sol.eta_hat + inst.problem.rgrad(&x) / l).norm();
    let ok = iters == 1 && root_err <= 1e-10 && eta_err <= 1e-10;
    (ok, format!("{iters} Newton step(s), multiplier error {root_err:.1e}, direction error {eta_err:.1e}"))
}

fn criterion_certificates() -> Outcome {
    let reports: Vec<(AuditReport, usize)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let inst = build_instance(50, 3, 20, 2.0, 100 + seed, LTilde0::FromData).unwrap();
            let mut report = AuditReport::default();
            let mut audited = 0;
            for variant in [Variant::G, Variant::L] {
                let policy = AccuracyPolicy::new(variant);
                let config = SolverConfig::new(inst.l_tilde_0);
                irpg_run_observed(&inst.problem, inst.x0.clone(), &config, &policy, |obs| {
                    let bound = |t: f64| match variant {
                        Variant::G => t.sqrt(),
                        _ => policy.schedule.at(obs.k).powi(2).min(100.0 * t * t),
                    };
                    report.extend(audit_certificates(obs.solution, &inst.problem, obs.point, obs.l_tilde, &bound));
                    audited += 1;
                })
                .unwrap();
            }
            (report, audited)
        })
        .collect();
    let solutions: usize = reports.iter().map(|r| r.1).sum();
    let mut all = AuditReport::default();
    for (r, _) in reports {
        all.extend(r);
    }
    (
        all.passed() && solutions > 0,
        format!("{solutions} certified solutions on 20 instances, {} checks, {} failures", all.records.len(), all.failure_count()),
    )
}

fn criterion_error_bound() -> Outcome {
    let reports: Vec<AuditReport> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let inst = build_instance(10, 2, 8, 0.5, 200 + seed, LTilde0::FromData).unwrap();
            let x = random_point(10, 2, 300 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let d = x.dim();
            let mut samples = vec![TangentCoords::zeros(d)];
            for scale in [1e-4, 1e-3, 1e-2, 1e-1, 3e-1] {
                let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                samples.push(TangentCoords(v.normalize() * scale));
            }
            audit_error_bound(&inst.problem, &x, inst.l_tilde_0, &samples)
        })
        .collect();
    let mut all = AuditReport::default();
    for r in reports {
        all.extend(r);
    }
    let checks = all.records.iter().filter(|r| r.check == "error-bound").count();
    let b = all
        .records
        .iter()
        .filter(|r| r.check == "residual-ratio")
        .map(|r| r.measured)
        .fold(0.0, f64::max);
    (
        all.passed() && checks == 120,
        format!("{checks} samples on 20 instances, {} violations, fitted b = {b:.3}", all.failure_count()),
    )
}

struct FixedRun {
    trace: irpg_core::driver::RunTrace,
    l_hat: f64,
}

fn fixed_run() -> FixedRun {
    let inst = smoke_instance(1);
    let l_hat = 2.0 * inst.sigma_max_sq;
    let config = SolverConfig::fixed(4.0 * inst.sigma_max_sq);
    let trace = irpg_run(&inst.problem, inst.x0, &config, &AccuracyPolicy::new(Variant::G)).unwrap();
    FixedRun { trace, l_hat }
}

fn criterion_descent(run: &FixedRun) -> Outcome {
    let report = audit_descent(&run.trace, run.l_hat);
    (
        report.passed() && !report.records.is_empty(),
        format!(
            "{} unit steps checked ({} skipped), {} violations, status {}",
            report.records.len(),
            report.skipped,
            report.failure_count(),
            run.trace.status
        ),
    )
}

fn criterion_complexity(run: &FixedRun) -> Outcome {
    let eps = 1e-2 * run.trace.rows.first().map_or(0.0, |r| r.eta_norm);
    let report = audit_complexity(&run.trace, run.l_hat, eps);
    let r = &report.records[0];
    (report.passed(), format!("first k = {} against bound {:.3e}", r.measured, r.bound))
}

fn paired_runs() -> Vec<CellResult> {
    (1..=10u64)
        .into_par_iter()
        .map(|seed| {
            let cell = Cell { n: 256, p: 4, m: 20, lambda: 2.0, seed };
            run_cell(cell, &Variant::ALL, 5000, 1e-3).unwrap()
        })
        .collect()
}

fn criterion_ordering(cells: &[CellResult]) -> Outcome {
    let rows: Vec<_> = cells.iter().flat_map(|c| c.rows.clone()).collect();
    let summary = summarize(&rows);
    let mean = |v| summary.get(256, v).map_or(f64::NAN, |e| e.mean_iterations);
    let kept = summary.get(256, Variant::G).map_or(0, |e| e.filtered_runs);
    let (g, u, l) = (mean(Variant::G), mean(Variant::U), mean(Variant::L));
    (g > u && u >= l, format!("mean iterations G {g:.1} > U {u:.1} >= L {l:.1} over {kept}/10 seeds"))
}

fn criterion_convergence(cells: &[CellResult]) -> Outcome {
    let good = cells
        .iter()
        .filter(|c| c.traces.iter().all(|t| t.status.is_success()) && c.max_difference < 1e-2)
        .count();
    let worst = cells.iter().map(|c| c.max_difference).fold(0.0, f64::max);
    (good >= 9, format!("{good}/10 seeds with all variants stopped and agreeing, max difference {worst:.1e}"))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {name:<24} {}  {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "tangency-feasibility", &criterion_tangency);
    report(2, "gradient-consistency", &criterion_gradient);
    report(3, "prox-oracle", &criterion_prox_grid);
    report(4, "linear-subproblem", &criterion_linear_case);
    report(5, "certificate-soundness", &criterion_certificates);
    report(6, "error-bound", &criterion_error_bound);
    // shared runs are computed inside the first criterion that needs them
    let run = OnceLock::new();
    report(7, "descent-inequality", &|| criterion_descent(run.get_or_init(fixed_run)));
    report(8, "complexity-bound", &|| criterion_complexity(run.get_or_init(fixed_run)));
    let cells = OnceLock::new();
    report(9, "variant-ordering", &|| criterion_ordering(cells.get_or_init(paired_runs)));
    report(10, "convergence", &|| criterion_convergence(cells.get_or_init(paired_runs)));
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
