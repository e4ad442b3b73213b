//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! failure status if any criterion fails.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use twogrid_core::assembly::Assembler;
use twogrid_core::config::{StudyPlan, TimeStepRule};
use twogrid_core::mms::{convergence_rate, Example, ManufacturedCase};
use twogrid_core::space::{FeSpace, PressureField, VelocityField};
use twogrid_core::study::{run_benchmark, run_study, ConvergenceReport};
use twogrid_core::twogrid::{FlowState, FreeDecay, Level, SimulationConfig, TwoGridSolver};
use twogrid_core::Execution;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn ladder(example: Example) -> StudyPlan {
    StudyPlan { example, levels: vec![4, 8, 16, 32], krule: TimeStepRule::H2, t_final: 1.0, ..StudyPlan::default() }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn print_report(report: &ConvergenceReport) {
    for line in report.table().lines() {
        println!("    {line}");
    }
}

fn rates_check(report: &ConvergenceReport, check: impl Fn([f64; 3]) -> bool, what: &str) -> Outcome {
    print_report(report);
    match report.last_rates() {
        Some(r) => outcome(check(r), format!("last rates L2(u)={:.4} H1(u)={:.4} L2(p)={:.4}; need {what}", r[0], r[1], r[2])),
        None => outcome(false, "no rates computed"),
    }
}

fn criterion_1(report: &ConvergenceReport) -> Outcome {
    rates_check(
        report,
        |r| r[0] >= 1.85 && (0.9..=1.3).contains(&r[1]) && (0.9..=1.3).contains(&r[2]),
        "L2(u) >= 1.85, H1(u) in [0.9, 1.3], L2(p) in [0.9, 1.3]",
    )
}

fn criterion_2(report: &ConvergenceReport) -> Outcome {
    rates_check(report, |r| r[0] >= 1.8 && r[1] >= 0.95 && r[2] >= 0.95, "L2(u) >= 1.8, H1(u) >= 0.95, L2(p) >= 0.95")
}

fn criterion_3() -> Outcome {
    // (e_i, e_{i+1}, h_i, h_{i+1}, printed rate)
    let published = [
        (0.009085, 0.002651, 0.25, 0.125, 1.777183),
        (0.002651, 0.000713, 0.125, 0.0625, 1.893768),
        (0.139927, 0.075081, 0.25, 0.125, 0.898156),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (e0, e1, h0, h1, printed) in published {
        let r = convergence_rate(e0, e1, h0, h1);
        let ok = (r - printed).abs() < 5e-5;
        pass &= ok;
        parts.push(format!("{r:.6} vs {printed} {}", if ok { "ok" } else { "MISMATCH" }));
    }
    outcome(pass, parts.join("; "))
}

fn random_field(space: &std::sync::Arc<FeSpace>, rng: &mut StdRng) -> VelocityField {
    let n = space.dofs().n_velocity_dofs;
    VelocityField::from_coeffs(space, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let coarse = FeSpace::structured(3, Execution::Parallel).unwrap();
    for n in [2usize, 4, 8] {
        let space = FeSpace::structured(n, Execution::Parallel).unwrap();
        let asm = Assembler::new(&space);
        for k in 0..40 {
            // every other advecting field lives on an unrelated mesh
            let v = if k % 2 == 0 { random_field(&space, &mut rng) } else { random_field(&coarse, &mut rng) };
            let w = random_field(&space, &mut rng);
            let t = asm.trilinear_vector(&v, &w).unwrap();
            let b: f64 = t.iter().zip(w.coeffs()).map(|(a, c)| a * c).sum();
            let scale: f64 = t.iter().zip(w.coeffs()).map(|(a, c)| (a * c).abs()).sum();
            worst = worst.max(b.abs() / scale);

            let n1 = asm.trilinear_matrices(&v).unwrap().n1;
            let nw = n1.mul_vec(w.coeffs());
            let bm: f64 = nw.iter().zip(w.coeffs()).map(|(a, c)| a * c).sum();
            let scale_m: f64 = nw.iter().zip(w.coeffs()).map(|(a, c)| (a * c).abs()).sum();
            worst = worst.max(bm.abs() / scale_m);
            count += 1;
        }
    }
    outcome(worst <= 1e-12, format!("{count} field pairs, worst relative |b(v,w,w)| = {worst:.2e} (limit 1e-12)"))
}

// Exact solutions written out independently of the library.
fn oracle_velocity(example: Example, t: f64, x: f64, y: f64) -> [f64; 2] {
    use std::f64::consts::PI;
    match example {
        Example::Polynomial => [
            2.0 * t.exp() * x * x * (x - 1.0).powi(2) * y * (y - 1.0) * (2.0 * y - 1.0),
            -2.0 * t.exp() * x * (x - 1.0) * (2.0 * x - 1.0) * y * y * (y - 1.0).powi(2),
        ],
        Example::Trigonometric => {
            let s = t * (-t * t).exp();
            [
                s * (3.0 * PI * x).sin().powi(2) * (6.0 * PI * y).sin(),
                -s * (3.0 * PI * y).sin().powi(2) * (6.0 * PI * x).sin(),
            ]
        }
    }
}

fn oracle_pressure(example: Example, t: f64, x: f64, y: f64) -> f64 {
    use std::f64::consts::PI;
    match example {
        Example::Polynomial => y * t.exp(),
        Example::Trigonometric => t * (-t).exp() * (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
    }
}

fn criterion_5() -> Outcome {
    let d = 1e-5;
    let mut rng = StdRng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for example in [Example::Polynomial, Example::Trigonometric] {
        let nu = 1.0;
        let case = ManufacturedCase::new(example, nu);
        for _ in 0..200 {
            let t = rng.random_range(0.0..1.0);
            let (x, y) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let u = oracle_velocity(example, t, x, y);
            // first derivatives of the oracle
            let dx = |f: &dyn Fn(f64, f64) -> f64| (f(x + d, y) - f(x - d, y)) / (2.0 * d);
            let dy = |f: &dyn Fn(f64, f64) -> f64| (f(x, y + d) - f(x, y - d)) / (2.0 * d);
            let mut fd = [0.0; 2];
            let mut scale: f64 = 0.0;
            for i in 0..2 {
                let comp = |a: f64, b: f64| oracle_velocity(example, t, a, b)[i];
                let ut = (oracle_velocity(example, t + d, x, y)[i] - oracle_velocity(example, t - d, x, y)[i]) / (2.0 * d);
                let grad = [dx(&comp), dy(&comp)];
                // Laplacian from differences of the library gradient, itself
                // checked against the oracle just below
                let g = |a: f64, b: f64, j: usize| case.fields(t, [a, b]).gradient[i][j];
                let lap = (g(x + d, y, 0) - g(x - d, y, 0)) / (2.0 * d) + (g(x, y + d, 1) - g(x, y - d, 1)) / (2.0 * d);
                let conv = u[0] * grad[0] + u[1] * grad[1];
                let p = |a: f64, b: f64| oracle_pressure(example, t, a, b);
                let gp = if i == 0 { dx(&p) } else { dy(&p) };
                fd[i] = ut - nu * lap + conv + gp;
                scale = scale.max(ut.abs()).max((nu * lap).abs()).max(conv.abs()).max(gp.abs());

                let lib_grad = case.fields(t, [x, y]).gradient[i];
                let gscale = 1e-300 + grad[0].abs().max(grad[1].abs()).max(u[i].abs());
                worst = worst.max((lib_grad[0] - grad[0]).abs().max((lib_grad[1] - grad[1]).abs()) / gscale);
            }
            let f = case.forcing(t, [x, y]);
            worst = worst.max((f[0] - fd[0]).abs().max((f[1] - fd[1]).abs()) / scale);
        }
    }
    outcome(worst <= 1e-6, format!("400 samples, worst relative deviation {worst:.2e} (limit 1e-6)"))
}

fn criterion_6() -> Outcome {
    let level = Level::new(4, Execution::Parallel).unwrap();
    let space = level.space().clone();
    let interior = space.dofs().interior_velocity_dofs.clone();
    let (dt, nu) = (1.0 / 16.0, 1.0);
    let mut rng = StdRng::seed_from_u64(6);
    let interior_field = |rng: &mut StdRng| {
        let vals: Vec<f64> = (0..interior.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        VelocityField::from_interior(&space, &vals).unwrap()
    };
    let load = vec![0.0; space.dofs().n_velocity_dofs];
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let u = interior_field(&mut rng);
        let prev = interior_field(&mut rng);
        let dir = interior_field(&mut rng);
        let p = PressureField::from_coeffs(&space, (0..space.mesh().n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let eps = 1e-6;
        let at = |s: f64| {
            let coeffs: Vec<f64> = u.coeffs().iter().zip(dir.coeffs()).map(|(a, b)| a + s * b).collect();
            let state = FlowState { velocity: VelocityField::from_coeffs(&space, coeffs).unwrap(), pressure: p.clone() };
            level.momentum_residual(&prev, &state, &load, dt, nu).unwrap()
        };
        let (rp, rm) = (at(eps), at(-eps));
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let jd = level.jacobian(&u, dt, nu).unwrap().mul_vec(dir.coeffs());
        let err: Vec<f64> = fd.iter().zip(&jd).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&err) / norm(&jd));
    }
    outcome(worst <= 1e-6, format!("10 random states at n_H = 4, worst relative error {worst:.2e} (limit 1e-6)"))
}

fn criterion_7(reports: &[&ConvergenceReport]) -> Outcome {
    let mut div: f64 = 0.0;
    let mut mean: f64 = 0.0;
    let mut runs = 0;
    for r in reports.iter().flat_map(|r| r.rows.iter()) {
        div = div.max(r.max_divergence);
        mean = mean.max(r.max_pressure_mean);
        runs += 1;
    }
    outcome(
        div <= 1e-9 && mean <= 1e-12,
        format!("{runs} study runs: max ||B u|| = {div:.2e} (limit 1e-9), max |mean p| = {mean:.2e} (limit 1e-12)"),
    )
}

fn criterion_8() -> Outcome {
    let case = ManufacturedCase::new(Example::Polynomial, 1.0);
    let solver = TwoGridSolver::new(SimulationConfig::new(4, 4, 1.0 / 16.0, 0.5)).unwrap();
    let mut worst: f64 = 0.0;
    let mut substituted: f64 = 0.0;
    let mut prev_coarse = solver.initial_state(&case).unwrap().coarse.unwrap();
    let run = solver.run_with(&case, |s, _| {
        let coarse = s.coarse.as_ref().unwrap();
        for other in [s.star.as_ref().unwrap(), &s.fine] {
            worst = worst.max(max_diff(coarse.velocity.coeffs(), other.velocity.coeffs()));
            worst = worst.max(max_diff(coarse.pressure.coeffs(), other.pressure.coeffs()));
        }
        // substitute the coarse solution for the previous fine levels and for U^n
        let load = solver.fine().load(&case, s.t);
        let (star, lin) = solver.step2_fine(&prev_coarse.velocity, &coarse.velocity, &load).unwrap();
        let fine = solver.step3_fine(&lin, &prev_coarse.velocity, &coarse.velocity, &load).unwrap();
        substituted = substituted.max(max_diff(star.velocity.coeffs(), coarse.velocity.coeffs()));
        substituted = substituted.max(max_diff(fine.velocity.coeffs(), coarse.velocity.coeffs()));
        prev_coarse = coarse.clone();
    });
    if let Err(e) = run {
        return outcome(false, format!("run failed: {e}"));
    }
    let w = worst.max(substituted);
    outcome(w <= 1e-9, format!("n_h = n_H = 4, 8 steps: max deviation along run {worst:.2e}, with substitution {substituted:.2e} (limit 1e-9)"))
}

fn criterion_9() -> Outcome {
    let plan = StudyPlan { levels: vec![32], t_final: 0.25, ..ladder(Example::Polynomial) };
    let report = match run_benchmark(&plan) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("benchmark failed: {e}")),
    };
    for line in report.table().lines() {
        println!("    {line}");
    }
    let r = &report.rows[0];
    let ratio = r.two_grid_errors.l2_velocity / r.one_grid_errors.l2_velocity;
    let errors_ok = (0.2..=5.0).contains(&ratio);
    let fact_ok = r.two_grid_factorizations == r.steps && r.one_grid_factorizations >= r.steps;
    let timing_applies = r.one_grid_newton_mean >= 2.0;
    let timing_ok = !timing_applies || r.two_grid_seconds < r.one_grid_seconds;
    outcome(
        errors_ok && fact_ok && timing_ok,
        format!(
            "n_H={} n_h=32, {} steps: L2 ratio two-grid/one-grid = {ratio:.4}; fine factorizations {} vs {} \
             (Newton mean {:.2}); wall {:.2}s vs {:.2}s{}",
            r.spec.n_coarse,
            r.steps,
            r.two_grid_factorizations,
            r.one_grid_factorizations,
            r.one_grid_newton_mean,
            r.two_grid_seconds,
            r.one_grid_seconds,
            if timing_applies { "" } else { " (timing clause not triggered)" }
        ),
    )
}

fn criterion_10() -> Outcome {
    let initial = |p: [f64; 2]| {
        let g = |z: f64| z * z * (1.0 - z) * (1.0 - z);
        let dg = |z: f64| 2.0 * z * (1.0 - z) * (1.0 - 2.0 * z);
        [200.0 * g(p[0]) * dg(p[1]), -200.0 * dg(p[0]) * g(p[1])]
    };
    let solver = TwoGridSolver::new(SimulationConfig::new(4, 16, 0.01, 1.0)).unwrap();
    let coarse = solver.coarse().unwrap();
    let energy = |u: &VelocityField| {
        let mu = coarse.forms().mass.mul_vec(u.coeffs());
        mu.iter().zip(u.coeffs()).map(|(a, b)| a * b).sum::<f64>().sqrt()
    };
    let problem = FreeDecay(initial);
    let mut norms = vec![energy(&solver.initial_state(&problem).unwrap().coarse.unwrap().velocity)];
    let run = solver.run_with(&problem, |s, _| norms.push(energy(&s.coarse.as_ref().unwrap().velocity)));
    if let Err(e) = run {
        return outcome(false, format!("run failed: {e}"));
    }
    let steps = norms.len() - 1;
    let monotone = norms.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        monotone && steps == 100 && norms[0] > 0.0,
        format!("{steps} steps, ||U_H|| from {:.4e} to {:.4e}, non-increasing: {monotone}", norms[0], norms[steps]),
    )
}

fn main() {
    // `cargo test` passes harness flags; `--list` must report no tests.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |id: usize, name: &'static str, o: Outcome| {
        println!("[{}] criterion {id}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };

    record(3, "rate formula on published error pairs", criterion_3());
    record(4, "trilinear antisymmetry", criterion_4());
    record(5, "forcing consistency", criterion_5());
    record(6, "Newton Jacobian", criterion_6());
    record(8, "step degeneracy identities", criterion_8());
    record(10, "free-decay stability", criterion_10());

    let ex1 = run_study(&ladder(Example::Polynomial));
    let ex2 = run_study(&ladder(Example::Trigonometric));
    match (&ex1, &ex2) {
        (Ok(r1), Ok(r2)) => {
            record(1, "convergence orders, polynomial example", criterion_1(r1));
            record(2, "convergence orders, trigonometric example", criterion_2(r2));
            record(7, "discrete divergence and pressure mean", criterion_7(&[r1, r2]));
        }
        _ => {
            for (id, r) in [(1, &ex1), (2, &ex2)] {
                if let Err(e) = r {
                    record(id, "convergence study", outcome(false, e.to_string()));
                }
            }
            record(7, "discrete divergence and pressure mean", outcome(false, "a study run failed"));
        }
    }
    record(9, "two-grid versus one-grid", criterion_9());

    results.sort_by_key(|r| r.0);
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("\nacceptance summary ({:.0}s):", started.elapsed().as_secs_f64());
    for (id, name, o) in &results {
        println!("  criterion {id:>2} {:<45} {}", name, if o.pass { "PASS" } else { "FAIL" });
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
