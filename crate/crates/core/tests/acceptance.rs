//! Acceptance criteria. Runs every criterion at its stated tolerance and
//! prints one line per criterion.

mod common;

use std::time::Instant;

use common::*;
use dualcheck::checks::{comparison_certify, FindingClass, PremiseEvidence};
use dualcheck::estimator::{duality_curves, Prepared};
use dualcheck::generator::Generator;
use dualcheck::runner::{run, Overrides, RunConfig, RunReport, ScenarioSource};
use dualcheck::scenario::Direction;
use dualcheck::space::StatePoint;
use dualcheck::trajectory::{Initial, ProcessLaw, Solver, StreamId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_builtin(name: &str, overrides: Overrides, workers: Option<usize>) -> Result<RunReport, String> {
    let mut config = RunConfig::new(ScenarioSource::Builtin(name.into()));
    config.overrides = overrides;
    config.workers = workers;
    run(&config).map_err(|e| e.to_string())
}

/// `e^{1-e}` evaluated directly, checked against an independent decimal.
fn atom_oracle() -> f64 {
    let v = (1.0 - std::f64::consts::E).exp();
    assert!((v - 0.179_374_078_734_017_18).abs() < 1e-16);
    v
}

fn counterexample_reproduction() -> Outcome {
    let start = Instant::now();
    let r = run_builtin("counterexample", Overrides::default(), None)?;
    let elapsed = start.elapsed().as_secs_f64();
    let target = atom_oracle();
    let pts = &r.curves.points;
    ensure(pts.len() == 41 && pts.iter().any(|p| p.t == 1.0), || "grid must be 0:2:0.05 with T = 1".into())?;
    let g_max = pts.iter().fold(0.0f64, |m, p| m.max(p.g.value.abs()));
    ensure(g_max <= 1e-12, || format!("max |g| = {g_max:e}"))?;
    let f_off = pts.iter().filter(|p| p.t != 1.0).fold(0.0f64, |m, p| m.max(p.f.value.abs()));
    ensure(f_off <= 1e-12, || format!("max |f(T)| off T = 1 is {f_off:e}"))?;
    let f1 = r.curves.at(1.0).unwrap().f.value;
    let rel = (f1 - target).abs() / target;
    ensure(rel <= 1e-9, || format!("f(1) = {f1}, relative error {rel:e}"))?;
    ensure(r.findings.len() == 1, || format!("{} findings", r.findings.len()))?;
    let finding = &r.findings[0];
    ensure(finding.t == 1.0 && finding.class == FindingClass::NullSetAtom, || format!("{finding:?}"))?;
    ensure(elapsed < 5.0, || format!("runtime {elapsed:.2} s"))?;
    Ok(format!("f(1) = {f1:.10}, rel err {rel:.1e}, one NullSetAtom at T = 1, {elapsed:.2} s"))
}

fn integrated_identity_on_counterexample() -> Outcome {
    let r = run_builtin("counterexample", Overrides::default(), None)?;
    let id = &r.identity;
    ensure(id.horizon == 2.0, || format!("horizon {}", id.horizon))?;
    let diff = (id.lhs - id.rhs).abs();
    ensure(diff <= 1e-10, || format!("|{} - {}| = {diff:e}", id.lhs, id.rhs))?;
    Ok(format!("lhs = {:e}, rhs = {:e}, |diff| = {diff:e}", id.lhs, id.rhs))
}

fn martingale_residual_on_counterexample() -> Outcome {
    let r = run_builtin("counterexample", Overrides::default(), None)?;
    let mut worst = 0.0f64;
    let mut seen = 0;
    for rec in &r.residuals {
        let m = rec.outcome.as_ref().map_err(Clone::clone)?;
        let param = r
            .scenario
            .checks
            .test_functions
            .iter()
            .find(|f| f.id == m.test_function)
            .and_then(|f| f.param)
            .ok_or("test function without parameter")?;
        ensure(m.times.first() == Some(&0.0) && m.times.last() == Some(&2.0), || "times must span [0, 2]".into())?;
        for &v in &m.residuals {
            worst = worst.max((v - (-param).exp()).abs());
        }
        seen += 1;
    }
    ensure(seen == 6, || format!("{seen} residual curves, expected 3 per process"))?;
    ensure(worst <= 1e-10, || format!("max |M_t - e^(-r)| = {worst:e}"))?;
    Ok(format!("r in {{0.5, 1, 2}}, both processes, max |M_t - e^(-r)| = {worst:.1e}"))
}

/// Closed-form distribution of a two-state chain with rates `a` (0 to 1)
/// and `b` (1 to 0).
fn two_state_law(a: f64, b: f64, p0: [f64; 2], t: f64) -> [f64; 2] {
    let s = a + b;
    let e = (-s * t).exp();
    let p = [[(b + a * e) / s, a * (1.0 - e) / s], [b * (1.0 - e) / s, (a + b * e) / s]];
    [p0[0] * p[0][0] + p0[1] * p[1][0], p0[0] * p[0][1] + p0[1] * p[1][1]]
}

/// Matrix-exponential oracle for the two-state pair: `(g(T), f(T))`, with the
/// time integral done by composite Simpson at step at most `1e-3`.
fn two_state_oracle(big_t: f64) -> (f64, f64) {
    let q1 = [[-1.0, 1.0], [2.0, -2.0]];
    let q2 = [[-0.5, 0.5], [1.5, -1.5]];
    let (p1_0, p2_0) = ([1.0, 0.0], [0.0, 1.0]);
    let law1 = |t| two_state_law(q1[0][1], q1[1][0], p1_0, t);
    let law2 = |t| two_state_law(q2[0][1], q2[1][0], p2_0, t);
    let (p1_t, p2_t) = (law1(big_t), law2(big_t));
    let g = (p1_t[0] * p2_0[0] + p1_t[1] * p2_0[1]) - (p1_0[0] * p2_t[0] + p1_0[1] * p2_t[1]);
    let integrand = |t: f64| {
        let (a, b) = (law1(t), law2(big_t - t));
        let mut acc = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                acc += a[i] * b[j] * (q1[i][j] - q2[j][i]);
            }
        }
        acc
    };
    if big_t == 0.0 {
        return (g, 0.0);
    }
    let n = {
        let n = (big_t / 1e-3).ceil() as usize;
        n + n % 2
    };
    let h = big_t / n as f64;
    let mut sum = integrand(0.0) + integrand(big_t);
    for k in 1..n {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * integrand(k as f64 * h);
    }
    (g, sum * h / 3.0)
}

fn finite_state_everywhere_equality() -> Outcome {
    let r = run_builtin("two-state-exact", Overrides::default(), None)?;
    let pts: Vec<_> = r.curves.points.iter().filter(|p| p.t > 0.0).collect();
    ensure(pts.len() == 20, || format!("{} grid points", pts.len()))?;
    ensure(pts.iter().all(|p| p.atoms.is_empty()), || "unexpected atoms".into())?;
    let (mut gap, mut g_err, mut f_err) = (0.0f64, 0.0f64, 0.0f64);
    for p in &pts {
        let (g, f) = two_state_oracle(p.t);
        gap = gap.max((p.g.value - p.f.value).abs());
        g_err = g_err.max((p.g.value - g).abs());
        f_err = f_err.max((p.f.value - f).abs());
    }
    ensure(gap <= 1e-8, || format!("max |g - f| = {gap:e}"))?;
    ensure(g_err <= 1e-6 && f_err <= 1e-6, || format!("oracle mismatch g {g_err:e}, f {f_err:e}"))?;
    Ok(format!("max |g - f| = {gap:.1e}; vs oracle: g {g_err:.1e}, f {f_err:.1e}"))
}

fn corollary_certificate() -> Outcome {
    let r = run_builtin("flow-ordered", Overrides::default(), None)?;
    let cert = r.comparison.as_ref().ok_or("no certificate requested")?;
    ensure(cert.direction == Direction::AtLeast && cert.pass, || format!("{cert:?}"))?;
    ensure(cert.premise == PremiseEvidence::Proven, || format!("premise {:?}", cert.premise))?;
    for p in &r.curves.points {
        let oracle = (-0.5 * (p.t / 2.0).exp()).exp() - (-0.5 * p.t.exp()).exp();
        ensure(p.g.value >= -1e-10, || format!("g({}) = {}", p.t, p.g.value))?;
        ensure((p.g.value - oracle).abs() <= 1e-12, || format!("g({}) = {} vs {oracle}", p.t, p.g.value))?;
    }
    let swapped = r.scenario.swapped();
    let report = duality_curves(&swapped).map_err(|e| e.to_string())?;
    let prepared = Prepared::new(&swapped).map_err(|e| e.to_string())?;
    let reversed = comparison_certify(&prepared, Direction::AtMost, &report);
    ensure(reversed.pass, || format!("reversed certificate failed: {reversed:?}"))?;
    let wrong = comparison_certify(&prepared, Direction::AtLeast, &report);
    ensure(
        matches!(wrong.premise, PremiseEvidence::Violated { .. }) && !wrong.pass,
        || "swapped pair must not certify >=".into(),
    )?;
    for (a, b) in r.curves.points.iter().zip(&report.points) {
        ensure(a.g.value == -b.g.value, || format!("swapped g({}) is not -g", a.t))?;
    }
    Ok("g >= 0 at all 21 grid points (proven premise); swapped pair certifies <=".into())
}

fn monte_carlo_soundness() -> Outcome {
    let exact = run_builtin("two-state-exact", Overrides::default(), None)?;
    let start = Instant::now();
    let mc = run_builtin("two-state-mc", Overrides::default(), None)?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(mc.scenario.replicas().map(|r| r.0) == Some(10_000), || "expected 10^4 replicas".into())?;
    let mut covered = 0;
    let mut total = 0;
    for (m, e) in mc.curves.points.iter().zip(&exact.curves.points).filter(|(m, _)| m.t > 0.0) {
        let (lo, hi) = m.g.ci95().ok_or("Monte Carlo point without CI")?;
        total += 1;
        covered += (lo <= e.g.value && e.g.value <= hi) as usize;
    }
    ensure(total == 20 && covered >= 17, || format!("coverage {covered}/{total}"))?;
    ensure(elapsed < 60.0, || format!("runtime {elapsed:.1} s"))?;
    let sizes = [1_000usize, 4_000, 16_000];
    let mut scaled: Vec<Vec<f64>> = Vec::new();
    for n in sizes {
        let r = run_builtin(
            "two-state-mc",
            Overrides {
                replicas: Some(n),
                ..Overrides::default()
            },
            None,
        )?;
        scaled.push(
            r.curves
                .points
                .iter()
                .filter(|p| p.t > 0.0)
                .map(|p| p.g.std_err.unwrap() * (n as f64).sqrt())
                .collect(),
        );
    }
    let mut worst = 1.0f64;
    for k in 0..scaled[0].len() {
        let c: Vec<f64> = scaled.iter().map(|v| v[k]).collect();
        let (lo, hi) = c.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        worst = worst.max(hi / lo);
    }
    ensure(worst <= 1.5, || format!("se * sqrt(N) varies by a factor {worst:.3}"))?;
    Ok(format!("coverage {covered}/20, se*sqrt(N) spread {worst:.3}, {elapsed:.1} s"))
}

fn determinism() -> Outcome {
    let base = Overrides::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut csvs = Vec::new();
    let mut jsons = Vec::new();
    for (k, workers) in [1usize, 1, 8].into_iter().enumerate() {
        let mut config = RunConfig::new(ScenarioSource::Builtin("two-state-mc".into()));
        config.overrides = base.clone();
        config.workers = Some(workers);
        config.out_dir = Some(dir.path().join(format!("run{k}")));
        let r = run(&config).map_err(|e| e.to_string())?;
        ensure(r.workers == workers, || format!("asked for {workers} workers, got {}", r.workers))?;
        let out = config.out_dir.unwrap();
        csvs.push(std::fs::read(out.join("curves.csv")).map_err(|e| e.to_string())?);
        jsons.push(std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure(csvs[0] == csvs[1] && jsons[0] == jsons[1], || "same seed produced different bytes".into())?;
    ensure(csvs[0] == csvs[2] && jsons[0] == jsons[2], || "1 vs 8 workers produced different bytes".into())?;
    Ok(format!("{} CSV bytes identical across repeat and 1 vs 8 workers", csvs[0].len()))
}

fn property_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut cases = 0usize;
    let mut count = |r: Result<(), String>| -> Result<(), String> {
        cases += 1;
        r
    };
    let rates = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n * (n - 1)).map(|_| rng.random_range(0.0..3.0)).collect() };

    for _ in 0..20 {
        let a = flow(DRIFTS[rng.random_range(0..DRIFTS.len())]);
        let (f, g) = (rng.random_range(0..SMOOTH_FUNCTIONS.len()), rng.random_range(0..SMOOTH_FUNCTIONS.len()));
        let (alpha, beta) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        for _ in 0..100 {
            let x = StatePoint::real1(rng.random_range(0.01..5.0));
            count(linearity(&a, SMOOTH_FUNCTIONS[f], SMOOTH_FUNCTIONS[g], alpha, beta, &x))?;
        }
        let n = rng.random_range(2..6);
        let r = rates(&mut rng, n);
        for a in [Generator::rate_matrix(rate_matrix(n, &r)), walk(n, r[0], r[1])] {
            let (f, g) = (rng.random_range(0..FINITE_FUNCTIONS.len()), rng.random_range(0..FINITE_FUNCTIONS.len()));
            for x in 0..n {
                count(linearity(&a, FINITE_FUNCTIONS[f], FINITE_FUNCTIONS[g], alpha, beta, &StatePoint::Label(x)))?;
                count(conservation(&a, alpha, &StatePoint::Label(x)))?;
            }
        }
        count(conservation(&flow(DRIFTS[0]), alpha, &StatePoint::real1(rng.random_range(0.01..5.0))))?;
    }

    let (m1, m2) = masked_pair();
    for _ in 0..1_000 {
        let (x1, x2) = (StatePoint::real1(rng.random_range(0.01..4.0)), StatePoint::real1(rng.random_range(0.01..4.0)));
        let (a1, a2) = (flow(DRIFTS[rng.random_range(0..DRIFTS.len())]), flow(DRIFTS[rng.random_range(0..DRIFTS.len())]));
        let psi = SMOOTH_PSI[rng.random_range(0..SMOOTH_PSI.len())];
        count(error_term_consistency(&a1, &a2, psi, &x1, &x2))?;
        count(swap_symmetry(&a1, &a2, psi, &x1, &x2))?;
        count(error_term_consistency(&m1, &m2, "exp(-x1 * x2)", &x1, &x2))?;
        count(swap_symmetry(&m1, &m2, "exp(-x1 * x2)", &x1, &x2))?;
    }
    for _ in 0..200 {
        let n = rng.random_range(2..5);
        let (r1, r2) = (rates(&mut rng, n), rates(&mut rng, n));
        let (a1, a2) = (Generator::rate_matrix(rate_matrix(n, &r1)), walk(n, r2[0], r2[1]));
        let psi = FINITE_PSI[rng.random_range(0..FINITE_PSI.len())];
        let (x1, x2) = (StatePoint::Label(rng.random_range(0..n)), StatePoint::Label(rng.random_range(0..n)));
        count(error_term_consistency(&a1, &a2, psi, &x1, &x2))?;
        count(swap_symmetry(&a1, &a2, psi, &x1, &x2))?;
    }

    for _ in 0..100 {
        let n = rng.random_range(2..6);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = w.iter().sum();
        let p0: Vec<f64> = w.iter().map(|v| v / total).collect();
        let q = rate_matrix(n, &rates(&mut rng, n));
        count(semigroup_composition(&q, &p0, rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)))?;
    }

    count(rk4_order(1.0, 1.0, 0.1))?;
    for _ in 0..20 {
        count(rk4_order(rng.random_range(0.2..1.5), rng.random_range(0.5..2.0), 0.1))?;
    }

    for replica in 0..200 {
        let n = rng.random_range(2..6);
        let chain = ProcessLaw::new(
            Generator::rate_matrix(rate_matrix(n, &rates(&mut rng, n))),
            Initial::Point(StatePoint::Label(0)),
            Solver::gillespie(),
        );
        let jumps = ProcessLaw::new(walk(n, 2.0, 1.0), Initial::Point(StatePoint::Label(0)), Solver::gillespie());
        for law in [&chain, &jumps] {
            count(cadlag(law, 3.0, StreamId::new(99, 1, replica)))?;
        }
    }
    Ok(format!("{cases} cases: linearity, conservation, ErrorTerm consistency, symmetry, semigroup, RK4 order, cadlag"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("counterexample reproduction", counterexample_reproduction),
        ("integrated identity, S = 2", integrated_identity_on_counterexample),
        ("martingale residual on the counterexample flow", martingale_residual_on_counterexample),
        ("exact finite-state everywhere equality", finite_state_everywhere_equality),
        ("corollary certificate", corollary_certificate),
        ("Monte Carlo statistical soundness", monte_carlo_soundness),
        ("determinism", determinism),
        ("property suite", property_suite),
    ];
    let mut failed = 0;
    for (k, (name, criterion)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(criterion).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
