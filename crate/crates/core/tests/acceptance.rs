//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::time::Instant;

use ilbench::cliff::CliffConfig;
use ilbench::harness::{results_csv, run_experiment, ExperimentConfig, ExperimentResult};
use ilbench::verify::{self, CheckOutcome};

const SEED: u64 = 20_240_601;

struct Line {
    id: &'static str,
    passed: bool,
    detail: String,
}

/// Randomized property check with a wall-clock limit in seconds.
fn property(id: &'static str, outcome: CheckOutcome, limit: f64) -> Line {
    let in_time = outcome.seconds < limit;
    Line {
        id,
        passed: outcome.passed && in_time,
        detail: format!("{}: {} [{:.2}s, limit {limit}s]", outcome.name, outcome.detail, outcome.seconds),
    }
}

fn figure2(result: &ExperimentResult, seconds: f64) -> Line {
    let curve = |name: &str| result.curves.iter().find(|c| c.run_group == name).expect("curve present");
    let (bc, stagger, ws800, ws3200) = (curve("BC"), curve("STAGGER"), curve("WS(800)"), curve("WS(3200)"));
    let expert = result.expert_return;
    let mut parts = Vec::new();
    let mut ok = true;

    let ret = |c: &ilbench::harness::ExperimentCurve| c.at_cost(20_000.0).map_or(f64::NAN, |p| p.return_mean);
    let a = ret(ws800) > ret(bc) && ret(ws800) > ret(stagger);
    parts.push(format!("(a) {} WS(800)={:.2} BC={:.2} STAGGER={:.2}", flag(a), ret(ws800), ret(bc), ret(stagger)));
    ok &= a;

    let target = 0.9 * expert;
    let ws_cost = ws3200.first_cost_reaching(target);
    let bc_cost = bc.first_cost_reaching(target).unwrap_or(f64::INFINITY);
    let b = ws_cost.is_some_and(|c| c < bc_cost);
    parts.push(format!("(b) {} target {target:.2}: WS(3200) at {ws_cost:?}, BC at {bc_cost}", flag(b)));
    ok &= b;

    let cfg = CliffConfig::figure2();
    let start = stagger.at_cost(0.0).map(|p| p.cov_e);
    let end = stagger.at_cost(2_000.0);
    let (rate, c) = match (start, end) {
        (Some(s), Some(e)) => {
            let rate = (e.cov_e - s) * cfg.N0 as f64 / e.annotations;
            (rate, rate <= 3.0 * 2.0 / cfg.H as f64)
        }
        _ => (f64::NAN, false),
    };
    parts.push(format!("(c) {} STAGGER E-states per annotation {rate:.4} <= {:.4}", flag(c), 6.0 / cfg.H as f64));
    ok &= c;

    let witness = bc.points.iter().find(|p| p.cov_eprime > 0.5 && p.return_mean < 0.5 * expert);
    let d = witness.is_some();
    parts.push(match witness {
        Some(p) => format!("(d) PASS BC at cost {}: cov_E' {:.3}, return {:.2}", p.cost, p.cov_eprime, p.return_mean),
        None => "(d) FAIL no BC checkpoint with cov_E' > 0.5 and return < 50%".to_string(),
    });
    ok &= d;
    parts.push(format!("{seconds:.1}s"));
    Line { id: "8", passed: ok, detail: format!("Figure-2 reproduction: {}", parts.join("; ")) }
}

fn flag(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    let mut lines = vec![
        property("1", verify::check_hellinger_sandwich(10_000, SEED), 1.0),
        property("2", verify::check_exp_weights_regret(1_000, SEED), 5.0),
        property("3", verify::check_performance_difference(500, SEED), 30.0),
        property("4", verify::check_divergence_inequalities(1_000, SEED), 120.0),
        property("5", verify::check_stagger_bound(100, 0.85, SEED), 120.0),
        property("6", verify::check_tragger_bound(100, 0.85, SEED), 120.0),
        property("7", verify::check_cliff_stationarity(), 1.0),
    ];
    for line in &lines {
        println!("criterion {:>2}: {} {}", line.id, flag(line.passed), line.detail);
    }

    let cfg = ExperimentConfig::figure2(200, SEED, 20_000.0);
    let started = Instant::now();
    let first = run_experiment(&cfg, Some(1));
    let seconds = started.elapsed().as_secs_f64();
    let line = match &first {
        Ok(result) => figure2(result, seconds),
        Err(e) => Line { id: "8", passed: false, detail: format!("experiment failed: {e}") },
    };
    println!("criterion {:>2}: {} {}", line.id, flag(line.passed), line.detail);
    lines.push(line);

    let line = property("9", verify::check_offline_coverage(2_000, 0.87, SEED), 60.0);
    println!("criterion {:>2}: {} {}", line.id, flag(line.passed), line.detail);
    lines.push(line);

    let line = match (&first, run_experiment(&cfg, Some(4))) {
        (Ok(a), Ok(b)) => {
            let (x, y) = (results_csv(&a.curves), results_csv(&b.curves));
            Line {
                id: "10",
                passed: x == y,
                detail: format!("results.csv with 1 and 4 threads: {} ({} bytes)", if x == y { "identical" } else { "differ" }, x.len()),
            }
        }
        (_, Err(e)) => Line { id: "10", passed: false, detail: format!("second run failed: {e}") },
        (Err(_), _) => Line { id: "10", passed: false, detail: "first run failed".to_string() },
    };
    println!("criterion {:>2}: {} {}", line.id, flag(line.passed), line.detail);
    lines.push(line);

    let failed: Vec<_> = lines.iter().filter(|l| !l.passed).map(|l| l.id).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", lines.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
